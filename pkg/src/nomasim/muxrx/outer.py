"""Outer receiver loop: detection, demapping, decoding and interference cancellation.

Three strategies share the same building blocks:

* ``hard_sic``  every round, users whose CRC passes are re-encoded and
  subtracted; remaining users are detected again without priors.
* ``soft_sic``  users are visited one at a time, most reliable first (mean
  |LLR| after detection, or received power with ``sic_order="by_power"``);
  each visit detects with the current soft priors of everyone else and decodes
  that user, cancelling it when its CRC passes.
* ``hybrid_pic`` all users are processed in parallel; CRC-passing users are
  cancelled, the rest exchange decoder extrinsics as detector priors.

A frame stops once every user passes, when its CRC pattern does not change
between two consecutive rounds, or after ``max_outer_iters`` rounds.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..channel import ChannelRealization
from ..errors import ConfigurationError
from ..fec import bcjr_decode, crc_check, hard_decision
from .demap import demap_to_llrs
from .detectors import DetectorConfig, detect
from .problem import RxProblem, block_bit_priors, build_problem, layer_log_priors

STRATEGIES = ("hard_sic", "soft_sic", "hybrid_pic")
SIC_ORDERS = ("by_postdecode_metric", "by_power")


@dataclass
class OuterLoopConfig:
    mode: str = "hybrid_pic"
    max_outer_iters: int = 5
    sic_order: str = "by_postdecode_metric"

    def __post_init__(self):
        if self.mode not in STRATEGIES:
            raise ConfigurationError(f"unknown outer-loop mode {self.mode!r}")
        if self.max_outer_iters < 1:
            raise ConfigurationError("max_outer_iters must be >= 1")
        if self.sic_order not in SIC_ORDERS:
            raise ConfigurationError(f"unknown sic_order {self.sic_order!r}")


@dataclass
class ReceiverResult:
    payload: np.ndarray       # (F, U, payload_bits) decoded payload bits
    crc_ok: np.ndarray        # (F, U)
    rounds: np.ndarray        # (F,) outer rounds used
    crc_history: np.ndarray   # (R, F, U) CRC state after each round (held after stopping)

    def block_errors(self, payloads) -> np.ndarray:
        """(F, U) True where a block is in error: CRC fails or payload differs."""
        wrong = np.any(self.payload != np.asarray(payloads, np.uint8), axis=-1)
        return ~self.crc_ok | wrong


def decode_user(chain, coded_llrs):
    """Decode (n, coded_len) LLRs -> (payload, crc_ok, coded extrinsic)."""
    llrs = np.atleast_2d(coded_llrs)
    if chain.fec_params is None:
        info = hard_decision(llrs)
        ext = np.zeros_like(llrs)
    else:
        r = bcjr_decode(llrs, params=chain.fec_params)
        info, ext = r.hard_bits, r.coded_extrinsic_llrs
    ok = (crc_check(info, chain.crc_params) if chain.crc_params is not None
          else np.ones(info.shape[0], bool))
    return info[:, :chain.payload_bits], np.atleast_1d(ok), ext


class _State:
    """Per-frame receiver state kept across outer rounds."""

    def __init__(self, problem: RxProblem, chains):
        F, U = problem.n_frames, len(chains)
        self.payload = np.zeros((F, U, chains[0].payload_bits), np.uint8)
        self.crc_ok = np.zeros((F, U), bool)
        self.cancelled = np.zeros((F, U), bool)
        self.ext = [np.zeros((F, c.coded_len)) for c in chains]
        self.y = problem.y.copy()
        self.gains = problem.gains.copy()

    def cancel(self, problem, chains, frames, u):
        """Subtract user ``u``'s re-encoded signal in ``frames`` and null its gains."""
        if frames.size == 0:
            return
        chips, _ = chains[u].transmit(self.payload[frames, u])
        # the gains already carry the power offset that transmit() applied
        x = chips.reshape(frames.size, problem.n_blocks, problem.n_re) / chains[u].amplitude
        self.y[frames] -= self.gains[frames, u] * x
        self.gains[frames, u] = 0.0
        self.cancelled[frames, u] = True
        self.ext[u][frames] = 0.0


def _sub_problem(problem, state, frames):
    return RxProblem(state.y[frames], state.gains[frames], problem.noise_var,
                     problem.layers, problem.layer_users)


def _detect_and_demap(problem, chains, state, frames, detector, use_priors):
    sub = _sub_problem(problem, state, frames)
    if use_priors:
        coded = [state.ext[u][frames] for u in range(len(chains))]
        pri = layer_log_priors(sub, chains, coded, detector.llr_clamp)
        bits = block_bit_priors(sub, chains, coded, detector.llr_clamp)
    else:
        pri, bits = None, None
    post = detect(sub, detector, pri)
    return demap_to_llrs(post, chains, bits, detector.llr_clamp)


def _received_power(problem) -> np.ndarray:
    return np.mean(np.abs(problem.gains) ** 2, axis=(2, 3))      # (F, U)


def run_receiver(problem: RxProblem, chains, detector: DetectorConfig | None = None,
                 outer: OuterLoopConfig | None = None) -> ReceiverResult:
    detector = detector or DetectorConfig()
    outer = outer or OuterLoopConfig()
    F, U = problem.n_frames, len(chains)
    st = _State(problem, chains)
    active = np.ones(F, bool)
    rounds = np.zeros(F, int)
    history = []
    prev = None
    for r in range(outer.max_outer_iters):
        frames = np.flatnonzero(active)
        if frames.size == 0:
            break
        rounds[frames] += 1
        if outer.mode == "soft_sic":
            _soft_sic_round(problem, chains, st, frames, detector, outer.sic_order)
        else:
            use_priors = outer.mode == "hybrid_pic" and r > 0
            llrs = _detect_and_demap(problem, chains, st, frames, detector, use_priors)
            for u in range(U):
                todo = frames[~st.cancelled[frames, u]]
                if todo.size == 0:
                    continue
                rows = np.searchsorted(frames, todo)
                pay, ok, ext = decode_user(chains[u], llrs[u][rows])
                st.payload[todo, u] = pay
                st.crc_ok[todo, u] = ok
                st.ext[u][todo] = ext
            for u in range(U):
                st.cancel(problem, chains, frames[st.crc_ok[frames, u] & ~st.cancelled[frames, u]], u)
        history.append(st.crc_ok.copy())
        done = st.crc_ok.all(axis=1)
        if prev is not None:
            done |= np.all(prev == st.crc_ok, axis=1)
        active &= ~done
        prev = st.crc_ok.copy()
    return ReceiverResult(st.payload, st.crc_ok, rounds, np.stack(history))


def _soft_sic_round(problem, chains, st, frames, detector, order_rule):
    U = len(chains)
    visited = np.zeros((frames.size, U), bool)
    power = _received_power(problem)[frames]
    for _ in range(U):
        llrs = _detect_and_demap(problem, chains, st, frames, detector, True)
        if order_rule == "by_power":
            score = power.copy()
        else:
            score = np.stack([np.mean(np.abs(l), axis=-1) for l in llrs], axis=1)
        score[visited | st.cancelled[frames]] = -np.inf
        sel = np.argmax(score, axis=1)
        live = np.isfinite(score[np.arange(frames.size), sel])
        visited[np.arange(frames.size), sel] = True
        for u in range(U):
            rows = np.flatnonzero((sel == u) & live)
            if rows.size == 0:
                continue
            pick = frames[rows]
            pay, ok, ext = decode_user(chains[u], llrs[u][rows])
            st.payload[pick, u] = pay
            st.crc_ok[pick, u] = ok
            st.ext[u][pick] = ext
            st.cancel(problem, chains, pick[ok], u)
        if not live.any():
            break


def receive(y, channel: ChannelRealization, chains, detector: DetectorConfig | None = None,
            outer: OuterLoopConfig | None = None) -> ReceiverResult:
    """Convenience wrapper: build the problem from samples and run the receiver."""
    return run_receiver(build_problem(y, channel, chains), chains, detector, outer)
