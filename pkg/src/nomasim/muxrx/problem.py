"""Block-level view of a multi-user reception problem.

Every user's transmission is split into :class:`~nomasim.txchain.Layer` objects;
per block ``b`` of ``K`` REs the receiver sees

    y[b] = sum_l  g[user(l), b] * alphabet_l[a_l]  + noise

where ``g`` already contains the user's power offset. Detectors work on this
representation with a leading frame axis so that many frames are detected at once.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..channel import ChannelRealization
from ..errors import ConfigurationError, ContractError
from ..fec import DEFAULT_LLR_CLAMP, clamp_llrs
from ..txchain import Layer, TxChain


@dataclass
class RxProblem:
    y: np.ndarray            # (F, NB, K)
    gains: np.ndarray        # (F, U, NB, K)
    noise_var: float
    layers: list[Layer]
    layer_users: list[int]   # index into the user axis of ``gains``

    @property
    def n_frames(self) -> int:
        return self.y.shape[0]

    @property
    def n_blocks(self) -> int:
        return self.y.shape[1]

    @property
    def n_re(self) -> int:
        return self.y.shape[2]

    @property
    def n_users(self) -> int:
        return self.gains.shape[1]

    def layer_gain(self, i: int) -> np.ndarray:
        return self.gains[:, self.layer_users[i]]

    def effective_alphabet(self, i: int) -> np.ndarray:
        """(F, NB, A, K) received block vectors of layer ``i`` for every label."""
        return self.layer_gain(i)[:, :, None, :] * self.layers[i].alphabet

    def columns(self, i: int) -> np.ndarray:
        """(F, NB, K, d) effective basis of layer ``i``."""
        return self.layer_gain(i)[..., None] * self.layers[i].basis

    def subset(self, frames) -> "RxProblem":
        return RxProblem(self.y[frames], self.gains[frames], self.noise_var,
                         self.layers, self.layer_users)


def build_problem(y, channel: ChannelRealization, signatures) -> RxProblem:
    """Assemble an :class:`RxProblem` from received samples and signatures.

    ``signatures`` may be :class:`NomaSignature` or :class:`TxChain` objects;
    their order defines the user axis of ``channel.gains``. Power offsets are
    folded into the gains.
    """
    sigs = [s.signature if isinstance(s, TxChain) else s for s in signatures]
    if not sigs:
        raise ContractError("at least one signature is required")
    K = sigs[0].n_re
    if any(s.n_re != K for s in sigs):
        raise ConfigurationError("all signatures in one problem must share the block length")
    yy = np.asarray(y, dtype=complex)
    gains = np.asarray(channel.gains, dtype=complex)
    if yy.ndim == 1:
        yy, gains = yy[None], gains[None]
    F, n_res = yy.shape
    if gains.shape != (F, len(sigs), n_res):
        raise ContractError(f"gains shape {gains.shape} inconsistent with y {yy.shape}")
    if n_res % K:
        raise ContractError(f"{n_res} REs is not a whole number of {K}-RE blocks")
    NB = n_res // K
    amp = np.array([10.0 ** (s.power_offset_db / 20.0) for s in sigs])
    g = (gains * amp[:, None]).reshape(F, len(sigs), NB, K)
    layers, owners = [], []
    for u, s in enumerate(sigs):
        for layer in s.layers:
            layers.append(layer)
            owners.append(u)
    return RxProblem(yy.reshape(F, NB, K), g, float(channel.noise_var), layers, owners)


def bit_log_probs(llrs):
    """(log P[b=0], log P[b=1]) for LLRs ``ln(P0/P1)``."""
    L = np.asarray(llrs, dtype=float)
    return -np.logaddexp(0.0, -L), -np.logaddexp(0.0, L)


def layer_log_priors(problem: RxProblem, chains, coded_llrs,
                     clamp: float = DEFAULT_LLR_CLAMP) -> list[np.ndarray]:
    """Per-layer log prior over labels, (F, NB, A), from per-user coded-bit LLRs.

    ``coded_llrs[u]`` is (F, coded_len) in decoder order, or ``None`` for no prior.
    """
    block = [None if c is None else ch.coded_llrs_to_block(clamp_llrs(c, clamp))
             for ch, c in zip(chains, coded_llrs)]
    out = []
    for layer, u in zip(problem.layers, problem.layer_users):
        A = layer.size
        if block[u] is None:
            out.append(np.full((problem.n_frames, problem.n_blocks, A), -np.log(A)))
            continue
        Lb = block[u][..., layer.bit_offset:layer.bit_offset + layer.n_bits]
        lp0, lp1 = bit_log_probs(Lb)
        lab = layer.labels.astype(bool)                     # (A, nb)
        out.append(np.where(lab, lp1[..., None, :], lp0[..., None, :]).sum(axis=-1))
    return out


def block_bit_priors(problem: RxProblem, chains, coded_llrs,
                     clamp: float = DEFAULT_LLR_CLAMP) -> list[np.ndarray | None]:
    """Per-layer prior bit LLRs (F, NB, nb) used to form detector extrinsics."""
    block = [None if c is None else ch.coded_llrs_to_block(clamp_llrs(c, clamp))
             for ch, c in zip(chains, coded_llrs)]
    out = []
    for layer, u in zip(problem.layers, problem.layer_users):
        b = block[u]
        out.append(None if b is None else b[..., layer.bit_offset:layer.bit_offset + layer.n_bits])
    return out
