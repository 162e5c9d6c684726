"""Grant-free access Monte Carlo: traffic, contention regions, retransmissions, PDR.

Each replica is an independent population of ``n_users`` devices sharing one
contention region per slot. Devices keep a FIFO of packets; the head packet is
sent in every slot until it is delivered, exhausts ``max_attempts`` or outlives
``latency_budget_slots`` (a packet arriving in slot ``a`` must be delivered by
slot ``a + budget - 1``). Every attempt draws a fresh signature and fresh fading.

Two access schemes share one region of ``n_blocks * 4`` REs:

* ``noma``: signature ``j`` is SCMA codebook ``j mod 6`` (4 REs, 6 masks) with
  scrambler seed ``j``; the receiver runs the configured multi-user detector.
* ``ofdma_baseline``: signature ``j`` is the ``j``-th RE of every 4-RE block
  (4 orthogonal sub-blocks, each carrying one packet with QPSK). Two users on
  the same sub-block both fail.

Streams are derived from (master seed, tag, [replica, slot]) so both schemes
and all arrival rates replay the same arrivals, fading and noise.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .muxrx import (DetectorConfig, MPA_RE_COMBINATION_LIMIT, OuterLoopConfig, RxProblem,
                    run_receiver)
from .seeds import stream_rng
from .sigpool import build_scma_codebook, build_sparse_patterns
from .txchain import NomaSignature, TxChain

SCHEMES = ("noma", "ofdma_baseline")
POLICIES = ("random", "preconfigured")
_RES_PER_BLOCK = 4
_N_CODEBOOKS = 6


@dataclass
class TrafficConfig:
    n_users: int = 24
    packet_arrival_rate: float = 0.02
    packet_bits: int = 32
    max_attempts: int = 4
    latency_budget_slots: int = 4

    def __post_init__(self):
        if self.n_users < 1:
            raise ConfigurationError("n_users must be >= 1")
        if not self.packet_arrival_rate >= 0:
            raise ConfigurationError("packet_arrival_rate must be >= 0")
        if self.packet_bits < 1:
            raise ConfigurationError("packet_bits must be >= 1")
        if self.max_attempts < 1:
            raise ConfigurationError("max_attempts must be >= 1")
        if self.latency_budget_slots < 1:
            raise ConfigurationError("latency_budget_slots must be >= 1")

    def with_rate(self, lam: float) -> "TrafficConfig":
        return TrafficConfig(self.n_users, lam, self.packet_bits, self.max_attempts,
                             self.latency_budget_slots)


@dataclass
class PhyConfig:
    """Physical-layer settings of a contention region."""

    pool_size: int | None = None          # default 6 (noma) / 4 (ofdma)
    policy: str = "random"
    snr_db: float = 10.0
    snr_spread_db: float = 3.0            # per-user offset ~ U[-spread, spread]
    block_len_res: int = 4
    detector: DetectorConfig = field(default_factory=lambda: DetectorConfig("mpa"))
    outer: OuterLoopConfig = field(default_factory=lambda: OuterLoopConfig("hybrid_pic", 5))
    fallback_detector: DetectorConfig = field(default_factory=lambda: DetectorConfig("epa"))

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ConfigurationError(f"unknown signature policy {self.policy!r}")
        if self.pool_size is not None and self.pool_size < 1:
            raise ConfigurationError("pool_size must be >= 1")
        if self.snr_spread_db < 0:
            raise ConfigurationError("snr_spread_db must be >= 0")

    def pool(self, scheme: str) -> int:
        if self.pool_size is not None:
            if scheme == "ofdma_baseline" and self.pool_size > _RES_PER_BLOCK:
                raise ConfigurationError("the OFDMA baseline has at most 4 sub-blocks")
            return self.pool_size
        return _N_CODEBOOKS if scheme == "noma" else _RES_PER_BLOCK


@dataclass
class ContentionRegion:
    slot_index: int
    re_count: int
    active_users: list = field(default_factory=list)
    signature_choices: list = field(default_factory=list)
    outcomes: dict = field(default_factory=dict)    # user -> {"decoded", "collided"}

    @property
    def n_collisions(self) -> int:
        return len(self.signature_choices) - len(set(self.signature_choices))


@dataclass
class GrantFreeCounts:
    """Additive tallies; merging partial runs is plain summation."""

    offered: np.ndarray        # per user
    delivered: np.ndarray
    dropped: np.ndarray
    in_flight: np.ndarray
    late: np.ndarray           # deliveries beyond the budget (always 0 by construction)
    transmissions: int = 0
    collisions: int = 0

    @classmethod
    def zeros(cls, n: int) -> "GrantFreeCounts":
        z = lambda: np.zeros(n, np.int64)  # noqa: E731
        return cls(z(), z(), z(), z(), z())

    def __add__(self, other: "GrantFreeCounts") -> "GrantFreeCounts":
        return GrantFreeCounts(
            np.concatenate([self.offered, other.offered]),
            np.concatenate([self.delivered, other.delivered]),
            np.concatenate([self.dropped, other.dropped]),
            np.concatenate([self.in_flight, other.in_flight]),
            np.concatenate([self.late, other.late]),
            self.transmissions + other.transmissions,
            self.collisions + other.collisions)


@dataclass
class GrantFreeReport:
    pdr: float
    offered_par: float
    satisfied_user_ratio: float
    collision_rate: float
    offered: int
    delivered: int
    dropped: int
    in_flight: int
    transmissions: int
    collisions: int
    per_user: np.ndarray       # (n_users_total, 3): offered, delivered, dropped


def draw_arrivals(traffic: TrafficConfig, n_slots: int, stream_seed: int) -> list[list[int]]:
    """Per-user arrival slots (Bernoulli with probability ``min(lambda, 1)`` per slot).

    Arrivals are thresholded uniforms, so for one seed the arrival sets are
    nested in lambda.
    """
    u = np.random.default_rng(stream_seed).random((n_slots, traffic.n_users))
    hit = u < min(traffic.packet_arrival_rate, 1.0)
    return [np.flatnonzero(hit[:, k]).tolist() for k in range(traffic.n_users)]


def select_signature(user: int, pool_size: int, policy: str = "random",
                     stream_seed: int = 0) -> int:
    if pool_size < 1:
        raise ConfigurationError("pool_size must be >= 1")
    if policy == "preconfigured":
        return user % pool_size
    if policy != "random":
        raise ConfigurationError(f"unknown signature policy {policy!r}")
    return int(np.random.default_rng(stream_seed).integers(pool_size))


def region_signature(scheme: str, index: int) -> NomaSignature:
    if scheme == "noma":
        cb = build_scma_codebook(layer=index % _N_CODEBOOKS)
        return NomaSignature(index, "joint_codebook", scrambler_seed=index, codebook=cb)
    if scheme == "ofdma_baseline":
        pat = build_sparse_patterns(_RES_PER_BLOCK, 1)[index]
        return NomaSignature(index, "rep_sparse", scrambler_seed=index, pattern=pat)
    raise ConfigurationError(f"unknown scheme {scheme!r}")


class _ChainCache:
    def __init__(self, scheme: str, packet_bits: int):
        self.scheme, self.packet_bits = scheme, packet_bits
        self._c: dict[int, TxChain] = {}

    def __getitem__(self, j: int) -> TxChain:
        if j not in self._c:
            self._c[j] = TxChain(region_signature(self.scheme, j), self.packet_bits)
        return self._c[j]


def region_re_count(packet_bits: int) -> int:
    return TxChain(region_signature("noma", 0), packet_bits).n_re_total


def _mpa_fits(chains) -> bool:
    deg = np.zeros(_RES_PER_BLOCK, np.int64)
    for c in chains:
        deg += c.signature.mask.astype(np.int64)
    return 4.0 ** deg.max() <= MPA_RE_COMBINATION_LIMIT


def decode_regions(scheme: str, entries, cache: _ChainCache, phy: PhyConfig, noise_var: float):
    """Decode a batch of regions that share the same sorted signature tuple.

    ``entries`` is a list of (choices, gains (n, R), noise (R,), payloads (n, bits)).
    Returns a bool array (n_regions, n) of successful deliveries.
    """
    choices = entries[0][0]
    chains = [cache[j] for j in choices]
    F = len(entries)
    n = len(chains)
    NB = chains[0].n_blocks
    gains = np.stack([e[1] for e in entries])                     # (F, n, R)
    y = np.stack([e[2] for e in entries]).astype(complex)
    pays = np.stack([e[3] for e in entries])                      # (F, n, bits)
    for i, ch in enumerate(chains):
        chips, _ = ch.transmit(pays[:, i])
        y += gains[:, i] * chips
    amp = np.array([c.amplitude for c in chains])
    prob = RxProblem(y.reshape(F, NB, _RES_PER_BLOCK),
                     (gains * amp[:, None]).reshape(F, n, NB, _RES_PER_BLOCK),
                     noise_var, [la for c in chains for la in c.layers],
                     [u for u, c in enumerate(chains) for _ in c.layers])
    det = phy.detector
    if det.kind == "mpa" and not _mpa_fits(chains):
        det = phy.fallback_detector
    res = run_receiver(prob, chains, det, phy.outer)
    return ~res.block_errors(pays)


def simulate_region(region: ContentionRegion, scheme: str, gains, noise, payloads,
                    phy: PhyConfig, noise_var: float, cache: _ChainCache | None = None):
    """Decode one region; fills ``region.outcomes`` and returns it.

    ``gains`` (n_active, R), ``noise`` (R,), ``payloads`` (n_active, bits) follow
    ``region.active_users`` order.
    """
    cache = cache or _ChainCache(scheme, np.asarray(payloads).shape[-1])
    region.outcomes = {}
    if not region.active_users:
        return region
    ch = np.asarray(region.signature_choices)
    counts = np.bincount(ch, minlength=ch.max() + 1)
    collided = counts[ch] > 1
    ok = np.zeros(len(ch), bool)
    run = np.ones(len(ch), bool) if scheme == "noma" else ~collided
    idx = np.flatnonzero(run)
    if idx.size:
        order = idx[np.argsort(ch[idx], kind="stable")]
        key = tuple(int(c) for c in ch[order])
        dec = decode_regions(scheme, [(key, np.asarray(gains)[order], np.asarray(noise),
                                       np.asarray(payloads)[order])], cache, phy, noise_var)[0]
        ok[order] = dec
    for k, u in enumerate(region.active_users):
        region.outcomes[u] = {"decoded": bool(ok[k]), "collided": bool(collided[k])}
    return region


def _slot_draws(master_seed, rep, t, traffic, phy, scheme, R, offsets_db):
    """Signature picks, gains, noise and payloads for every user of one slot."""
    pool = phy.pool(scheme)
    n = traffic.n_users
    if phy.policy == "random":
        sig = stream_rng(master_seed, "signature", (rep, t)).integers(pool, size=n)
    else:
        sig = np.arange(n) % pool
    frng = stream_rng(master_seed, "fading", (rep, t))
    L = phy.block_len_res
    g = frng.standard_normal((n, R // L, 2)) / np.sqrt(2.0)
    gains = np.repeat(g[..., 0] + 1j * g[..., 1], L, axis=-1)
    gains *= (10.0 ** (offsets_db / 20.0))[:, None]
    nrng = stream_rng(master_seed, "noise", (rep, t))
    noise_var = 10.0 ** (-phy.snr_db / 10.0)
    w = nrng.standard_normal((R, 2)) * np.sqrt(noise_var / 2.0)
    pays = stream_rng(master_seed, "traffic", (rep, t)).integers(0, 2, (n, traffic.packet_bits),
                                                                   dtype=np.uint8)
    return sig, gains, w[:, 0] + 1j * w[:, 1], pays


def simulate_replicas(traffic: TrafficConfig, scheme: str, n_slots: int, master_seed: int,
                      replicas, phy: PhyConfig | None = None,
                      region_log: list | None = None) -> GrantFreeCounts:
    """Run the slot process for the given replica indices; regions of one slot are
    decoded together, grouped by their signature tuple."""
    if scheme not in SCHEMES:
        raise ConfigurationError(f"unknown scheme {scheme!r}")
    phy = phy or PhyConfig()
    replicas = list(replicas)
    n = traffic.n_users
    R = region_re_count(traffic.packet_bits)
    if R % phy.block_len_res:
        raise ConfigurationError("block_len_res must divide the region size")
    noise_var = 10.0 ** (-phy.snr_db / 10.0)
    cache = _ChainCache(scheme, traffic.packet_bits)
    B = traffic.latency_budget_slots
    counts = GrantFreeCounts.zeros(n * len(replicas))
    arrivals, offsets, queues = [], [], []
    for rep in replicas:
        hit = stream_rng(master_seed, "traffic", (rep,)).random((n_slots, n))
        arrivals.append(hit < min(traffic.packet_arrival_rate, 1.0))
        offsets.append(stream_rng(master_seed, "fading", (rep,)).uniform(
            -phy.snr_spread_db, phy.snr_spread_db, n))
        queues.append([deque() for _ in range(n)])     # items: [arrival_slot, attempts]
    for t in range(n_slots):
        groups: dict[tuple, list] = {}
        regions = []
        for ri, rep in enumerate(replicas):
            q = queues[ri]
            base = ri * n
            for u in np.flatnonzero(arrivals[ri][t]):
                q[u].append([t, 0])
                counts.offered[base + u] += 1
            active = []
            for u in range(n):
                while q[u] and t > q[u][0][0] + B - 1:
                    q[u].popleft()
                    counts.dropped[base + u] += 1
                if q[u]:
                    active.append(u)
            if not active:
                continue
            sig, gains, noise, pays = _slot_draws(master_seed, rep, t, traffic, phy, scheme, R,
                                                  offsets[ri])
            region = ContentionRegion(t, R, active, [int(sig[u]) for u in active])
            counts.transmissions += len(active)
            counts.collisions += region.n_collisions
            ch = np.array(region.signature_choices)
            collided = np.bincount(ch)[ch] > 1
            run = np.ones(len(active), bool) if scheme == "noma" else ~collided
            idx = np.flatnonzero(run)
            order = idx[np.argsort(ch[idx], kind="stable")]
            key = tuple(int(c) for c in ch[order])
            act = np.array(active)
            region.outcomes = {u: {"decoded": False, "collided": bool(c)}
                               for u, c in zip(active, collided)}
            regions.append((ri, region))
            if order.size:
                groups.setdefault(key, []).append(
                    (ri, region, act[order], (key, gains[act[order]], noise, pays[act[order]])))
        for key in sorted(groups):
            items = groups[key]
            ok = decode_regions(scheme, [it[3] for it in items], cache, phy, noise_var)
            for (ri, region, users, _), dec in zip(items, ok):
                for u, d in zip(users, dec):
                    region.outcomes[int(u)]["decoded"] = bool(d)
        for ri, region in regions:
            q = queues[ri]
            base = ri * n
            for u in region.active_users:
                pkt = q[u][0]
                if region.outcomes[u]["decoded"]:
                    q[u].popleft()
                    counts.delivered[base + u] += 1
                    if t - pkt[0] + 1 > B:
                        counts.late[base + u] += 1
                else:
                    pkt[1] += 1
                    if pkt[1] >= traffic.max_attempts:
                        q[u].popleft()
                        counts.dropped[base + u] += 1
            if region_log is not None:
                region_log.append((replicas[ri], region))
    for ri in range(len(replicas)):
        for u in range(n):
            counts.in_flight[ri * n + u] = len(queues[ri][u])
    return counts


def summarize(counts: GrantFreeCounts, traffic: TrafficConfig, n_slots: int) -> GrantFreeReport:
    offered = int(counts.offered.sum())
    dropped = int(counts.dropped.sum())
    delivered = int(counts.delivered.sum())
    resolved = counts.delivered + counts.dropped
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(resolved > 0, counts.delivered / np.maximum(resolved, 1), 1.0)
    satisfied = (frac >= 0.9999) & (counts.late == 0)
    n_pop = counts.offered.size
    return GrantFreeReport(
        pdr=dropped / offered if offered else 0.0,
        offered_par=offered / (n_pop * n_slots) if n_pop and n_slots else 0.0,
        satisfied_user_ratio=float(satisfied.mean()) if n_pop else 1.0,
        collision_rate=counts.collisions / counts.transmissions if counts.transmissions else 0.0,
        offered=offered, delivered=delivered, dropped=dropped,
        in_flight=int(counts.in_flight.sum()),
        transmissions=counts.transmissions, collisions=counts.collisions,
        per_user=np.stack([counts.offered, counts.delivered, counts.dropped], axis=1))


def run_grantfree(traffic: TrafficConfig, scheme: str, n_slots: int, master_seed: int,
                  n_replicas: int = 8, phy: PhyConfig | None = None) -> GrantFreeReport:
    counts = simulate_replicas(traffic, scheme, n_slots, master_seed, range(n_replicas), phy)
    return summarize(counts, traffic, n_slots)


@dataclass
class SupportedPar:
    par: float
    supported: bool
    bracket_low: float
    bracket_high: float
    monotone: bool
    evaluations: list          # (lambda, pdr, offered) in evaluation order


def _pdr_ci(pdr: float, n: int) -> float:
    return 1.96 * math.sqrt(max(pdr * (1 - pdr), 1.0 / max(n, 1)) / max(n, 1))


def find_supported_par(traffic_template: TrafficConfig, scheme: str, target_pdr: float = 0.01,
                       tol: float = 1e-3, n_slots: int = 200, master_seed: int = 0,
                       n_replicas: int = 8, phy: PhyConfig | None = None,
                       bracket: tuple = (0.0, 0.2), grid_points: int = 5,
                       evaluate=None) -> SupportedPar:
    """Largest arrival rate whose PDR stays at or below ``target_pdr``.

    A coarse grid over ``bracket`` first checks that PDR is nondecreasing within
    95% Monte Carlo confidence, then bisection refines between the last grid point
    meeting the target and the first one missing it. ``evaluate(lam)`` may be
    supplied to run points elsewhere (it must return a :class:`GrantFreeReport`).
    """
    lo, hi = map(float, bracket)
    if not 0 <= lo < hi:
        raise ConfigurationError("bracket must satisfy 0 <= low < high")
    if evaluate is None:
        def evaluate(lam):
            return run_grantfree(traffic_template.with_rate(lam), scheme, n_slots,
                                 master_seed, n_replicas, phy)
    evals = []

    def pdr_at(lam):
        rep = evaluate(lam)
        evals.append((lam, rep.pdr, rep.offered))
        return rep

    grid = np.linspace(lo, hi, grid_points)
    reps = [pdr_at(float(g)) for g in grid]
    monotone = all(b.pdr + _pdr_ci(b.pdr, b.offered) >= a.pdr - _pdr_ci(a.pdr, a.offered)
                   for a, b in zip(reps, reps[1:]))
    if reps[0].pdr > target_pdr:
        return SupportedPar(0.0, False, lo, lo, monotone, evals)
    ok = [r.pdr <= target_pdr for r in reps]
    if all(ok):
        return SupportedPar(hi, True, hi, hi, monotone, evals)
    first_bad = ok.index(False)
    a, b = float(grid[first_bad - 1]), float(grid[first_bad])
    while b - a > tol:
        m = 0.5 * (a + b)
        if pdr_at(m).pdr <= target_pdr:
            a = m
        else:
            b = m
    return SupportedPar(a, True, a, b, monotone, evals)
