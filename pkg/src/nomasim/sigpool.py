"""NoMA signature resources: spreading pools, sparse patterns, SCMA codebooks,
interleaver pools, and the factor graph a set of sparse signatures induces.
"""
from __future__ import annotations

import itertools
import json
import math
import zlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ContractError
from .seeds import derive_stream_seed

# quaternary chip alphabet, in enumeration order
_QUATERNARY = np.array([1, 1j, -1, -1j])
_MAX_ENUMERATED_CANDIDATES = 1 << 16

# preferred pairs of primitive polynomials (bit i = coefficient of x^i)
_GOLD_PAIRS = {3: (0o13, 0o15), 5: (0o45, 0o75), 7: (0o211, 0o217)}


@dataclass(eq=False)
class SpreadingSequence:
    chips: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        self.chips = np.asarray(self.chips, dtype=complex)
        if self.chips.ndim != 1 or self.chips.size < 1:
            raise ConfigurationError("a spreading sequence needs at least one chip")
        if self.normalized:
            self.chips = self.chips / np.linalg.norm(self.chips)

    @property
    def length(self) -> int:
        return self.chips.size


@dataclass(eq=False)
class SparsePattern:
    mask: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=np.int8)
        self.weights = np.asarray(self.weights, dtype=complex)
        if self.mask.sum() < 1:
            raise ConfigurationError("a sparse pattern needs at least one active RE")
        if not np.array_equal(self.weights != 0, self.mask.astype(bool)):
            raise ConfigurationError("weights must be nonzero exactly on the mask")

    @property
    def n_re(self) -> int:
        return self.mask.size

    @property
    def active(self) -> np.ndarray:
        return np.flatnonzero(self.mask)


@dataclass(eq=False)
class ScmaCodebook:
    """``codewords[m]`` is the length-``n_re`` vector sent for label ``m``."""

    n_re: int
    size: int
    n_nonzero: int
    codewords: np.ndarray

    def __post_init__(self):
        cw = np.asarray(self.codewords, dtype=complex)
        self.codewords = cw
        if cw.shape != (self.size, self.n_re):
            raise ConfigurationError(f"codewords shape {cw.shape} != ({self.size}, {self.n_re})")
        support = np.abs(cw) > 0
        if not (support == support[0]).all() or support[0].sum() != self.n_nonzero:
            raise ConfigurationError("all codewords must share one mask with n_nonzero entries")
        if self.size & (self.size - 1):
            raise ConfigurationError("codebook size must be a power of two")
        d = np.abs(cw[:, None, :] - cw[None, :, :]).sum(axis=2)
        if (d[~np.eye(self.size, dtype=bool)] < 1e-12).any():
            raise ConfigurationError("codewords must be distinct")

    @property
    def mask(self) -> np.ndarray:
        return (np.abs(self.codewords[0]) > 0).astype(np.int8)

    @property
    def bits_per_codeword(self) -> int:
        return int(math.log2(self.size))

    @property
    def mean_energy(self) -> float:
        return float(np.mean(np.sum(np.abs(self.codewords) ** 2, axis=1)))


@dataclass(eq=False)
class FactorGraph:
    """Bipartite user/RE graph. ``edges`` holds (user, re) pairs."""

    n_users: int
    n_res: int
    edges: frozenset
    user_neighbors: list = field(init=False)
    re_neighbors: list = field(init=False)

    def __post_init__(self):
        self.user_neighbors = [sorted(k for (u, k) in self.edges if u == uu)
                               for uu in range(self.n_users)]
        self.re_neighbors = [sorted(u for (u, k) in self.edges if k == kk)
                             for kk in range(self.n_res)]

    @property
    def user_degrees(self) -> list[int]:
        return [len(n) for n in self.user_neighbors]

    @property
    def re_degrees(self) -> list[int]:
        return [len(n) for n in self.re_neighbors]

    def connected_components(self) -> list[set]:
        """Components as sets of ("u", i) / ("r", k) nodes; isolated REs count too."""
        seen, comps = set(), []
        nodes = [("u", u) for u in range(self.n_users)] + [("r", k) for k in range(self.n_res)]
        for start in nodes:
            if start in seen:
                continue
            comp, stack = set(), [start]
            while stack:
                node = stack.pop()
                if node in comp:
                    continue
                comp.add(node)
                kind, i = node
                nbrs = self.user_neighbors[i] if kind == "u" else self.re_neighbors[i]
                stack.extend(("r" if kind == "u" else "u", j) for j in nbrs)
            seen |= comp
            comps.append(comp)
        return comps

    def is_tree(self) -> bool:
        """True when the graph has no cycles (a forest)."""
        n_nodes = self.n_users + self.n_res
        return len(self.edges) == n_nodes - len(self.connected_components())


# ---------------------------------------------------------------------------
# spreading sequences

def cross_correlation(a: SpreadingSequence, b: SpreadingSequence) -> complex:
    """Inner product ``sum(a * conj(b))``."""
    if a.length != b.length:
        raise ContractError("sequences must have equal length")
    return complex(np.vdot(b.chips, a.chips))


def _quaternary_candidates(N: int) -> np.ndarray:
    if 4 ** N > _MAX_ENUMERATED_CANDIDATES:
        raise ConfigurationError(f"quaternary enumeration limited to N <= 8 (got N={N})")
    digits = np.array(list(itertools.product(range(4), repeat=N)), dtype=int)
    return _QUATERNARY[digits] / np.sqrt(N)


def _msequence(poly: int, n: int) -> np.ndarray:
    """Fibonacci LFSR m-sequence of length 2^n - 1 from an all-ones seed."""
    L = (1 << n) - 1
    taps = [i for i in range(n) if (poly >> i) & 1]
    reg = [1] * n
    out = np.zeros(L, dtype=np.int8)
    for t in range(L):
        out[t] = reg[0]
        fb = 0
        for i in taps:
            fb ^= reg[i]
        reg = reg[1:] + [fb]
    return out


def gold_family(n: int) -> np.ndarray:
    """The ``2^n + 1`` binary Gold sequences of length ``2^n - 1`` as +-1 chips."""
    if n not in _GOLD_PAIRS:
        raise ConfigurationError(f"gold_derived supports lengths {[(1 << k) - 1 for k in _GOLD_PAIRS]}")
    a, b = (_msequence(p, n) for p in _GOLD_PAIRS[n])
    family = [a, b] + [a ^ np.roll(b, -k) for k in range((1 << n) - 1)]
    return 1.0 - 2.0 * np.array(family, dtype=float)


def _greedy_minmax_order(cands: np.ndarray, count: int) -> list[int]:
    """Greedy min-max ordering: start at candidate 0; each next pick is the remaining
    candidate whose largest |cross-correlation| with the picks so far is smallest,
    ties going to the lowest candidate index."""
    worst = np.abs(cands.conj() @ cands[0])
    worst[0] = np.inf
    order = [0]
    while len(order) < count:
        nxt = int(np.argmin(worst))
        order.append(nxt)
        worst = np.maximum(worst, np.abs(cands.conj() @ cands[nxt]))
        worst[order] = np.inf
    return order


def build_spreading_pool(length_N: int, pool_size: int,
                         alphabet: str = "quaternary_unit") -> list[SpreadingSequence]:
    """Pool of ``pool_size`` distinct unit-energy sequences in greedy min-max order.

    ``quaternary_unit`` chips are drawn from {1, j, -1, -j}/sqrt(N) (capacity 4^N);
    ``gold_derived`` uses the Gold family of length N = 2^n - 1 (capacity N + 2).
    """
    if length_N < 1 or pool_size < 1:
        raise ConfigurationError("length_N and pool_size must be positive")
    if alphabet == "quaternary_unit":
        if pool_size > 4 ** length_N:
            raise ConfigurationError(f"pool_size {pool_size} exceeds 4^{length_N}")
        cands = _quaternary_candidates(length_N)
    elif alphabet == "gold_derived":
        n = int(round(math.log2(length_N + 1)))
        if (1 << n) - 1 != length_N:
            raise ConfigurationError("gold_derived needs N = 2^n - 1")
        cands = gold_family(n).astype(complex) / np.sqrt(length_N)
        if pool_size > len(cands):
            raise ConfigurationError(f"pool_size {pool_size} exceeds Gold family size {len(cands)}")
    else:
        raise ConfigurationError(f"unknown alphabet {alphabet!r}")
    return [SpreadingSequence(cands[i]) for i in _greedy_minmax_order(cands, pool_size)]


# ---------------------------------------------------------------------------
# sparse patterns and codebooks

def build_sparse_patterns(n_re: int, weight: int, unequal: bool = False) -> list[SparsePattern]:
    """All C(n_re, weight) masks in lexicographic order (first RE active first).

    Equal mode puts 1/sqrt(w) on every active RE. Unequal mode gives the i-th
    active RE an amplitude proportional to sqrt(2^i), renormalised to unit energy.
    """
    if not 1 <= weight <= n_re:
        raise ConfigurationError(f"weight must be in [1, {n_re}]")
    if unequal:
        amps = np.sqrt(2.0 ** np.arange(weight) / (2.0 ** weight - 1))
    else:
        amps = np.full(weight, 1 / np.sqrt(weight))
    pats = []
    for active in itertools.combinations(range(n_re), weight):
        mask = np.zeros(n_re, np.int8)
        mask[list(active)] = 1
        w = np.zeros(n_re, complex)
        w[list(active)] = amps
        pats.append(SparsePattern(mask, w))
    return pats


def qpsk_points() -> np.ndarray:
    # label m = 2*b0 + b1 -> ((1-2 b0) + j (1-2 b1)) / sqrt(2)
    b0, b1 = np.arange(4) >> 1, np.arange(4) & 1
    return ((1 - 2 * b0) + 1j * (1 - 2 * b1)) / np.sqrt(2)


BUILTIN_CODEBOOK_FILE = "scma_4x4x2_v1.json"


def build_scma_codebook(n_re: int = 4, size: int = 4, n_nonzero: int = 2,
                        seed_design: str = "builtin_4x4x2", layer: int = 0,
                        rotation: float | None = None) -> ScmaCodebook:
    """Codebook for one SCMA layer.

    ``builtin_4x4x2`` loads layer ``layer`` (0..5) from the shipped data file.
    ``rotated_qpsk`` uses mask ``layer`` of the lexicographic weight-2 pattern list
    and sends ``qpsk[m]/sqrt(2)`` on the first active RE and
    ``qpsk[m] * exp(j*rotation)/sqrt(2)`` on the second; the default rotation is
    ``layer * pi / 12``.
    """
    if (n_re, size, n_nonzero) != (4, 4, 2):
        raise ConfigurationError(f"unsupported codebook dimensions {(n_re, size, n_nonzero)}")
    if seed_design == "builtin_4x4x2":
        books = load_codebooks(resources.files("nomasim") / "data" / BUILTIN_CODEBOOK_FILE)
        if not 0 <= layer < len(books):
            raise ConfigurationError(f"builtin design has {len(books)} layers")
        return books[layer]
    if seed_design == "rotated_qpsk":
        masks = build_sparse_patterns(n_re, n_nonzero)
        if not 0 <= layer < len(masks):
            raise ConfigurationError(f"layer must be in [0, {len(masks)})")
        theta = layer * np.pi / 12 if rotation is None else rotation
        a, b = masks[layer].active
        cw = np.zeros((size, n_re), complex)
        q = qpsk_points()
        cw[:, a] = q / np.sqrt(2)
        cw[:, b] = q * np.exp(1j * theta) / np.sqrt(2)
        return ScmaCodebook(n_re, size, n_nonzero, cw)
    raise ConfigurationError(f"unknown seed_design {seed_design!r}")


def _canonical_payload(books: list[ScmaCodebook]) -> dict:
    b0 = books[0]
    return {
        "K": b0.n_re, "M": b0.size, "N_nz": b0.n_nonzero,
        "layers": [[[[float(z.real), float(z.imag)] for z in cw] for cw in book.codewords]
                   for book in books],
    }


def codebook_checksum(payload: dict) -> int:
    """CRC-32 of ``json.dumps(payload, sort_keys=True, separators=(",", ":"))``."""
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return zlib.crc32(text.encode("utf-8"))


def save_codebooks(path, books: list[ScmaCodebook], version: int = 1) -> None:
    payload = _canonical_payload(books)
    doc = {"format": "nomasim-scma-codebook", "version": version, **payload,
           "checksum": codebook_checksum(payload)}
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def load_codebooks(path) -> list[ScmaCodebook]:
    doc = json.loads(Path(str(path)).read_text(encoding="utf-8"))
    try:
        payload = {k: doc[k] for k in ("K", "M", "N_nz", "layers")}
        stored = doc["checksum"]
    except KeyError as exc:
        raise ConfigurationError(f"codebook file {path} lacks field {exc}") from None
    if codebook_checksum(payload) != stored:
        raise ConfigurationError(f"codebook file {path} fails its checksum")
    books = []
    for layer in payload["layers"]:
        cw = np.array([[complex(re, im) for re, im in row] for row in layer])
        books.append(ScmaCodebook(payload["K"], payload["M"], payload["N_nz"], cw))
    return books


def factor_graph_from_patterns(masks) -> FactorGraph:
    """Factor graph from per-user masks (arrays, SparsePattern or ScmaCodebook)."""
    rows = []
    for m in masks:
        if isinstance(m, (SparsePattern, ScmaCodebook)):
            m = m.mask
        rows.append(np.asarray(m).astype(bool))
    if not rows:
        return FactorGraph(0, 0, frozenset())
    K = rows[0].size
    if any(r.size != K for r in rows):
        raise ConfigurationError("all masks must have the same length")
    if any(not r.any() for r in rows):
        raise ConfigurationError("zero mask: every user must occupy at least one RE")
    edges = frozenset((u, int(k)) for u, r in enumerate(rows) for k in np.flatnonzero(r))
    return FactorGraph(len(rows), K, edges)


# ---------------------------------------------------------------------------
# interleavers

def build_interleaver_pool(n_symbols: int, pool_size: int, master_seed: int) -> list[np.ndarray]:
    """Seeded permutations of ``range(n_symbols)``, distinct whenever n_symbols! allows."""
    if pool_size < 1 or n_symbols < 1:
        raise ConfigurationError("n_symbols and pool_size must be positive")
    distinct_possible = math.factorial(min(n_symbols, 20)) >= pool_size
    pool, seen, attempt = [], set(), 0
    while len(pool) < pool_size:
        seed = derive_stream_seed(master_seed, "shuffle", [n_symbols, attempt])
        perm = np.random.default_rng(seed).permutation(n_symbols)
        attempt += 1
        key = perm.tobytes()
        if distinct_possible and key in seen:
            continue
        seen.add(key)
        perm.setflags(write=False)
        pool.append(perm)
    return pool


def inverse_permutation(perm) -> np.ndarray:
    perm = np.asarray(perm)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size)
    return inv
