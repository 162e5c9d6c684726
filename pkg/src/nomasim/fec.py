"""Forward error correction: zero-tail convolutional code, log-domain BCJR, CRC.

LLR sign convention throughout the package: ``L = ln(P[bit=0] / P[bit=1])``,
so a positive LLR favours bit 0 and a zero LLR decides bit 0.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numba import njit

from .errors import ConfigurationError, ContractError

DEFAULT_LLR_CLAMP = 30.0


@dataclass(frozen=True)
class ConvCodeParams:
    """Feed-forward convolutional code.

    ``generators`` are integers whose binary expansion (``constraint_length``
    bits) lists the taps from the current input (MSB) to the oldest register
    (LSB), i.e. the usual octal notation: ``ConvCodeParams(3, (0o7, 0o5))``.
    """

    constraint_length: int = 7
    generators: tuple[int, ...] = (0o133, 0o171)
    termination: str = "zero_tail"

    def __post_init__(self):
        K = self.constraint_length
        if K < 2:
            raise ConfigurationError("constraint_length must be >= 2")
        if len(self.generators) < 2:
            raise ConfigurationError("at least two generator polynomials are required")
        for g in self.generators:
            if g <= 0 or g >= (1 << K):
                raise ConfigurationError(
                    f"generator {g:o} (octal) does not fit constraint length {K}")
        union = 0
        for g in self.generators:
            union |= g
        if not union & 1 or not union >> (K - 1):
            raise ConfigurationError(
                "generators must jointly use the current input and the oldest register")
        if self.termination != "zero_tail":
            raise ConfigurationError(f"unsupported termination {self.termination!r}")

    @classmethod
    def from_octal(cls, constraint_length: int, generators) -> "ConvCodeParams":
        return cls(constraint_length, tuple(int(str(g), 8) for g in generators))

    @property
    def n_out(self) -> int:
        return len(self.generators)

    @property
    def memory(self) -> int:
        return self.constraint_length - 1

    @property
    def n_states(self) -> int:
        return 1 << self.memory

    def coded_length(self, n_info: int) -> int:
        return self.n_out * (n_info + self.memory)


@dataclass(frozen=True)
class CrcParams:
    width: int = 16
    polynomial: int = 0x1021
    init: int = 0xFFFF
    final_xor: int = 0x0000

    def __post_init__(self):
        if self.width not in (8, 16, 24):
            raise ConfigurationError("CRC width must be 8, 16 or 24")
        mask = (1 << self.width) - 1
        if not 0 < self.polynomial <= mask or not self.polynomial & 1:
            raise ConfigurationError("CRC polynomial must be nonzero with its constant term set")
        if not (0 <= self.init <= mask and 0 <= self.final_xor <= mask):
            raise ConfigurationError("CRC init/final_xor wider than the register")


DEFAULT_CODE = ConvCodeParams()
DEFAULT_CRC = CrcParams()


# ---------------------------------------------------------------------------
# encoding

def _taps(params: ConvCodeParams) -> np.ndarray:
    """taps[j, i] = 1 when generator j reads the input delayed by i."""
    K = params.constraint_length
    return np.array([[(g >> (K - 1 - i)) & 1 for i in range(K)] for g in params.generators],
                    dtype=np.uint8)


def conv_encode(info_bits, params: ConvCodeParams = DEFAULT_CODE) -> np.ndarray:
    """Encode and zero-terminate. Works on the last axis, so batches of frames are fine.

    Output bits are interleaved per trellis step: ``c0[t], c1[t], ...``.
    """
    u = np.asarray(info_bits, dtype=np.uint8)
    if u.shape[-1] == 0:
        raise ContractError("info_bits must be non-empty")
    mem = params.memory
    padded = np.concatenate([u, np.zeros(u.shape[:-1] + (mem,), np.uint8)], axis=-1)
    T = padded.shape[-1]
    taps = _taps(params)
    out = np.zeros(u.shape[:-1] + (T, params.n_out), np.uint8)
    for i in range(params.constraint_length):
        shifted = np.zeros_like(padded)
        shifted[..., i:] = padded[..., :T - i]
        out ^= shifted[..., :, None] * taps[:, i]
    return out.reshape(u.shape[:-1] + (T * params.n_out,))


@lru_cache(maxsize=32)
def trellis_tables(params: ConvCodeParams):
    """Return (next_state[S, 2], out_bits[S, 2, n]) for the shift-register trellis.

    State = the last ``K-1`` inputs, most recent at the MSB.
    """
    K, S = params.constraint_length, params.n_states
    nxt = np.zeros((S, 2), np.int64)
    out = np.zeros((S, 2, params.n_out), np.int64)
    for s in range(S):
        for u in (0, 1):
            reg = (u << (K - 1)) | s
            nxt[s, u] = reg >> 1
            for j, g in enumerate(params.generators):
                out[s, u, j] = bin(reg & g).count("1") & 1
    nxt.setflags(write=False)
    out.setflags(write=False)
    return nxt, out


# ---------------------------------------------------------------------------
# BCJR

@njit(cache=True, inline="always")
def _maxstar(a, b, max_log):
    if a == -np.inf:
        return b
    if b == -np.inf:
        return a
    if max_log:
        return a if a > b else b
    if a > b:
        return a + np.log1p(np.exp(b - a))
    return b + np.log1p(np.exp(a - b))


@njit(cache=True)
def _bcjr_kernel(ch, prior, nxt, out, n_info, max_log):
    B, T, n = ch.shape
    S = nxt.shape[0]
    app_info = np.zeros((B, n_info))
    app_coded = np.zeros((B, T, n))
    alpha = np.empty((T + 1, S))
    beta = np.empty((T + 1, S))
    gam = np.empty((S, 2))
    num = np.empty((n, 2))
    for b in range(B):
        alpha[0, :] = -np.inf
        alpha[0, 0] = 0.0
        for t in range(T):
            alpha[t + 1, :] = -np.inf
            umax = 2 if t < n_info else 1
            for s in range(S):
                if alpha[t, s] == -np.inf:
                    continue
                for u in range(umax):
                    g = 0.0
                    for j in range(n):
                        g += (0.5 - out[s, u, j]) * ch[b, t, j]
                    if t < n_info:
                        g += (0.5 - u) * prior[b, t]
                    ns = nxt[s, u]
                    alpha[t + 1, ns] = _maxstar(alpha[t + 1, ns], alpha[t, s] + g, max_log)
            m = -np.inf
            for s in range(S):
                if alpha[t + 1, s] > m:
                    m = alpha[t + 1, s]
            for s in range(S):
                alpha[t + 1, s] -= m
        beta[T, :] = -np.inf
        beta[T, 0] = 0.0
        for t in range(T - 1, -1, -1):
            umax = 2 if t < n_info else 1
            m = -np.inf
            for s in range(S):
                acc = -np.inf
                for u in range(umax):
                    g = 0.0
                    for j in range(n):
                        g += (0.5 - out[s, u, j]) * ch[b, t, j]
                    if t < n_info:
                        g += (0.5 - u) * prior[b, t]
                    gam[s, u] = g
                    acc = _maxstar(acc, g + beta[t + 1, nxt[s, u]], max_log)
                beta[t, s] = acc
                if acc > m:
                    m = acc
            for s in range(S):
                beta[t, s] -= m
            # a-posteriori quantities for step t
            u0 = -np.inf
            u1 = -np.inf
            for j in range(n):
                num[j, 0] = -np.inf
                num[j, 1] = -np.inf
            for s in range(S):
                if alpha[t, s] == -np.inf:
                    continue
                for u in range(umax):
                    v = alpha[t, s] + gam[s, u] + beta[t + 1, nxt[s, u]]
                    if u == 0:
                        u0 = _maxstar(u0, v, max_log)
                    else:
                        u1 = _maxstar(u1, v, max_log)
                    for j in range(n):
                        c = out[s, u, j]
                        num[j, c] = _maxstar(num[j, c], v, max_log)
            if t < n_info:
                app_info[b, t] = u0 - u1
            for j in range(n):
                app_coded[b, t, j] = num[j, 0] - num[j, 1]
    return app_info, app_coded


@dataclass
class BcjrResult:
    app_llrs: np.ndarray
    extrinsic_llrs: np.ndarray
    intrinsic_llrs: np.ndarray
    hard_bits: np.ndarray
    coded_app_llrs: np.ndarray
    coded_extrinsic_llrs: np.ndarray


def clamp_llrs(llrs, bound: float = DEFAULT_LLR_CLAMP) -> np.ndarray:
    x = np.nan_to_num(np.asarray(llrs, dtype=np.float64), nan=0.0, posinf=bound, neginf=-bound)
    return np.clip(x, -bound, bound)


def hard_decision(llrs) -> np.ndarray:
    """Sign decision; an exactly-zero LLR decides bit 0."""
    return (np.asarray(llrs) < 0).astype(np.uint8)


def bcjr_decode(channel_llrs, prior_llrs=None, params: ConvCodeParams = DEFAULT_CODE,
                clamp_bound: float = DEFAULT_LLR_CLAMP, max_log: bool = False) -> BcjrResult:
    """Soft-in/soft-out bit-MAP decoding of a zero-tail convolutional code.

    Accepts a single codeword (1-D) or a batch (2-D, one codeword per row).
    ``prior_llrs`` are a-priori LLRs on the information bits (``None`` = uniform).
    Info-bit outputs satisfy ``app = extrinsic + prior + intrinsic``, where the
    intrinsic term is nonzero only for systematic generator outputs. The coded
    outputs (``coded_extrinsic = coded_app - channel``) are what an iterative
    receiver feeds back to the symbol detector.
    """
    ch = clamp_llrs(channel_llrs, clamp_bound)
    single = ch.ndim == 1
    ch = np.atleast_2d(ch)
    B, C = ch.shape
    n = params.n_out
    if C % n or C // n <= params.memory:
        raise ContractError(f"channel LLR length {C} is not a valid coded length")
    T = C // n
    n_info = T - params.memory
    if prior_llrs is None:
        pr = np.zeros((B, n_info))
    else:
        pr = np.atleast_2d(clamp_llrs(prior_llrs, clamp_bound))
        if pr.shape != (B, n_info):
            raise ContractError(f"prior LLRs shape {pr.shape} does not match info length {n_info}")
    nxt, out = trellis_tables(params)
    ch3 = np.ascontiguousarray(ch.reshape(B, T, n))
    app_raw, coded_raw = _bcjr_kernel(ch3, np.ascontiguousarray(pr), nxt, out, n_info, max_log)
    coded_raw = coded_raw.reshape(B, C)

    K = params.constraint_length
    intrinsic = np.zeros((B, n_info))
    for j, g in enumerate(params.generators):
        if g == 1 << (K - 1):
            intrinsic += ch3[:, :n_info, j]
    extrinsic = clamp_llrs(app_raw - pr - intrinsic, clamp_bound)
    app = clamp_llrs(app_raw, clamp_bound)
    coded_app = clamp_llrs(coded_raw, clamp_bound)
    coded_ext = clamp_llrs(coded_raw - ch, clamp_bound)
    res = BcjrResult(app, extrinsic, intrinsic, hard_decision(app), coded_app, coded_ext)
    if single:
        for name in vars(res):
            setattr(res, name, getattr(res, name)[0])
    return res


# ---------------------------------------------------------------------------
# CRC

def crc_remainder(bits, params: CrcParams = DEFAULT_CRC) -> np.ndarray:
    """Bitwise MSB-first CRC register after ``bits`` (last axis), with final xor applied."""
    b = np.asarray(bits, dtype=np.int64)
    w = params.width
    mask = (1 << w) - 1
    reg = np.full(b.shape[:-1], params.init, dtype=np.int64)
    for i in range(b.shape[-1]):
        top = ((reg >> (w - 1)) & 1) ^ b[..., i]
        reg = (reg << 1) & mask
        reg = np.where(top == 1, reg ^ params.polynomial, reg)
    return reg ^ params.final_xor


def _int_to_bits(values, width: int) -> np.ndarray:
    v = np.asarray(values, dtype=np.int64)
    shifts = np.arange(width - 1, -1, -1)
    return ((v[..., None] >> shifts) & 1).astype(np.uint8)


def crc_attach(bits, params: CrcParams = DEFAULT_CRC) -> np.ndarray:
    b = np.asarray(bits, dtype=np.uint8)
    return np.concatenate([b, _int_to_bits(crc_remainder(b, params), params.width)], axis=-1)


def crc_check(bits, params: CrcParams = DEFAULT_CRC):
    """True where the trailing ``width`` bits match the CRC of the preceding payload.

    Blocks no longer than the CRC itself return False rather than raising.
    """
    b = np.asarray(bits, dtype=np.uint8)
    w = params.width
    if b.shape[-1] <= w:
        ok = np.zeros(b.shape[:-1], bool)
        return bool(ok) if ok.ndim == 0 else ok
    expected = crc_remainder(b[..., :-w], params)
    got = (b[..., -w:].astype(np.int64) << np.arange(w - 1, -1, -1)).sum(axis=-1)
    ok = expected == got
    return bool(ok) if ok.ndim == 0 else ok
