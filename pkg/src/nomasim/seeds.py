"""Deterministic derivation of independent random streams from one master seed.

The mixing below is format-frozen: changing any constant changes every
simulation result produced by the package.

    h = splitmix64(master)
    h = splitmix64(h ^ fnv1a64(tag))
    h = splitmix64(h ^ len(indices))
    for i in indices: h = splitmix64(h ^ (i mod 2**64))

splitmix64 uses the increment 0x9E3779B97F4A7C15 and the multipliers
0xBF58476D1CE4E5B9 / 0x94D049BB133111EB with shifts 30, 27, 31.
"""
from __future__ import annotations

import numpy as np

from .errors import ContractError

STREAM_TAGS = ("fading", "noise", "traffic", "signature", "shuffle")

_M64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _M64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _M64
    return x ^ (x >> 31)


def _fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _M64
    return h


def derive_stream_seed(master_seed: int, domain_tag: str, indices=()) -> int:
    if domain_tag not in STREAM_TAGS:
        raise ContractError(f"unknown stream tag {domain_tag!r}; expected one of {STREAM_TAGS}")
    idx = [int(i) for i in indices]
    h = _splitmix64(int(master_seed) & _M64)
    h = _splitmix64(h ^ _fnv1a64(domain_tag))
    h = _splitmix64(h ^ len(idx))
    for i in idx:
        h = _splitmix64(h ^ (i & _M64))
    return h


def stream_rng(master_seed: int, domain_tag: str, indices=()) -> np.random.Generator:
    return np.random.default_rng(derive_stream_seed(master_seed, domain_tag, indices))
