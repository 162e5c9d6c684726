"""Independent reference computations used by ``calibrate``.

Every check returns the largest absolute deviation between the package
implementation and a separately written brute-force or closed-form oracle.
With ``fault=True`` the implementation's output is perturbed before the
comparison, which must make the check fail.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..channel import ChannelRealization
from ..fec import ConvCodeParams, bcjr_decode, crc_remainder
from ..muxrx import (DetectorConfig, build_problem, epa_gaussian_estimate, layer_bit_llrs,
                     ese_detect, map_exhaustive_detect, mf_detect, mmse_estimate, mpa_detect)
from ..seeds import stream_rng
from ..sigpool import SpreadingSequence, build_scma_codebook, build_spreading_pool
from ..txchain import NomaSignature, label_bits

_FAULT = 1e-6


@dataclass(frozen=True)
class Check:
    name: str
    tolerance: float
    run: Callable[[int, int, bool], float]


def _rng(seed, k):
    return stream_rng(seed, "shuffle", (0xCA1, k))


# ---------------------------------------------------------------------------
# decoder


def naive_conv_encode(u, gens, K):
    taps = [[(g >> (K - 1 - i)) & 1 for i in range(K)] for g in gens]
    m = K - 1
    x = list(u) + [0] * m
    out = []
    for t in range(len(x)):
        for tp in taps:
            s = 0
            for i in range(K):
                if t - i >= 0:
                    s ^= tp[i] & x[t - i]
            out.append(s)
    return out


def naive_bit_map(ch, prior, gens, K, n_info):
    """Exact info- and coded-bit APP LLRs by enumerating all 2^n_info words."""
    words = list(itertools.product((0, 1), repeat=n_info))
    metrics, cws = [], []
    for w in words:
        c = naive_conv_encode(w, gens, K)
        cws.append(c)
        metrics.append(sum(0.5 * (1 - 2 * b) * l for b, l in zip(c, ch))
                       + sum(0.5 * (1 - 2 * b) * p for b, p in zip(w, prior)))
    metrics = np.array(metrics)
    W, C = np.array(words), np.array(cws)

    def llr(bits):
        out = []
        for j in range(bits.shape[1]):
            a = np.logaddexp.reduce(metrics[bits[:, j] == 0])
            b = np.logaddexp.reduce(metrics[bits[:, j] == 1])
            out.append(a - b)
        return np.array(out)

    return llr(W), llr(C)


def check_bcjr(seed, n, fault):
    worst = 0.0
    for k, (K, gens) in enumerate([(3, (0o7, 0o5)), (7, (0o133, 0o171)), (3, (0o4, 0o7))]):
        params = ConvCodeParams(K, gens)
        rng = _rng(seed, 100 + k)
        for _ in range(max(1, n // 4)):
            n_info = 8
            ch = rng.normal(0, 3, params.coded_length(n_info))
            pr = rng.normal(0, 2, n_info)
            # the implementation clamps at +-30; deterministic tail bits are +-inf here
            app, capp = (np.clip(v, -30, 30) for v in naive_bit_map(ch, pr, gens, K, n_info))
            r = bcjr_decode(ch, pr, params)
            got = r.app_llrs + (_FAULT if fault else 0.0)
            worst = max(worst, np.abs(got - app).max(), np.abs(r.coded_app_llrs - capp).max())
    return worst


# ---------------------------------------------------------------------------
# detectors


def _scma_chains(layers):
    return [NomaSignature(i, "joint_codebook", codebook=build_scma_codebook(layer=l))
            for i, l in enumerate(layers)]


def _random_problem(rng, sigs, n_blocks=3, noise_var=0.5):
    K = sigs[0].n_re
    U = len(sigs)
    g = (rng.normal(size=(U, n_blocks * K)) + 1j * rng.normal(size=(U, n_blocks * K))) / np.sqrt(2)
    x = np.zeros((U, n_blocks * K), complex)
    for u, s in enumerate(sigs):
        for layer in s.layers:
            lab = rng.integers(layer.size, size=n_blocks)
            x[u] += layer.alphabet[lab].reshape(-1)
    w = (rng.normal(size=n_blocks * K) + 1j * rng.normal(size=n_blocks * K)) * np.sqrt(noise_var / 2)
    y = (g * x).sum(axis=0) + w
    return build_problem(y, ChannelRealization(g, noise_var), sigs)


def check_mpa_tree(seed, n, fault):
    # masks (0,1), (2,3), (0,2): an acyclic RE/layer graph
    rng = _rng(seed, 200)
    worst = 0.0
    for _ in range(n):
        p = _random_problem(rng, _scma_chains([0, 5, 1]))
        a = mpa_detect(p, DetectorConfig("mpa", inner_iters=4))
        b = map_exhaustive_detect(p)
        for la, lb in zip(a.log_probs, b.log_probs):
            worst = max(worst, np.abs(la + (_FAULT if fault else 0.0) - lb).max())
    return worst


def naive_map_marginals(problem):
    """Per-block double loop over every label combination (no vectorisation)."""
    F, NB, K = problem.y.shape
    sizes = [la.size for la in problem.layers]
    out = [np.zeros((F, NB, s)) for s in sizes]
    for f in range(F):
        for b in range(NB):
            alph = [problem.effective_alphabet(i)[f, b] for i in range(len(sizes))]
            metrics = {}
            for combo in itertools.product(*[range(s) for s in sizes]):
                s = sum(alph[i][a] for i, a in enumerate(combo))
                metrics[combo] = -np.sum(np.abs(problem.y[f, b] - s) ** 2) / problem.noise_var
            mx = max(metrics.values())
            for i in range(len(sizes)):
                acc = np.zeros(sizes[i])
                for combo, m in metrics.items():
                    acc[combo[i]] += math.exp(m - mx)
                out[i][f, b] = np.log(acc / acc.sum())
    return out


def check_map_naive(seed, n, fault):
    rng = _rng(seed, 250)
    pool = build_spreading_pool(2, 2)
    worst = 0.0
    for _ in range(n):
        sigs = [NomaSignature(i, "seq_dense", spreading=pool[i]) for i in range(2)]
        p = _random_problem(rng, sigs, n_blocks=2)
        a = map_exhaustive_detect(p)
        b = naive_map_marginals(p)
        for la, lb in zip(a.log_probs, b):
            worst = max(worst, np.abs(la + (_FAULT if fault else 0.0) - lb).max())
    return worst


def _dense_problem(rng, U, K, noise_var, n_blocks=1):
    """Users with random complex unit-norm spreading over K REs and unit gains."""
    sigs = []
    for u in range(U):
        c = rng.normal(size=K) + 1j * rng.normal(size=K)
        sigs.append(NomaSignature(u, "seq_dense", spreading=SpreadingSequence(c)))
    g = np.ones((U, n_blocks * K), complex)
    y = rng.normal(size=n_blocks * K) + 1j * rng.normal(size=n_blocks * K)
    return build_problem(y, ChannelRealization(g, noise_var), sigs)


def mmse_oracle(problem):
    """Joint LMMSE with identity prior covariance by direct matrix inversion."""
    H = np.concatenate([problem.columns(i) for i in range(len(problem.layers))], axis=-1)
    F, NB, K = problem.y.shape
    out = np.zeros(H.shape[:2] + (H.shape[-1],), complex)
    for f in range(F):
        for b in range(NB):
            h = H[f, b]
            W = h.conj().T @ np.linalg.inv(h @ h.conj().T + problem.noise_var * np.eye(K))
            out[f, b] = W @ problem.y[f, b]
    return out


def check_mmse(seed, n, fault):
    rng = _rng(seed, 300)
    worst = 0.0
    bump = _FAULT if fault else 0.0
    for _ in range(n):
        # scalar closed form
        h = complex(rng.normal(), rng.normal())
        s2 = float(rng.uniform(0.05, 2.0))
        y = complex(rng.normal(), rng.normal())
        sig = NomaSignature(0, "seq_dense", spreading=SpreadingSequence([1.0]))
        p = build_problem(np.array([y]), ChannelRealization(np.array([[h]]), s2), [sig])
        z = mmse_estimate(p, "mu")[0]["z"][0, 0, 0] + bump
        worst = max(worst, abs(z - np.conj(h) * y / (abs(h) ** 2 + s2)))
        # two users on two REs
        p = _dense_problem(rng, 2, 2, s2)
        est = mmse_estimate(p, "mu")
        got = np.concatenate([e["z"] for e in est], axis=-1) + bump
        worst = max(worst, np.abs(got - mmse_oracle(p)).max())
    return worst


def check_epa_gaussian(seed, n, fault):
    rng = _rng(seed, 350)
    worst = 0.0
    for _ in range(n):
        p = _dense_problem(rng, 2, 3, float(rng.uniform(0.5, 2.0)))
        got = np.concatenate(epa_gaussian_estimate(p, DetectorConfig("epa", inner_iters=400,
                                                                     damping=0.3)), axis=-1)
        worst = max(worst, np.abs(got + (_FAULT if fault else 0.0) - mmse_oracle(p)).max())
    return worst


def check_ese_single(seed, n, fault):
    rng = _rng(seed, 400)
    worst = 0.0
    for k in range(n):
        sigs = _scma_chains([k % 6]) if k % 2 else [
            NomaSignature(0, "seq_dense", spreading=build_spreading_pool(4, 3)[k % 3])]
        p = _random_problem(rng, sigs)
        a = ese_detect(p)
        b = mf_detect(p)
        for la, lb in zip(a.log_probs, b.log_probs):
            worst = max(worst, np.abs(np.exp(la) + (_FAULT if fault else 0.0) - np.exp(lb)).max())
    return worst


# ---------------------------------------------------------------------------
# demapper and CRC


def naive_demap(probs, labels):
    out = []
    for i in range(labels.shape[1]):
        p0 = sum(p for p, lab in zip(probs, labels) if lab[i] == 0)
        p1 = sum(p for p, lab in zip(probs, labels) if lab[i] == 1)
        out.append(math.log(p0) - math.log(p1))
    return np.array(out)


def check_demap(seed, n, fault):
    rng = _rng(seed, 500)
    worst = 0.0
    for k in range(n):
        A = 4 if k % 2 else 16
        labels = label_bits(A)
        p = rng.dirichlet(np.ones(A)) * 0.98 + 0.02 / A
        got = layer_bit_llrs(np.log(p), labels) + (_FAULT if fault else 0.0)
        worst = max(worst, np.abs(got - naive_demap(p, labels)).max())
    return worst


def check_crc(seed, n, fault):
    bits = np.unpackbits(np.frombuffer(b"123456789", np.uint8))
    got = int(crc_remainder(bits)) ^ (1 if fault else 0)
    return float(abs(got - 0x29B1))


CHECKS = (
    Check("bcjr_vs_enumeration", 1e-9, check_bcjr),
    Check("mpa_tree_vs_map", 1e-9, check_mpa_tree),
    Check("map_vs_naive_enumeration", 1e-12, check_map_naive),
    Check("mmse_closed_form", 1e-9, check_mmse),
    Check("epa_gaussian_vs_mmse", 1e-9, check_epa_gaussian),
    Check("ese_single_user_vs_mf", 1e-9, check_ese_single),
    Check("demap_vs_naive", 1e-12, check_demap),
    Check("crc16_check_value", 0.0, check_crc),
)
