"""Multi-user detectors operating on :class:`RxProblem`.

All detectors return a :class:`SymbolPosterior`: per layer, normalised log
probabilities over labels with shape (F, NB, A). Priors, when given, are
per-layer log probabilities of the same shape (see ``layer_log_priors``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from ..errors import ConfigurationError
from ._kernels import mpa_kernel
from .problem import RxProblem

DETECTOR_KINDS = ("mf", "mmse_su", "mmse_mu", "map_exhaustive", "mpa", "epa", "ese")
MAP_COMBINATION_LIMIT = 1 << 20
MPA_RE_COMBINATION_LIMIT = 1 << 16
_DEFAULT_ITERS = {"mpa": 6, "epa": 10, "ese": 1}
_DEFAULT_DAMPING = {"mpa": 0.0, "epa": 0.5}


@dataclass
class DetectorConfig:
    kind: str = "mpa"
    inner_iters: int | None = None
    damping: float | None = None
    variance_floor: float = 1e-8
    llr_clamp: float = 30.0

    def __post_init__(self):
        if self.kind not in DETECTOR_KINDS:
            raise ConfigurationError(f"unknown detector kind {self.kind!r}")
        if self.inner_iters is None:
            self.inner_iters = _DEFAULT_ITERS.get(self.kind, 1)
        if self.damping is None:
            self.damping = _DEFAULT_DAMPING.get(self.kind, 0.0)
        if self.inner_iters < 1:
            raise ConfigurationError("inner_iters must be >= 1")
        if not 0.0 <= self.damping < 1.0:
            raise ConfigurationError("damping must lie in [0, 1)")
        if not self.variance_floor > 0:
            raise ConfigurationError("variance_floor must be positive")


@dataclass
class SymbolPosterior:
    log_probs: list[np.ndarray]   # per layer, (F, NB, A)
    layer_users: list[int]

    @property
    def probs(self) -> list[np.ndarray]:
        return [np.exp(lp) for lp in self.log_probs]

    def hard_labels(self) -> list[np.ndarray]:
        return [np.argmax(lp, axis=-1) for lp in self.log_probs]


class OpCounter:
    """Counts elementary message operations performed by a detector."""

    def __init__(self):
        self.count = 0

    def add(self, n: int) -> None:
        self.count += int(n)


def _normalise(logp: np.ndarray) -> np.ndarray:
    logp = np.where(np.isnan(logp), -np.inf, logp)
    return logp - logsumexp(logp, axis=-1, keepdims=True)


def _priors_or_uniform(problem: RxProblem, priors):
    if priors is None:
        return [np.full((problem.n_frames, problem.n_blocks, la.size), -np.log(la.size))
                for la in problem.layers]
    return [np.asarray(p, dtype=float) for p in priors]


def _moments(points: np.ndarray, logp: np.ndarray):
    """Mean (…, d) and covariance (…, d, d) of layer points under ``exp(logp)``."""
    p = np.exp(logp)
    m = p @ points
    second = np.einsum("...a,ac,ae->...ce", p, points, points.conj())
    return m, second - m[..., :, None] * m[..., None, :].conj()


def _gaussian_loglik(z, A, C, points, mean):
    """log N(z; mean + A (x_a - mean), C) up to a constant, for every label a."""
    diff = points - mean[..., None, :]                          # (F,NB,Aa,d)
    e = z[..., None, :] - mean[..., None, :] - np.einsum("...ij,...aj->...ai", A, diff)
    Ci = np.linalg.inv(C)
    return -np.real(np.einsum("...ai,...ij,...aj->...a", e.conj(), Ci, e))


# ---------------------------------------------------------------------------
# matched filter

def mf_detect(problem: RxProblem, config: DetectorConfig | None = None,
              priors=None) -> SymbolPosterior:
    """Single-tap correlation per layer component, interference treated as Gaussian."""
    cfg = config or DetectorConfig("mf")
    pri = _priors_or_uniform(problem, priors)
    cols = [problem.columns(i) for i in range(len(problem.layers))]
    pw = [np.mean(np.abs(la.points) ** 2, axis=0) for la in problem.layers]   # (d,)
    s2 = max(problem.noise_var, cfg.variance_floor)
    out = []
    for i, layer in enumerate(problem.layers):
        H = cols[i]                                                # (F,NB,K,d)
        nrm = np.sum(np.abs(H) ** 2, axis=-2)                      # (F,NB,d)
        live = nrm > 1e-300
        safe = np.where(live, nrm, 1.0)
        z = np.einsum("...kc,...k->...c", H.conj(), problem.y) / safe
        interf = np.zeros_like(nrm)
        for j in range(len(cols)):
            if j == i:
                continue
            cross = np.einsum("...kc,...ke->...ce", H.conj(), cols[j])   # (F,NB,d,dj)
            interf += np.abs(cross) ** 2 @ pw[j]
        v = (interf + s2 * safe) / safe ** 2
        dist = np.abs(z[..., None, :] - layer.points) ** 2 / v[..., None, :]
        ll = -np.sum(np.where(live[..., None, :], dist, 0.0), axis=-1)
        out.append(_normalise(pri[i] + ll))
    return SymbolPosterior(out, list(problem.layer_users))


# ---------------------------------------------------------------------------
# linear MMSE

def mmse_estimate(problem: RxProblem, mode: str = "mu", priors=None,
                  variance_floor: float = 1e-8) -> list[dict]:
    """Per-layer linear MMSE estimate with soft interference cancellation.

    For layer ``l`` the other layers enter through their prior means and
    covariances while layer ``l`` itself is taken with its unconditional
    (uniform) statistics, so the resulting likelihood is extrinsic. In ``su``
    mode the interference-plus-noise covariance is replaced by its diagonal.

    Returns dicts with ``z`` (F,NB,d), ``A`` = W H_l, ``C`` = W Q W^H,
    ``W`` (F,NB,d,K) and ``mean`` (the unconditional mean of the layer).
    """
    if mode not in ("su", "mu"):
        raise ConfigurationError("mmse mode must be 'su' or 'mu'")
    pri = _priors_or_uniform(problem, priors)
    n = len(problem.layers)
    K = problem.n_re
    cols = [problem.columns(i) for i in range(n)]
    stats = [_moments(la.points, p) for la, p in zip(problem.layers, pri)]
    unc = [_moments(la.points, np.full(la.size, -np.log(la.size))) for la in problem.layers]
    s2 = max(problem.noise_var, variance_floor)
    eye = np.eye(K)

    def outer(H, P):
        return H @ P @ np.swapaxes(H.conj(), -1, -2)

    Sigma = s2 * eye + sum(outer(cols[i], stats[i][1]) for i in range(n))
    resid = problem.y - sum(np.einsum("...kc,...c->...k", cols[i], stats[i][0]) for i in range(n))
    res = []
    for i in range(n):
        H = cols[i]
        mu_u, P_u = unc[i]
        own = outer(H, np.broadcast_to(P_u, stats[i][1].shape))
        Sig_l = Sigma - outer(H, stats[i][1]) + own
        Q = Sig_l - own
        if mode == "su":
            Q = np.real(np.diagonal(Q, axis1=-2, axis2=-1))[..., None] * eye
            Sig_l = own + Q
        r = resid + np.einsum("...kc,...c->...k", H, stats[i][0] - mu_u)
        HP = H @ P_u                                           # (F,NB,K,d)
        W = np.swapaxes(np.linalg.solve(Sig_l, HP), -1, -2).conj()   # P H^H Sigma^-1
        z = mu_u + np.einsum("...ck,...k->...c", W, r)
        A = W @ H
        C = W @ Q @ np.swapaxes(W.conj(), -1, -2)
        C = C + variance_floor * np.eye(C.shape[-1])
        res.append({"z": z, "A": A, "C": C, "W": W,
                    "mean": np.broadcast_to(mu_u, z.shape)})
    return res


def mmse_detect(problem: RxProblem, config: DetectorConfig | None = None,
                priors=None) -> SymbolPosterior:
    cfg = config or DetectorConfig("mmse_mu")
    mode = "su" if cfg.kind == "mmse_su" else "mu"
    pri = _priors_or_uniform(problem, priors)
    est = mmse_estimate(problem, mode, pri, cfg.variance_floor)
    out = []
    for i, (layer, e) in enumerate(zip(problem.layers, est)):
        ll = _gaussian_loglik(e["z"], e["A"], e["C"], layer.points, e["mean"])
        out.append(_normalise(pri[i] + ll))
    return SymbolPosterior(out, list(problem.layer_users))


# ---------------------------------------------------------------------------
# exhaustive joint MAP

def map_exhaustive_detect(problem: RxProblem, config: DetectorConfig | None = None,
                          priors=None) -> SymbolPosterior:
    """Exact per-layer marginals by enumerating every label combination."""
    cfg = config or DetectorConfig("map_exhaustive")
    pri = _priors_or_uniform(problem, priors)
    sizes = [la.size for la in problem.layers]
    total = math.prod(sizes)
    if total > MAP_COMBINATION_LIMIT:
        raise ConfigurationError(
            f"exhaustive MAP needs {total} combinations (limit {MAP_COMBINATION_LIMIT})")
    F, NB, K = problem.y.shape
    S = [problem.effective_alphabet(i).reshape(F * NB, sizes[i], K) for i in range(len(sizes))]
    P = [p.reshape(F * NB, -1) for p in pri]
    y = problem.y.reshape(F * NB, K)
    s2 = max(problem.noise_var, cfg.variance_floor)
    chunk = max(1, (1 << 22) // total)
    out = [np.empty((F * NB, a)) for a in sizes]
    for lo in range(0, F * NB, chunk):
        sl = slice(lo, lo + chunk)
        m = sl.stop - lo if sl.stop <= F * NB else F * NB - lo
        acc = np.zeros((m, 1, K), complex)
        lp = np.zeros((m, 1))
        for i in range(len(sizes)):
            acc = (acc[:, :, None, :] + S[i][sl][:, None]).reshape(m, -1, K)
            lp = (lp[:, :, None] + P[i][sl][:, None]).reshape(m, -1)
        metric = lp - np.sum(np.abs(y[sl][:, None] - acc) ** 2, axis=-1) / s2
        metric = metric.reshape((m,) + tuple(sizes))
        for i in range(len(sizes)):
            axes = tuple(a + 1 for a in range(len(sizes)) if a != i)
            out[i][sl] = logsumexp(metric, axis=axes) if axes else metric
    res = [_normalise(o.reshape(F, NB, -1)) for o in out]
    return SymbolPosterior(res, list(problem.layer_users))


# ---------------------------------------------------------------------------
# message passing (sum-product)

def _edges(problem: RxProblem):
    K = problem.n_re
    supp = [set(la.support.tolist()) for la in problem.layers]
    re_layers = [[l for l in range(len(supp)) if k in supp[l]] for k in range(K)]
    re_ptr = np.zeros(K + 1, np.int64)
    edge_layer = []
    for k in range(K):
        edge_layer.extend(re_layers[k])
        re_ptr[k + 1] = len(edge_layer)
    edge_layer = np.asarray(edge_layer, np.int64)
    layer_ptr = np.zeros(len(supp) + 1, np.int64)
    layer_edges = []
    for l in range(len(supp)):
        layer_edges.extend(np.flatnonzero(edge_layer == l).tolist())
        layer_ptr[l + 1] = len(layer_edges)
    return re_ptr, edge_layer, layer_ptr, np.asarray(layer_edges, np.int64)


def mpa_detect(problem: RxProblem, config: DetectorConfig | None = None,
               priors=None) -> SymbolPosterior:
    """Sum-product message passing over the RE/layer factor graph (exact sums)."""
    cfg = config or DetectorConfig("mpa")
    pri = _priors_or_uniform(problem, priors)
    re_ptr, edge_layer, layer_ptr, layer_edges = _edges(problem)
    sizes = np.array([la.size for la in problem.layers], np.int64)
    for k in range(problem.n_re):
        c = int(np.prod(sizes[edge_layer[re_ptr[k]:re_ptr[k + 1]]]))
        if c > MPA_RE_COMBINATION_LIMIT:
            raise ConfigurationError(
                f"MPA needs {c} combinations on RE {k} (limit {MPA_RE_COMBINATION_LIMIT})")
    F, NB, K = problem.y.shape
    L, Amax = len(sizes), int(sizes.max())
    S = np.zeros((F * NB, L, Amax, K), complex)
    lp = np.full((F * NB, L, Amax), -np.inf)
    for i in range(L):
        S[:, i, :sizes[i]] = problem.effective_alphabet(i).reshape(F * NB, sizes[i], K)
        lp[:, i, :sizes[i]] = pri[i].reshape(F * NB, -1)
    s2 = max(problem.noise_var, cfg.variance_floor)
    bel = mpa_kernel(np.ascontiguousarray(problem.y.reshape(F * NB, K)), S, sizes, lp,
                     re_ptr, edge_layer, layer_ptr, layer_edges,
                     float(s2), int(cfg.inner_iters), float(cfg.damping))
    out = [bel[:, i, :sizes[i]].reshape(F, NB, -1) for i in range(L)]
    return SymbolPosterior(out, list(problem.layer_users))


# ---------------------------------------------------------------------------
# expectation propagation

def epa_detect(problem: RxProblem, config: DetectorConfig | None = None, priors=None,
               counter: OpCounter | None = None, gaussian_prior: bool = False) -> SymbolPosterior:
    """Expectation propagation on the factor graph.

    Each edge carries a Gaussian message (mean, variance) for the layer's
    received chip on that RE. RE nodes combine them linearly (total minus own);
    layer nodes compute the posterior of the layer given all incoming messages,
    project its chip marginals onto Gaussians (moment matching) and divide out
    the incoming message. With ``gaussian_prior`` the discrete alphabet is
    replaced by a Gaussian with the same first two moments, which makes the
    fixed point the linear MMSE solution.
    """
    cfg = config or DetectorConfig("epa")
    logp, _ = _epa_run(problem, cfg, priors, counter, gaussian_prior)
    return SymbolPosterior(logp, list(problem.layer_users))


def epa_gaussian_estimate(problem: RxProblem, config: DetectorConfig | None = None,
                          priors=None) -> list[np.ndarray]:
    """Per-layer posterior means of the layer points, (F, NB, d), under Gaussian-prior EPA."""
    cfg = config or DetectorConfig("epa")
    return _epa_run(problem, cfg, priors, None, True)[1]


def _epa_run(problem, cfg, priors, counter, gaussian_prior):
    pri = _priors_or_uniform(problem, priors)
    F, NB, K = problem.y.shape
    L = len(problem.layers)
    floor = cfg.variance_floor
    big = 1e12
    s2 = max(problem.noise_var, floor)
    mask = np.zeros((L, K), bool)
    for l, la in enumerate(problem.layers):
        mask[l, la.support] = True
    n_edges = int(mask.sum())
    X = [problem.effective_alphabet(l) for l in range(L)]           # (F,NB,A,K)
    Cm = [problem.columns(l) for l in range(L)]                     # (F,NB,K,d)
    stats = [_moments(la.points, p) for la, p in zip(problem.layers, pri)]

    # layer -> RE messages start at the prior chip moments
    m_lr = np.zeros((F, NB, L, K), complex)
    v_lr = np.full((F, NB, L, K), big)
    for l in range(L):
        p = np.exp(pri[l])
        mu = np.einsum("...a,...ak->...k", p, X[l])
        var = np.einsum("...a,...ak->...k", p, np.abs(X[l]) ** 2) - np.abs(mu) ** 2
        m_lr[:, :, l] = mu
        v_lr[:, :, l] = np.maximum(var, floor)
    m_lr = np.where(mask, m_lr, 0.0)
    v_lr = np.where(mask, v_lr, 0.0)
    m_rl = np.zeros_like(m_lr)
    v_rl = np.full_like(v_lr, big)
    logp = [np.array(p) for p in pri]
    means = [s[0] for s in stats]

    def layer_posterior(l, mk, vk):
        """Posterior chip moments on the layer support plus label/latent posteriors."""
        supp = problem.layers[l].support
        if gaussian_prior:
            mu0, P0 = stats[l]
            C = Cm[l][..., supp, :]                                  # (F,NB,s,d)
            CP = C @ P0
            G = CP @ np.swapaxes(C.conj(), -1, -2) + vk[..., None] * np.eye(supp.size)
            innov = mk - np.einsum("...sd,...d->...s", C, mu0)
            gain = np.swapaxes(np.linalg.solve(G, CP), -1, -2).conj()   # P0 C^H G^-1
            xh = mu0 + np.einsum("...ds,...s->...d", gain, innov)
            V = P0 - gain @ CP
            pm = np.einsum("...sd,...d->...s", C, xh)
            pv = np.real(np.einsum("...sd,...de,...se->...s", C, V, C.conj()))
            return pm, np.maximum(pv, floor), None, xh
        Xs = X[l][..., supp]                                         # (F,NB,A,s)
        ll = -np.abs(mk[..., None, :] - Xs) ** 2 / vk[..., None, :]
        lp = _normalise(pri[l] + ll.sum(axis=-1))
        p = np.exp(lp)
        pm = np.einsum("...a,...ak->...k", p, Xs)
        pv = np.einsum("...a,...ak->...k", p, np.abs(Xs) ** 2) - np.abs(pm) ** 2
        return pm, np.maximum(pv, floor), lp, p @ problem.layers[l].points

    for it in range(cfg.inner_iters):
        # RE nodes: residual after removing every other layer's message
        tot_m = m_lr.sum(axis=2, keepdims=True)
        tot_v = v_lr.sum(axis=2, keepdims=True)
        new_m = np.where(mask, problem.y[:, :, None, :] - (tot_m - m_lr), 0.0)
        new_v = np.where(mask, s2 + (tot_v - v_lr), big)
        if counter is not None:
            counter.add(F * NB * (2 * K + 4 * n_edges))
        if it > 0 and cfg.damping > 0:
            new_m = (1 - cfg.damping) * new_m + cfg.damping * m_rl
            new_v = (1 - cfg.damping) * new_v + cfg.damping * v_rl
        m_rl, v_rl = new_m, np.maximum(new_v, floor)
        # layer nodes: moment matching and cavity division
        upd_m, upd_v = m_lr.copy(), v_lr.copy()
        for l in range(L):
            supp = problem.layers[l].support
            mk, vk = m_rl[:, :, l][..., supp], v_rl[:, :, l][..., supp]
            pm, pv, lp, xh = layer_posterior(l, mk, vk)
            if counter is not None:
                counter.add(F * NB * (X[l].shape[-2] * (3 * supp.size + 2) + 4 * supp.size))
            if lp is not None:
                logp[l] = lp
            means[l] = xh
            prec = 1.0 / pv - 1.0 / vk
            ok = prec > 1.0 / big
            ev = 1.0 / np.where(ok, prec, 1.0)
            em = ev * (pm / pv - mk / vk)
            upd_v[:, :, l, supp] = np.where(ok, np.maximum(ev, floor), v_lr[:, :, l][..., supp])
            upd_m[:, :, l, supp] = np.where(ok, em, m_lr[:, :, l][..., supp])
        if cfg.damping > 0:
            upd_m = (1 - cfg.damping) * upd_m + cfg.damping * m_lr
            upd_v = (1 - cfg.damping) * upd_v + cfg.damping * v_lr
        m_lr, v_lr = upd_m, upd_v
    out = []
    for l in range(L):
        supp = problem.layers[l].support
        pm, pv, lp, xh = layer_posterior(l, m_rl[:, :, l][..., supp], v_rl[:, :, l][..., supp])
        means[l] = xh
        out.append(lp if lp is not None else logp[l])
    return out, means


# ---------------------------------------------------------------------------
# elementary signal estimator (chip-by-chip soft cancellation)

def ese_detect(problem: RxProblem, config: DetectorConfig | None = None,
               priors=None) -> SymbolPosterior:
    """Chip-level soft interference cancellation with Gaussian interference.

    Each chip of each layer is observed as ``y_k = x_{l,k} + zeta``, with
    ``zeta`` Gaussian with the mean/variance of all other layers' chips (from
    their current soft estimates) plus noise. Chip likelihoods of a layer are
    combined over its REs.
    """
    cfg = config or DetectorConfig("ese")
    pri = _priors_or_uniform(problem, priors)
    L = len(problem.layers)
    s2 = max(problem.noise_var, cfg.variance_floor)
    X = [problem.effective_alphabet(l) for l in range(L)]
    logp = [np.array(p) for p in pri]
    out = logp
    for _ in range(cfg.inner_iters):
        means, vars_ = [], []
        for l in range(L):
            p = np.exp(logp[l])
            mu = np.einsum("...a,...ak->...k", p, X[l])
            means.append(mu)
            vars_.append(np.einsum("...a,...ak->...k", p, np.abs(X[l]) ** 2) - np.abs(mu) ** 2)
        tm = sum(means)
        tv = sum(vars_)
        out = []
        for l in range(L):
            supp = problem.layers[l].support
            zm = (problem.y - tm + means[l])[..., supp]
            zv = np.maximum((tv - vars_[l])[..., supp] + s2, cfg.variance_floor)
            ll = -np.sum(np.abs(zm[..., None, :] - X[l][..., supp]) ** 2 / zv[..., None, :], axis=-1)
            out.append(_normalise(pri[l] + ll))
        # next pass conditions on the fresh beliefs; the emitted posterior stays extrinsic-per-chip
        logp = out
    return SymbolPosterior(out, list(problem.layer_users))


_DISPATCH = {
    "mf": mf_detect,
    "mmse_su": mmse_detect,
    "mmse_mu": mmse_detect,
    "map_exhaustive": map_exhaustive_detect,
    "mpa": mpa_detect,
    "epa": epa_detect,
    "ese": ese_detect,
}


def detect(problem: RxProblem, config: DetectorConfig, priors=None) -> SymbolPosterior:
    return _DISPATCH[config.kind](problem, config, priors)
