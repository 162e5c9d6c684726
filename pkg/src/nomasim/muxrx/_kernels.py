"""Compiled inner loops for the sum-product (MPA) detector."""
import numpy as np
from numba import njit

_LOG_FLOOR = -700.0


@njit(cache=True)
def mpa_kernel(y, S, asz, logprior, re_ptr, edge_layer, layer_ptr, layer_edges,
               noise_var, iters, damping):
    """Flooding-schedule sum-product on the RE/layer factor graph, one block at a time.

    y: (N, K); S: (N, L, A, K) effective alphabets; logprior: (N, L, A).
    Messages are kept as normalised log-probabilities. Function-node sums are
    exact: each RE's joint likelihood is exponentiated once relative to its
    maximum and combined with exponentiated incoming messages.
    """
    N, K = y.shape
    L, Amax = logprior.shape[1], logprior.shape[2]
    E = edge_layer.shape[0]
    out = np.full((N, L, Amax), -np.inf)

    # combination counts and scratch offsets per RE
    ncomb = np.ones(K, np.int64)
    max_deg = 0
    for k in range(K):
        d = re_ptr[k + 1] - re_ptr[k]
        if d > max_deg:
            max_deg = d
        for e in range(re_ptr[k], re_ptr[k + 1]):
            ncomb[k] *= asz[edge_layer[e]]
    off = np.zeros(K + 1, np.int64)
    for k in range(K):
        off[k + 1] = off[k] + ncomb[k]
    lik = np.empty(off[K])
    q = np.empty((E, Amax))
    qp = np.empty((E, Amax))
    r = np.zeros((E, Amax))
    acc = np.empty((max(max_deg, 1), Amax))
    dig = np.zeros(max(max_deg, 1), np.int64)

    for n in range(N):
        # per-RE likelihood of every combination (does not change across iterations)
        for k in range(K):
            deg = re_ptr[k + 1] - re_ptr[k]
            for i in range(deg):
                dig[i] = 0
            mx = -np.inf
            for c in range(ncomb[k]):
                s = y[n, k]
                for i in range(deg):
                    s -= S[n, edge_layer[re_ptr[k] + i], dig[i], k]
                v = -(s.real * s.real + s.imag * s.imag) / noise_var
                lik[off[k] + c] = v
                if v > mx:
                    mx = v
                # mixed-radix increment, first neighbour fastest
                for i in range(deg):
                    dig[i] += 1
                    if dig[i] < asz[edge_layer[re_ptr[k] + i]]:
                        break
                    dig[i] = 0
            for c in range(ncomb[k]):
                lik[off[k] + c] = np.exp(lik[off[k] + c] - mx)

        for e in range(E):
            l = edge_layer[e]
            m = -np.inf
            for a in range(Amax):
                q[e, a] = logprior[n, l, a] if a < asz[l] else -np.inf
                if q[e, a] > m:
                    m = q[e, a]
            for a in range(Amax):
                q[e, a] -= m
                qp[e, a] = np.exp(q[e, a])
                r[e, a] = 0.0

        for it in range(iters):
            # function (RE) nodes
            for k in range(K):
                deg = re_ptr[k + 1] - re_ptr[k]
                e0 = re_ptr[k]
                for i in range(deg):
                    dig[i] = 0
                    for a in range(Amax):
                        acc[i, a] = 0.0
                for c in range(ncomb[k]):
                    w = lik[off[k] + c]
                    if w > 0.0:
                        for i in range(deg):
                            p = w
                            for j in range(deg):
                                if j != i:
                                    p *= qp[e0 + j, dig[j]]
                            acc[i, dig[i]] += p
                    for i in range(deg):
                        dig[i] += 1
                        if dig[i] < asz[edge_layer[e0 + i]]:
                            break
                        dig[i] = 0
                for i in range(deg):
                    e = e0 + i
                    na = asz[edge_layer[e]]
                    m = -np.inf
                    for a in range(na):
                        v = np.log(acc[i, a]) if acc[i, a] > 0.0 else _LOG_FLOOR
                        if v < _LOG_FLOOR:
                            v = _LOG_FLOOR
                        acc[i, a] = v
                        if v > m:
                            m = v
                    for a in range(na):
                        v = acc[i, a] - m
                        if it > 0 and damping > 0.0:
                            v = (1.0 - damping) * v + damping * r[e, a]
                        r[e, a] = v
            # variable (layer) nodes
            for l in range(L):
                na = asz[l]
                for t in range(layer_ptr[l], layer_ptr[l + 1]):
                    e = layer_edges[t]
                    m = -np.inf
                    for a in range(na):
                        v = logprior[n, l, a]
                        for t2 in range(layer_ptr[l], layer_ptr[l + 1]):
                            if t2 != t:
                                v += r[layer_edges[t2], a]
                        q[e, a] = v
                        if v > m:
                            m = v
                    for a in range(na):
                        q[e, a] -= m
                        qp[e, a] = np.exp(q[e, a])

        # beliefs
        for l in range(L):
            na = asz[l]
            m = -np.inf
            for a in range(na):
                v = logprior[n, l, a]
                for t in range(layer_ptr[l], layer_ptr[l + 1]):
                    v += r[layer_edges[t], a]
                out[n, l, a] = v
                if v > m:
                    m = v
            tot = 0.0
            for a in range(na):
                tot += np.exp(out[n, l, a] - m)
            lse = m + np.log(tot)
            for a in range(na):
                out[n, l, a] -= lse
    return out
