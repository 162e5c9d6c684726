"""Symbol posteriors -> coded-bit LLRs in decoder order."""
from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from ..fec import DEFAULT_LLR_CLAMP, clamp_llrs
from .detectors import SymbolPosterior
from .problem import bit_log_probs


def layer_bit_llrs(log_probs, labels, prior_bit_llrs=None) -> np.ndarray:
    """Exact bit marginalisation of a label posterior.

    ``log_probs`` (…, A); ``labels`` (A, nb). With ``prior_bit_llrs`` (…, nb) the
    own-bit prior is removed from each bit's numerator/denominator, giving the
    exact extrinsic LLR when the posterior was formed with those bit priors.
    """
    lp = np.asarray(log_probs, dtype=float)
    lab = np.asarray(labels).astype(bool)
    nb = lab.shape[1]
    out = np.empty(lp.shape[:-1] + (nb,))
    for i in range(nb):
        li = lp
        if prior_bit_llrs is not None:
            p0, p1 = bit_log_probs(prior_bit_llrs[..., i])
            li = lp - np.where(lab[:, i], p1[..., None], p0[..., None])
        l0 = logsumexp(np.where(lab[:, i], -np.inf, li), axis=-1)
        l1 = logsumexp(np.where(lab[:, i], li, -np.inf), axis=-1)
        with np.errstate(invalid="ignore"):
            d = l0 - l1
        out[..., i] = np.where(np.isnan(d), 0.0, d)
    return out


def demap_to_llrs(posterior: SymbolPosterior, chains, prior_bit_llrs=None,
                  clamp: float = DEFAULT_LLR_CLAMP) -> list[np.ndarray]:
    """Per-user coded-bit LLRs (F, coded_len), de-interleaved and de-scrambled.

    ``chains`` lists one :class:`TxChain` per user in problem order;
    ``prior_bit_llrs`` (per layer, optional) selects extrinsic output.
    """
    n_users = len(chains)
    blocks = [None] * n_users
    for i, (lp, u) in enumerate(zip(posterior.log_probs, posterior.layer_users)):
        layer = chains[u].layers[[j for j, v in enumerate(posterior.layer_users) if v == u].index(i)]
        pb = None if prior_bit_llrs is None else prior_bit_llrs[i]
        L = layer_bit_llrs(lp, layer.labels, pb)
        if blocks[u] is None:
            blocks[u] = np.zeros(lp.shape[:-1] + (chains[u].signature.bits_per_block,))
        blocks[u][..., layer.bit_offset:layer.bit_offset + layer.n_bits] = L
    return [clamp_llrs(chains[u].block_llrs_to_coded(blocks[u]), clamp) for u in range(n_users)]
