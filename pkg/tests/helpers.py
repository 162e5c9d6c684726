"""Shared builders for the test suite."""
import numpy as np

from nomasim.sigpool import (build_interleaver_pool, build_scma_codebook, build_sparse_patterns,
                             build_spreading_pool)
from nomasim.txchain import NomaSignature, TxChain

PAYLOAD = 32
CODED_LEN = 2 * (PAYLOAD + 16 + 6)


def signature(mode: str, user: int = 0, index: int = 0, power_offset_db: float = 0.0,
              scrambler_seed: int | None = None, bit_interleaver: bool = False,
              modulation: str = "qpsk", coded_len: int = CODED_LEN) -> NomaSignature:
    seed = user + 1 if scrambler_seed is None else scrambler_seed
    kw = dict(user_id=user, mode=mode, scrambler_seed=seed, power_offset_db=power_offset_db,
              modulation=modulation)
    if mode == "seq_dense":
        kw["spreading"] = build_spreading_pool(4, 8)[index]
    elif mode == "rep_sparse":
        kw["pattern"] = build_sparse_patterns(4, 2)[index]
    elif mode == "indep_sparse":
        kw["pattern"] = build_sparse_patterns(4, 2)[index]
        bpb = 2 * (2 if modulation == "qpsk" else 4)
        n_sym = -(-coded_len // bpb) * 2
        kw["symbol_interleaver"] = build_interleaver_pool(n_sym, index + 1, 99)[index]
    else:
        kw["codebook"] = build_scma_codebook(layer=index)
    if bit_interleaver:
        kw["bit_interleaver"] = build_interleaver_pool(coded_len, 1, 7 + user)[0]
    return NomaSignature(**kw)


def chains(mode: str, n_users: int, payload: int = PAYLOAD, **kw) -> list[TxChain]:
    return [TxChain(signature(mode, user=u, index=u, **kw), payload) for u in range(n_users)]


def random_payloads(rng, n_frames, n_users, bits=PAYLOAD):
    return rng.integers(0, 2, (n_frames, n_users, bits), dtype=np.uint8)
