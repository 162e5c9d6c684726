"""Config specs -> simulation objects."""
from __future__ import annotations

from functools import lru_cache

from ..errors import ConfigurationError
from ..fec import ConvCodeParams, CrcParams
from ..grantfree import PhyConfig
from ..muxrx import DetectorConfig, OuterLoopConfig
from ..sigpool import (build_interleaver_pool, build_scma_codebook, build_sparse_patterns,
                       build_spreading_pool)
from ..txchain import NomaSignature, TxChain, bits_per_symbol
from .config import DetectorSpec, LinkScheme, OuterSpec, PhySpec, UserSpec


@lru_cache(maxsize=None)
def _spreading_pool(length: int, size: int, alphabet: str):
    return build_spreading_pool(length, size, alphabet)


def fec_params(scheme: LinkScheme):
    if scheme.fec is None:
        return None
    return ConvCodeParams.from_octal(scheme.fec.constraint_length, scheme.fec.generators_octal)


def crc_params(scheme: LinkScheme):
    if scheme.crc is None:
        return None
    c = scheme.crc
    return CrcParams(c.width, c.polynomial, c.init, c.final_xor)


def _interleaver(n: int, index: int, master_seed: int):
    return build_interleaver_pool(n, index + 1, master_seed)[index]


def build_signature(spec: UserSpec, user_id: int, coded_len: int, master_seed: int) -> NomaSignature:
    kw = dict(user_id=user_id, mode=spec.mode, scrambler_seed=spec.scrambler_seed,
              modulation=spec.modulation, power_offset_db=spec.power_offset_db)
    if spec.mode == "seq_dense":
        s = spec.spreading
        kw["spreading"] = _spreading_pool(s.length, s.index + 1, s.alphabet)[s.index]
    elif spec.mode in ("rep_sparse", "indep_sparse"):
        p = spec.pattern
        pats = build_sparse_patterns(p.n_re, p.weight, p.unequal)
        if p.index >= len(pats):
            raise ConfigurationError(f"pattern index {p.index} out of range ({len(pats)} patterns)")
        kw["pattern"] = pats[p.index]
        if spec.mode == "indep_sparse":
            bpb = p.weight * bits_per_symbol(spec.modulation)
            n_sym = -(-coded_len // bpb) * p.weight
            kw["symbol_interleaver"] = _interleaver(n_sym, spec.symbol_interleaver, master_seed)
    else:
        c = spec.codebook
        kw["codebook"] = build_scma_codebook(seed_design=c.design, layer=c.layer, rotation=c.rotation)
    if spec.bit_interleaver is not None:
        kw["bit_interleaver"] = _interleaver(coded_len, spec.bit_interleaver, master_seed)
    return NomaSignature(**kw)


def build_chains(scheme: LinkScheme, master_seed: int) -> list[TxChain]:
    fec, crc = fec_params(scheme), crc_params(scheme)
    info_len = scheme.payload_bits + (crc.width if crc else 0)
    coded_len = fec.coded_length(info_len) if fec else info_len
    chains = [TxChain(build_signature(u, i, coded_len, master_seed), scheme.payload_bits, fec, crc)
              for i, u in enumerate(scheme.users)]
    spans = {c.n_re_total for c in chains}
    if len(spans) != 1:
        raise ConfigurationError(f"scheme {scheme.name}: users occupy different RE spans {sorted(spans)}")
    return chains


def detector_config(spec: DetectorSpec) -> DetectorConfig:
    return DetectorConfig(spec.kind, spec.inner_iters, spec.damping, spec.variance_floor,
                          spec.llr_clamp)


def outer_config(spec: OuterSpec) -> OuterLoopConfig:
    return OuterLoopConfig(spec.mode, spec.max_outer_iters, spec.sic_order)


def phy_config(spec: PhySpec, scheme: str) -> PhyConfig:
    pool = spec.noma_pool_size if scheme == "noma" else spec.ofdma_pool_size
    return PhyConfig(pool_size=pool, policy=spec.policy, snr_db=spec.snr_db,
                     snr_spread_db=spec.snr_spread_db, block_len_res=spec.block_len_res,
                     detector=detector_config(spec.detector), outer=outer_config(spec.outer))
