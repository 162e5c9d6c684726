"""Per-user transmitter: FEC, scrambling, optional bit interleaving, symbol
sequence generation for the four signature modes, power offset, RE mapping.

Energy convention: one "block" is the group of ``n_re`` REs carrying one
spread symbol / codeword (or ``w`` independent symbols for ``indep_sparse``);
at 0 dB power offset every block has unit mean energy.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from . import fec
from .errors import ConfigurationError, ContractError
from .sigpool import ScmaCodebook, SparsePattern, SpreadingSequence, inverse_permutation, qpsk_points

MODES = ("seq_dense", "rep_sparse", "indep_sparse", "joint_codebook")
_GOLD_NC = 1600


# ---------------------------------------------------------------------------
# bit-level stages

@lru_cache(maxsize=256)
def _keystream(seed: int, n: int) -> np.ndarray:
    x1 = np.zeros(n + _GOLD_NC + 31, np.uint8)
    x2 = np.zeros_like(x1)
    x1[0] = 1
    x2[:31] = [(seed >> i) & 1 for i in range(31)]
    for i in range(n + _GOLD_NC):
        x1[i + 31] = x1[i + 3] ^ x1[i]
        x2[i + 31] = x2[i + 3] ^ x2[i + 2] ^ x2[i + 1] ^ x2[i]
    c = x1[_GOLD_NC:_GOLD_NC + n] ^ x2[_GOLD_NC:_GOLD_NC + n]
    c.setflags(write=False)
    return c


def scrambling_sequence(seed: int, n: int) -> np.ndarray:
    """Length-31 two-register Gold keystream (first register fixed to 1,0,...,0;
    second register loaded with the low 31 bits of ``seed``; 1600-chip run-in)."""
    return _keystream(int(seed) & 0x7FFFFFFF, int(n))


def scramble_bits(bits, seed: int) -> np.ndarray:
    b = np.asarray(bits, dtype=np.uint8)
    return b ^ scrambling_sequence(seed, b.shape[-1])


def interleave_bits(bits, permutation) -> np.ndarray:
    b = np.asarray(bits)
    perm = np.asarray(permutation)
    if perm.size != b.shape[-1]:
        raise ContractError(f"permutation length {perm.size} != bit length {b.shape[-1]}")
    return b[..., perm]


def deinterleave_bits(bits, permutation) -> np.ndarray:
    return interleave_bits(bits, inverse_permutation(permutation))


# ---------------------------------------------------------------------------
# modulation

def constellation(scheme: str) -> np.ndarray:
    """Points indexed by label ``m = sum(b_i * 2^(nb-1-i))`` (first bit is the MSB)."""
    if scheme == "qpsk":
        return qpsk_points()
    if scheme == "qam16":
        m = np.arange(16)
        b = [(m >> (3 - i)) & 1 for i in range(4)]
        i_amp = (1 - 2 * b[0]) * (2 - (1 - 2 * b[2]))
        q_amp = (1 - 2 * b[1]) * (2 - (1 - 2 * b[3]))
        return (i_amp + 1j * q_amp) / np.sqrt(10)
    raise ConfigurationError(f"unknown modulation {scheme!r}")


def bits_per_symbol(scheme: str) -> int:
    return int(np.log2(constellation(scheme).size))


def label_bits(n_points: int) -> np.ndarray:
    nb = int(np.log2(n_points))
    m = np.arange(n_points)
    return ((m[:, None] >> np.arange(nb - 1, -1, -1)) & 1).astype(np.uint8)


def bits_to_labels(bits, nb: int) -> np.ndarray:
    b = np.asarray(bits, dtype=np.int64)
    if b.shape[-1] % nb:
        raise ContractError(f"bit length {b.shape[-1]} not divisible by {nb}")
    b = b.reshape(b.shape[:-1] + (-1, nb))
    return b @ (1 << np.arange(nb - 1, -1, -1))


def modulate(bits, scheme: str = "qpsk") -> np.ndarray:
    pts = constellation(scheme)
    return pts[bits_to_labels(bits, int(np.log2(pts.size)))]


def apply_power_offset(chips, offset_db: float) -> np.ndarray:
    return np.asarray(chips) * 10.0 ** (offset_db / 20.0)


# ---------------------------------------------------------------------------
# signatures and layers

@dataclass(eq=False)
class NomaSignature:
    user_id: int
    mode: str
    scrambler_seed: int = 0
    modulation: str = "qpsk"
    spreading: SpreadingSequence | None = None
    pattern: SparsePattern | None = None
    codebook: ScmaCodebook | None = None
    symbol_interleaver: np.ndarray | None = None
    bit_interleaver: np.ndarray | None = None
    power_offset_db: float = 0.0

    def __post_init__(self):
        need = {"seq_dense": {"spreading"}, "rep_sparse": {"pattern"},
                "indep_sparse": {"pattern", "symbol_interleaver"},
                "joint_codebook": {"codebook"}}
        if self.mode not in need:
            raise ConfigurationError(f"unknown signature mode {self.mode!r}")
        present = {name for name in ("spreading", "pattern", "codebook", "symbol_interleaver")
                   if getattr(self, name) is not None}
        if present != need[self.mode]:
            raise ConfigurationError(
                f"mode {self.mode} needs exactly {sorted(need[self.mode])}, got {sorted(present)}")
        if not -20.0 <= self.power_offset_db <= 20.0:
            raise ConfigurationError("power_offset_db must lie in [-20, 20]")
        constellation(self.modulation)

    @property
    def n_re(self) -> int:
        if self.mode == "seq_dense":
            return self.spreading.length
        if self.mode == "joint_codebook":
            return self.codebook.n_re
        return self.pattern.n_re

    @property
    def mask(self) -> np.ndarray:
        if self.mode == "seq_dense":
            return np.ones(self.n_re, np.int8)
        if self.mode == "joint_codebook":
            return self.codebook.mask
        return self.pattern.mask

    @cached_property
    def layers(self) -> list["Layer"]:
        return signature_layers(self)

    @property
    def bits_per_block(self) -> int:
        return sum(layer.n_bits for layer in self.layers)


@dataclass(eq=False)
class Layer:
    """One independently labelled symbol stream of a user inside a block.

    The block vector sent for label ``a`` is ``points[a] @ basis.T`` (length n_re);
    ``d = basis.shape[1]`` is 1 for scalar symbols and ``n_nonzero`` for codewords.
    ``bit_offset`` locates the layer's bits inside the user's per-block bit group.
    """

    user: int
    basis: np.ndarray
    points: np.ndarray
    labels: np.ndarray
    bit_offset: int

    @property
    def alphabet(self) -> np.ndarray:
        return self.points @ self.basis.T

    @property
    def n_bits(self) -> int:
        return self.labels.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(np.abs(self.basis).sum(axis=1) > 0)


def signature_layers(sig: NomaSignature) -> list[Layer]:
    if sig.mode == "joint_codebook":
        cb = sig.codebook
        active = np.flatnonzero(cb.mask)
        basis = np.zeros((cb.n_re, active.size), complex)
        basis[active, np.arange(active.size)] = 1.0
        return [Layer(sig.user_id, basis, cb.codewords[:, active], label_bits(cb.size), 0)]
    pts = constellation(sig.modulation)
    labels = label_bits(pts.size)
    nb = labels.shape[1]
    if sig.mode == "seq_dense":
        return [Layer(sig.user_id, sig.spreading.chips[:, None], pts[:, None], labels, 0)]
    w = sig.pattern.weights
    if sig.mode == "rep_sparse":
        return [Layer(sig.user_id, w[:, None], pts[:, None], labels, 0)]
    layers = []
    for i, k in enumerate(sig.pattern.active):
        basis = np.zeros((sig.n_re, 1), complex)
        basis[k, 0] = w[k]
        layers.append(Layer(sig.user_id, basis, pts[:, None], labels, i * nb))
    return layers


def block_layout(sig: NomaSignature, n_stream_bits: int):
    """Map block bits to positions in the (padded) transmit bit stream.

    Returns ``(positions[n_blocks, bits_per_block], n_pad)``. The stream is
    zero-padded at its end to a whole number of blocks; for ``indep_sparse`` the
    symbol interleaver decides which stream symbol lands in which block slot.
    """
    bpb = sig.bits_per_block
    n_blocks = -(-n_stream_bits // bpb)
    n_pad = n_blocks * bpb - n_stream_bits
    pos = np.arange(n_blocks * bpb).reshape(n_blocks, bpb)
    if sig.mode == "indep_sparse":
        nb = sig.layers[0].n_bits
        n_sym = n_blocks * len(sig.layers)
        perm = np.asarray(sig.symbol_interleaver)
        if perm.size != n_sym:
            raise ContractError(f"symbol interleaver length {perm.size} != {n_sym} symbols")
        pos = (perm[:, None] * nb + np.arange(nb)).reshape(n_blocks, bpb)
    return pos, n_pad


def generate_symbol_sequence(stream_bits, sig: NomaSignature) -> np.ndarray:
    """Bits (already scrambled/interleaved) -> chips over n_blocks * n_re REs."""
    bits = np.asarray(stream_bits, dtype=np.uint8)
    pos, n_pad = block_layout(sig, bits.shape[-1])
    if n_pad:
        bits = np.concatenate([bits, np.zeros(bits.shape[:-1] + (n_pad,), np.uint8)], axis=-1)
    blocks = bits[..., pos]
    chips = 0
    for layer in sig.layers:
        lab = bits_to_labels(blocks[..., layer.bit_offset:layer.bit_offset + layer.n_bits],
                             layer.n_bits)[..., 0]
        chips = chips + layer.alphabet[lab]
    return chips.reshape(bits.shape[:-1] + (-1,))


@dataclass
class TxBlock:
    user_id: int
    chips: np.ndarray
    info_bits: np.ndarray
    coded_bits: np.ndarray
    n_blocks: int
    n_pad: int


class TxChain:
    """A user's full transmit chain for a fixed payload length.

    ``fec_params=None`` skips encoding (uncoded transmission), ``crc_params=None``
    skips the CRC.
    """

    def __init__(self, signature: NomaSignature, payload_bits: int,
                 fec_params: fec.ConvCodeParams | None = fec.DEFAULT_CODE,
                 crc_params: fec.CrcParams | None = fec.DEFAULT_CRC):
        if payload_bits < 1:
            raise ConfigurationError("payload_bits must be positive")
        self.signature = signature
        self.payload_bits = payload_bits
        self.fec_params = fec_params
        self.crc_params = crc_params
        self.info_len = payload_bits + (crc_params.width if crc_params else 0)
        self.coded_len = fec_params.coded_length(self.info_len) if fec_params else self.info_len
        if signature.bit_interleaver is not None and len(signature.bit_interleaver) != self.coded_len:
            raise ContractError("bit interleaver length must equal the coded length")
        self.positions, self.n_pad = block_layout(signature, self.coded_len)
        self.n_blocks = self.positions.shape[0]
        self.keystream = scrambling_sequence(signature.scrambler_seed, self.coded_len)
        self.amplitude = 10.0 ** (signature.power_offset_db / 20.0)

    @property
    def layers(self) -> list[Layer]:
        return self.signature.layers

    @property
    def n_re_total(self) -> int:
        return self.n_blocks * self.signature.n_re

    def info_with_crc(self, payload) -> np.ndarray:
        p = np.asarray(payload, dtype=np.uint8)
        return fec.crc_attach(p, self.crc_params) if self.crc_params else p

    def encode_info(self, info) -> np.ndarray:
        return fec.conv_encode(info, self.fec_params) if self.fec_params else np.asarray(info, np.uint8)

    def coded_to_stream(self, coded) -> np.ndarray:
        s = np.asarray(coded, dtype=np.uint8) ^ self.keystream
        if self.signature.bit_interleaver is not None:
            s = interleave_bits(s, self.signature.bit_interleaver)
        return s

    def transmit(self, payload):
        """payload[..., payload_bits] -> (chips[..., n_re_total], coded bits)."""
        coded = self.encode_info(self.info_with_crc(payload))
        chips = generate_symbol_sequence(self.coded_to_stream(coded), self.signature)
        return apply_power_offset(chips, self.signature.power_offset_db), coded

    # receive-side helpers: LLR re-ordering between decoder and block layout

    def block_llrs_to_coded(self, block_llrs) -> np.ndarray:
        """LLRs laid out like ``positions`` -> LLRs in decoder (coded) order."""
        b = np.asarray(block_llrs, dtype=float)
        stream = np.zeros(b.shape[:-2] + (self.positions.size,))
        stream[..., self.positions.reshape(-1)] = b.reshape(b.shape[:-2] + (-1,))
        stream = stream[..., :self.coded_len]
        if self.signature.bit_interleaver is not None:
            stream = deinterleave_bits(stream, self.signature.bit_interleaver)
        return stream * (1.0 - 2.0 * self.keystream)

    def coded_llrs_to_block(self, coded_llrs, pad_llr: float = fec.DEFAULT_LLR_CLAMP) -> np.ndarray:
        """Inverse of :meth:`block_llrs_to_coded`; padding positions get ``pad_llr`` (known 0)."""
        c = np.asarray(coded_llrs, dtype=float) * (1.0 - 2.0 * self.keystream)
        if self.signature.bit_interleaver is not None:
            c = interleave_bits(c, self.signature.bit_interleaver)
        if self.n_pad:
            c = np.concatenate([c, np.full(c.shape[:-1] + (self.n_pad,), pad_llr)], axis=-1)
        return c[..., self.positions]


def assemble_tx_block(info_bits, signature: NomaSignature,
                      fec_params: fec.ConvCodeParams | None = fec.DEFAULT_CODE,
                      crc_params: fec.CrcParams | None = fec.DEFAULT_CRC) -> TxBlock:
    info = np.asarray(info_bits, dtype=np.uint8)
    chain = TxChain(signature, info.size, fec_params, crc_params)
    chips, coded = chain.transmit(info)
    return TxBlock(signature.user_id, chips, info, coded, chain.n_blocks, chain.n_pad)
