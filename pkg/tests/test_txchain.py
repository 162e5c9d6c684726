import numpy as np
import pytest
from helpers import CODED_LEN, signature

from nomasim.errors import ConfigurationError, ContractError
from nomasim.fec import DEFAULT_CODE, DEFAULT_CRC, conv_encode, crc_attach
from nomasim.sigpool import SpreadingSequence, build_scma_codebook, build_sparse_patterns
from nomasim.txchain import (MODES, NomaSignature, TxChain, apply_power_offset, assemble_tx_block,
                             constellation, deinterleave_bits, generate_symbol_sequence,
                             interleave_bits, modulate, scramble_bits, scrambling_sequence)

S2 = 1 / np.sqrt(2)


def test_scramble_involution_and_keystream():
    rng = np.random.default_rng(0)
    b = rng.integers(0, 2, 500).astype(np.uint8)
    assert np.array_equal(scramble_bits(scramble_bits(b, 1234), 1234), b)
    assert np.array_equal(scramble_bits(np.zeros(64, np.uint8), 9), scrambling_sequence(9, 64))


def test_scrambler_seeds_differ():
    a, b = scrambling_sequence(0, 1000), scrambling_sequence(1, 1000)
    assert np.mean(a != b) >= 0.4


def test_interleave_examples():
    b = np.array([1, 0, 0])
    assert interleave_bits(b, [0, 1, 2]).tolist() == [1, 0, 0]
    assert interleave_bits(b, [2, 1, 0]).tolist() == [0, 0, 1]
    rng = np.random.default_rng(1)
    x = rng.integers(0, 2, 40)
    p = rng.permutation(40)
    assert np.array_equal(deinterleave_bits(interleave_bits(x, p), p), x)
    with pytest.raises(ContractError):
        interleave_bits(x, np.arange(39))


def test_qpsk_convention():
    assert np.isclose(modulate([0, 0])[0], (1 + 1j) * S2)
    assert np.isclose(modulate([1, 0])[0], (-1 + 1j) * S2)
    assert np.isclose(np.mean(np.abs(constellation("qpsk")) ** 2), 1.0)
    with pytest.raises(ContractError):
        modulate([0, 1, 1])


def test_qam16_gray():
    pts = constellation("qam16")
    assert np.isclose(np.mean(np.abs(pts) ** 2), 1.0)
    assert len({complex(np.round(p, 9)) for p in pts}) == 16
    step = 2 / np.sqrt(10)
    for a in range(16):
        for b in range(16):
            if np.isclose(abs(pts[a] - pts[b]), step):
                assert bin(a ^ b).count("1") == 1


def test_seq_dense_constant_sequence():
    sig = NomaSignature(0, "seq_dense", spreading=SpreadingSequence([1, 1]))
    s = modulate([0, 1])[0]
    assert np.allclose(generate_symbol_sequence([0, 1], sig), [s * S2, s * S2])


def test_rep_sparse_definition():
    sig = NomaSignature(0, "rep_sparse", pattern=build_sparse_patterns(4, 2)[1])   # 1010
    s = modulate([1, 1])[0]
    assert np.allclose(generate_symbol_sequence([1, 1], sig), [s * S2, 0, s * S2, 0])


def test_joint_codebook_rotated_zero():
    cb = build_scma_codebook(seed_design="rotated_qpsk", layer=0, rotation=0.0)
    sig = NomaSignature(0, "joint_codebook", codebook=cb)
    q = modulate([0, 0])[0]
    assert np.allclose(generate_symbol_sequence([0, 0], sig), [q * S2, q * S2, 0, 0])


def test_indep_sparse_interleaved_symbols():
    pat = build_sparse_patterns(4, 2)[0]                     # REs 0 and 1
    perm = np.array([1, 0, 3, 2])                            # 2 blocks x 2 symbols
    sig = NomaSignature(0, "indep_sparse", pattern=pat, symbol_interleaver=perm)
    bits = np.array([0, 0, 0, 1, 1, 0, 1, 1], np.uint8)
    syms = modulate(bits)
    chips = generate_symbol_sequence(bits, sig).reshape(2, 4)
    assert np.allclose(chips[0], [syms[1] * S2, syms[0] * S2, 0, 0])
    assert np.allclose(chips[1], [syms[3] * S2, syms[2] * S2, 0, 0])


def test_signature_field_validation():
    with pytest.raises(ConfigurationError):
        NomaSignature(0, "seq_dense")
    with pytest.raises(ConfigurationError):
        NomaSignature(0, "rep_sparse", pattern=build_sparse_patterns(4, 2)[0],
                      spreading=SpreadingSequence([1]))
    with pytest.raises(ConfigurationError):
        NomaSignature(0, "indep_sparse", pattern=build_sparse_patterns(4, 2)[0])
    with pytest.raises(ConfigurationError):
        NomaSignature(0, "seq_dense", spreading=SpreadingSequence([1]), power_offset_db=21)
    with pytest.raises(ConfigurationError):
        NomaSignature(0, "bogus")


def test_power_offset():
    x = np.array([1.0 + 0j])
    assert np.array_equal(apply_power_offset(x, 0.0), x)
    assert abs(np.sum(np.abs(apply_power_offset(x, -6.0206)) ** 2) - 0.25) < 1e-6
    rng = np.random.default_rng(2)
    v = rng.normal(size=8) + 1j * rng.normal(size=8)
    assert np.allclose(apply_power_offset(apply_power_offset(v, 3), -3), v, atol=1e-12)


@pytest.mark.parametrize("mode", MODES)
def test_assemble_deterministic_and_energy(mode):
    rng = np.random.default_rng(3)
    info = rng.integers(0, 2, 32).astype(np.uint8)
    sig = signature(mode, power_offset_db=-4.5, bit_interleaver=True)
    a = assemble_tx_block(info, sig)
    b = assemble_tx_block(info, sig)
    assert np.array_equal(a.chips, b.chips)
    energy = np.sum(np.abs(a.chips) ** 2)
    assert abs(energy - 10 ** (-0.45) * a.n_blocks) < 1e-9


@pytest.mark.parametrize("mode", MODES)
def test_support_matches_mask(mode):
    sig = signature(mode, index=2)
    info = np.random.default_rng(4).integers(0, 2, 32).astype(np.uint8)
    chips = assemble_tx_block(info, sig).chips.reshape(-1, 4)
    assert np.array_equal(np.abs(chips).sum(axis=0) > 0, sig.mask.astype(bool))


def test_stage_by_stage_replay():
    rng = np.random.default_rng(5)
    info = rng.integers(0, 2, 32).astype(np.uint8)
    sig = signature("seq_dense", scrambler_seed=0, power_offset_db=2.0)
    coded = conv_encode(crc_attach(info, DEFAULT_CRC), DEFAULT_CODE)
    expected = apply_power_offset(generate_symbol_sequence(scramble_bits(coded, 0), sig), 2.0)
    assert np.array_equal(assemble_tx_block(info, sig).chips, expected)


def test_chain_block_llr_mapping_inverts():
    for mode in MODES:
        chain = TxChain(signature(mode, bit_interleaver=True), 32)
        L = np.random.default_rng(6).normal(size=(3, CODED_LEN))
        back = chain.block_llrs_to_coded(chain.coded_llrs_to_block(L))
        assert np.allclose(back, L)


def test_orthogonal_dense_separable():
    a = NomaSignature(0, "seq_dense", spreading=SpreadingSequence([1, 1]))
    b = NomaSignature(1, "seq_dense", spreading=SpreadingSequence([1, -1]))
    rng = np.random.default_rng(7)
    ba, bb = rng.integers(0, 2, (2, 40)).astype(np.uint8)
    y = (generate_symbol_sequence(ba, a) + generate_symbol_sequence(bb, b)).reshape(-1, 2)
    za = y @ a.spreading.chips.conj()
    assert np.abs(za - modulate(ba)).max() < 1e-12
