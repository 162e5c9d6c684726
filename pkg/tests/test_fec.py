import itertools

import numpy as np
import pytest

from nomasim.errors import ConfigurationError, ContractError
from nomasim.fec import (ConvCodeParams, CrcParams, bcjr_decode, conv_encode, crc_attach,
                         crc_check, crc_remainder, hard_decision)

K3 = ConvCodeParams(3, (0o7, 0o5))


def shift_register_encode(bits, gens, K):
    """Plain bitwise reference encoder, written independently of the package."""
    reg = [0] * K
    out = []
    for b in list(bits) + [0] * (K - 1):
        reg = [b] + reg[:-1]
        for g in gens:
            taps = [(g >> (K - 1 - i)) & 1 for i in range(K)]
            out.append(sum(t * r for t, r in zip(taps, reg)) % 2)
    return np.array(out, np.uint8)


def test_all_zero_input():
    assert not conv_encode(np.zeros(10, np.uint8), K3).any()


def test_single_one_k3():
    assert conv_encode([1], K3).tolist() == [1, 1, 1, 0, 1, 1]


def test_1011_default_code_vs_shift_register():
    got = conv_encode([1, 0, 1, 1])
    ref = shift_register_encode([1, 0, 1, 1], (0o133, 0o171), 7)
    assert got.tolist() == ref.tolist()
    assert got.size == 2 * (4 + 6)


def test_random_blocks_vs_shift_register():
    rng = np.random.default_rng(3)
    for _ in range(20):
        u = rng.integers(0, 2, 40)
        assert np.array_equal(conv_encode(u), shift_register_encode(u, (0o133, 0o171), 7))


def test_batched_encode_matches_rows():
    rng = np.random.default_rng(4)
    u = rng.integers(0, 2, (5, 12)).astype(np.uint8)
    enc = conv_encode(u)
    for i in range(5):
        assert np.array_equal(enc[i], conv_encode(u[i]))


@pytest.mark.parametrize("K,gens", [(1, (1, 1)), (3, (0o7,)), (3, (0o17, 0o5)), (3, (0o2, 0o2))])
def test_invalid_params(K, gens):
    with pytest.raises(ConfigurationError):
        ConvCodeParams(K, gens)


def test_from_octal():
    assert ConvCodeParams.from_octal(7, [133, 171]) == ConvCodeParams()


def test_bcjr_noiseless_all_zero():
    r = bcjr_decode(np.full(ConvCodeParams().coded_length(20), 30.0))
    assert not r.hard_bits.any()
    assert (r.app_llrs > 0).all()


def test_bcjr_prior_dominates():
    params = ConvCodeParams()
    r = bcjr_decode(np.zeros(params.coded_length(16)), np.full(16, 20.0))
    assert not r.hard_bits.any()


def exhaustive_bit_map(ch, prior, gens, K, n_info):
    words = np.array(list(itertools.product((0, 1), repeat=n_info)))
    cws = np.array([shift_register_encode(w, gens, K) for w in words]).astype(int)
    metric = 0.5 * ((1 - 2 * cws) * ch).sum(axis=1) + 0.5 * ((1 - 2 * words) * prior).sum(axis=1)
    out = []
    for j in range(n_info):
        out.append(np.logaddexp.reduce(metric[words[:, j] == 0])
                   - np.logaddexp.reduce(metric[words[:, j] == 1]))
    return np.array(out)


@pytest.mark.parametrize("K,gens", [(3, (0o7, 0o5)), (7, (0o133, 0o171))])
def test_bcjr_matches_enumeration(K, gens):
    rng = np.random.default_rng(11)
    params = ConvCodeParams(K, gens)
    for _ in range(5):
        ch = rng.normal(0, 2.5, params.coded_length(8))
        for prior in (np.zeros(8), rng.normal(0, 1.5, 8)):
            r = bcjr_decode(ch, prior, params)
            assert np.abs(r.app_llrs - exhaustive_bit_map(ch, prior, gens, K, 8)).max() < 1e-9


def test_extrinsic_decomposition_systematic():
    params = ConvCodeParams(3, (0o4, 0o7))     # first output is the systematic bit
    rng = np.random.default_rng(5)
    ch = rng.normal(0, 2, params.coded_length(10))
    pr = rng.normal(0, 1, 10)
    r = bcjr_decode(ch, pr, params)
    assert np.allclose(r.intrinsic_llrs, ch.reshape(-1, 2)[:10, 0])
    assert np.abs(r.app_llrs - pr - r.intrinsic_llrs - r.extrinsic_llrs).max() < 1e-12


def test_max_log_close_at_high_snr():
    params = ConvCodeParams()
    u = np.random.default_rng(6).integers(0, 2, 30)
    ch = 8.0 * (1 - 2 * conv_encode(u).astype(float))
    exact = bcjr_decode(ch, params=params)
    approx = bcjr_decode(ch, params=params, max_log=True)
    assert np.array_equal(exact.hard_bits, approx.hard_bits)
    assert np.array_equal(exact.hard_bits, u)


def test_bcjr_length_errors():
    with pytest.raises(ContractError):
        bcjr_decode(np.zeros(13))
    with pytest.raises(ContractError):
        bcjr_decode(np.zeros(ConvCodeParams().coded_length(8)), np.zeros(7))


def test_hard_decision_tie_is_zero():
    assert hard_decision([0.0, -0.0, -1e-300, 1.0]).tolist() == [0, 0, 1, 0]


def test_crc_check_value():
    bits = np.unpackbits(np.frombuffer(b"123456789", np.uint8))
    assert int(crc_remainder(bits)) == 0x29B1


def test_crc_round_trip_and_single_flips():
    rng = np.random.default_rng(7)
    payload = rng.integers(0, 2, 8).astype(np.uint8)
    block = crc_attach(payload)
    assert crc_check(block)
    for i in range(block.size):
        bad = block.copy()
        bad[i] ^= 1
        assert not crc_check(bad)


def test_crc_double_flips_64_bits():
    payload = np.random.default_rng(8).integers(0, 2, 64).astype(np.uint8)
    block = crc_attach(payload)
    n = block.size
    i, j = np.triu_indices(n, 1)
    bad = np.repeat(block[None], i.size, axis=0)
    bad[np.arange(i.size), i] ^= 1
    bad[np.arange(i.size), j] ^= 1
    assert not crc_check(bad).any()


def test_crc_short_block_is_false():
    assert crc_check(np.zeros(16, np.uint8)) is False
    assert crc_check(np.zeros(3, np.uint8)) is False


@pytest.mark.parametrize("width,poly", [(8, 0x07), (24, 0x864CFB)])
def test_other_widths(width, poly):
    p = CrcParams(width, poly, 0, 0)
    b = crc_attach(np.random.default_rng(9).integers(0, 2, 30).astype(np.uint8), p)
    assert b.size == 30 + width and crc_check(b, p)


def test_crc_invalid_width():
    with pytest.raises(ConfigurationError):
        CrcParams(12, 0x80F)
