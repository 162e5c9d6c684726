"""Randomized invariants, 10^3 examples each (derandomized for reproducible runs)."""
import numpy as np
from helpers import signature
from hypothesis import given, settings
from hypothesis import strategies as st

from nomasim.channel import ChannelRealization, superimpose
from nomasim.fec import DEFAULT_CODE, CrcParams, conv_encode, crc_attach, crc_check
from nomasim.grantfree import ContentionRegion, PhyConfig, TrafficConfig, simulate_replicas
from nomasim.muxrx import DetectorConfig, build_problem, demap_to_llrs, detect
from nomasim.sigpool import build_sparse_patterns
from nomasim.txchain import (MODES, TxChain, assemble_tx_block, deinterleave_bits,
                             interleave_bits, scramble_bits)

N = 1000
PROP = settings(max_examples=N, deadline=None, derandomize=True)
SEEDS = st.integers(0, 2 ** 32 - 1)
DETECTORS = ("mf", "mmse_su", "mmse_mu", "map_exhaustive", "mpa", "epa", "ese")


def _bits(seed, n):
    return np.random.default_rng(seed).integers(0, 2, n).astype(np.uint8)


# -- posterior normalization (muxrx) ----------------------------------------


@PROP
@given(seed=SEEDS, mode=st.sampled_from(MODES), n_users=st.integers(1, 3),
       kind=st.sampled_from(DETECTORS), snr_db=st.floats(-5.0, 25.0))
def test_posteriors_normalized(seed, mode, n_users, kind, snr_db):
    rng = np.random.default_rng(seed)
    sigs = [signature(mode, user=u, index=u) for u in range(n_users)]
    nb = 2
    K = sigs[0].n_re
    x = np.zeros((n_users, nb * K), complex)
    for u, s in enumerate(sigs):
        for layer in s.layers:
            x[u] += layer.alphabet[rng.integers(layer.size, size=nb)].reshape(-1)
    g = (rng.normal(size=x.shape) + 1j * rng.normal(size=x.shape)) / np.sqrt(2)
    ch = ChannelRealization(g, 10.0 ** (-snr_db / 10.0))
    problem = build_problem(superimpose(x, ch, seed), ch, sigs)
    post = detect(problem, DetectorConfig(kind))
    for lp in post.log_probs:
        p = np.exp(lp)
        assert np.all(np.isfinite(lp) | (p == 0))
        assert np.abs(p.sum(axis=-1) - 1.0).max() < 1e-9


# -- energy conservation (txchain) ------------------------------------------


@PROP
@given(seed=SEEDS, mode=st.sampled_from(MODES), index=st.integers(0, 5),
       power_db=st.floats(-20.0, 20.0), interleave=st.booleans(),
       modulation=st.sampled_from(["qpsk", "qam16"]))
def test_energy_conservation(seed, mode, index, power_db, interleave, modulation):
    if mode in ("rep_sparse", "indep_sparse"):
        index %= 6
    if mode == "joint_codebook":
        modulation = "qpsk"
    sig = signature(mode, index=index, power_offset_db=power_db, bit_interleaver=interleave,
                    modulation=modulation)
    blk = assemble_tx_block(_bits(seed, 32), sig)
    energy = np.sum(np.abs(blk.chips) ** 2)
    if modulation == "qpsk":
        ref = blk.n_blocks                      # unit energy per block
    else:
        ref = np.sum(np.abs(assemble_tx_block(_bits(seed, 32), signature(
            mode, index=index, bit_interleaver=interleave, modulation=modulation)).chips) ** 2)
    assert abs(energy / (10.0 ** (power_db / 10.0) * ref) - 1.0) < 1e-9
    support = np.abs(blk.chips.reshape(-1, sig.n_re)).sum(axis=0) > 0
    assert not np.any(support & ~sig.mask.astype(bool))


# -- scrambler involution (txchain) -----------------------------------------


@PROP
@given(seed=SEEDS, key=st.integers(0, 2 ** 31 - 1), n=st.integers(0, 600))
def test_scrambler_involution(seed, key, n):
    b = _bits(seed, n)
    s = scramble_bits(b, key)
    assert np.array_equal(scramble_bits(s, key), b)


# -- packet conservation and collision pigeonhole (grantfree) ---------------


@PROP
@given(seed=st.integers(0, 10 ** 6), n_users=st.integers(1, 6), lam=st.floats(0.0, 1.0),
       n_slots=st.integers(1, 6), attempts=st.integers(1, 4), budget=st.integers(1, 4),
       pool=st.integers(1, 4))
def test_packet_conservation(seed, n_users, lam, n_slots, attempts, budget, pool):
    t = TrafficConfig(n_users, lam, 32, attempts, budget)
    c = simulate_replicas(t, "ofdma_baseline", n_slots, seed, [0], PhyConfig(pool_size=pool))
    assert np.array_equal(c.offered, c.delivered + c.dropped + c.in_flight)
    assert np.all(c.in_flight <= budget) and not c.late.any()
    assert 0 <= c.collisions <= c.transmissions <= n_users * n_slots


@PROP
@given(choices=st.lists(st.integers(0, 5), max_size=30), pool=st.integers(1, 6))
def test_collision_pigeonhole(choices, pool):
    choices = [c % pool for c in choices]
    reg = ContentionRegion(0, 216, list(range(len(choices))), choices)
    assert reg.n_collisions >= max(0, len(choices) - pool)
    assert reg.n_collisions == len(choices) - len(set(choices))


@PROP
@given(seed=st.integers(0, 10 ** 6), n_users=st.integers(2, 8), pool=st.integers(1, 3))
def test_collision_pigeonhole_in_simulation(seed, n_users, pool):
    log = []
    simulate_replicas(TrafficConfig(n_users, 1.0, 32, 1, 1), "ofdma_baseline", 1, seed, [0],
                      PhyConfig(pool_size=pool), region_log=log)
    (_, reg), = log
    assert len(reg.active_users) == n_users
    assert reg.n_collisions >= n_users - pool > 0 or pool >= n_users
    n_flagged = sum(o["collided"] for o in reg.outcomes.values())
    assert n_flagged >= (2 if reg.n_collisions else 0)
    assert not any(o["decoded"] and o["collided"] for o in reg.outcomes.values())


# -- further structural invariants ------------------------------------------


@PROP
@given(a=SEEDS, b=SEEDS, n=st.integers(1, 80))
def test_conv_code_is_linear(a, b, n):
    x, y = _bits(a, n), _bits(b, n)
    assert np.array_equal(conv_encode(x ^ y, DEFAULT_CODE),
                          conv_encode(x, DEFAULT_CODE) ^ conv_encode(y, DEFAULT_CODE))


@PROP
@given(seed=SEEDS, n=st.integers(1, 200), width=st.sampled_from([8, 16, 24]),
       flip=st.integers(0, 10 ** 6))
def test_crc_round_trip_and_single_error(seed, n, width, flip):
    params = {8: CrcParams(8, 0x07, 0x00), 16: CrcParams(),
              24: CrcParams(24, 0x864CFB, 0xB704CE)}[width]
    word = crc_attach(_bits(seed, n), params)
    assert crc_check(word, params)
    word[flip % word.size] ^= 1
    assert not crc_check(word, params)


@PROP
@given(seed=SEEDS, n=st.integers(1, 300))
def test_interleave_inverse(seed, n):
    rng = np.random.default_rng(seed)
    b, p = rng.integers(0, 2, n), rng.permutation(n)
    assert np.array_equal(deinterleave_bits(interleave_bits(b, p), p), b)


@PROP
@given(n_re=st.integers(1, 8), weight=st.integers(1, 8), unequal=st.booleans())
def test_patterns_unit_energy(n_re, weight, unequal):
    weight = min(weight, n_re)
    pats = build_sparse_patterns(n_re, weight, unequal)
    for p in pats:
        assert abs(np.sum(np.abs(p.weights) ** 2) - 1.0) < 1e-12
        assert p.mask.sum() == weight


@PROP
@given(seed=SEEDS, mode=st.sampled_from(MODES), snr_db=st.floats(-5.0, 20.0))
def test_demap_llrs_finite_and_clamped(seed, mode, snr_db):
    rng = np.random.default_rng(seed)
    chain = TxChain(signature(mode), 32)
    chips, _ = chain.transmit(rng.integers(0, 2, (1, 32), dtype=np.uint8))
    ch = ChannelRealization(np.ones_like(chips), 10.0 ** (-snr_db / 10.0))
    problem = build_problem(superimpose(chips, ch, seed), ch, [chain])
    L = demap_to_llrs(detect(problem, DetectorConfig("mf")), [chain])[0]
    assert np.all(np.isfinite(L)) and np.abs(L).max() <= 30.0
