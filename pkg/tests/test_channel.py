import numpy as np
import pytest

from nomasim.channel import (ChannelRealization, FadingConfig, draw_channel, draw_noise,
                             snr_to_noise_var, superimpose)
from nomasim.errors import ConfigurationError, ContractError


def test_awgn_unit_gains():
    ch = draw_channel(FadingConfig("awgn_unit"), 3, 16, 1)
    assert np.array_equal(ch.gains, np.ones((3, 16), complex))


def test_block_rayleigh_moment_and_blocks():
    ch = draw_channel(FadingConfig("block_rayleigh", 4), 5, 80_000, 2)
    assert 0.98 <= np.mean(np.abs(ch.gains) ** 2) <= 1.02
    g = ch.gains.reshape(5, -1, 4)
    assert np.all(g == g[..., :1])


def test_draw_channel_deterministic():
    cfg = FadingConfig("block_rayleigh", 2)
    a, b = draw_channel(cfg, 2, 8, 77), draw_channel(cfg, 2, 8, 77)
    assert np.array_equal(a.gains, b.gains)


def test_block_length_must_divide():
    with pytest.raises(ConfigurationError):
        draw_channel(FadingConfig("block_rayleigh", 3), 1, 8, 0)


def test_invalid_model_and_noise():
    with pytest.raises(ConfigurationError):
        FadingConfig("rician")
    with pytest.raises(ConfigurationError):
        ChannelRealization(np.ones((1, 2)), 0.0)


def test_snr_to_noise_var():
    assert snr_to_noise_var(0) == 1.0
    assert np.isclose(snr_to_noise_var(10), 0.1)
    assert abs(snr_to_noise_var(-3.0103) - 2.0) < 1e-4


def test_identity_channel_noiseless():
    x = np.random.default_rng(0).normal(size=(1, 12)) + 0j
    ch = ChannelRealization(np.ones((1, 12), complex), 1.0)
    assert np.array_equal(superimpose(x, ch, 0, noiseless=True), x[0])


def test_disjoint_masks_noiseless():
    x = np.zeros((2, 8), complex)
    x[0, :4] = 1 + 1j
    x[1, 4:] = -1j
    g = np.random.default_rng(1).normal(size=(2, 8)) + 1j
    y = superimpose(x, ChannelRealization(g, 0.5), 0, noiseless=True)
    assert np.allclose(y[:4], g[0, :4] * x[0, :4])
    assert np.allclose(y[4:], g[1, 4:] * x[1, 4:])


def test_three_users_direct_sum():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(3, 10)) + 1j * rng.normal(size=(3, 10))
    g = rng.normal(size=(3, 10)) + 1j * rng.normal(size=(3, 10))
    ch = ChannelRealization(g, 0.3)
    y = superimpose(list(x), ch, 5)
    n = draw_noise((10,), 0.3, 5)
    ref = np.array([sum(g[u, k] * x[u, k] for u in range(3)) + n[k] for k in range(10)])
    assert np.abs(y - ref).max() < 1e-12


def test_span_mismatch():
    with pytest.raises(ContractError):
        superimpose(np.ones((2, 5)), ChannelRealization(np.ones((2, 6)), 1.0), 0)


def test_noise_variance():
    n = draw_noise((1_000_000,), 0.37, 3)
    assert abs(np.var(n) / 0.37 - 1) < 0.01


def test_superposition_linearity():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(4, 12)) + 1j * rng.normal(size=(4, 12))
    g = rng.normal(size=(4, 12)) + 1j * rng.normal(size=(4, 12))
    full = superimpose(x, ChannelRealization(g, 0.2), 9)
    part = superimpose(x[:2], ChannelRealization(g[:2], 0.2), 9)
    rest = superimpose(x[2:], ChannelRealization(g[2:], 0.2), 9, noiseless=True)
    assert np.abs(full - part - rest).max() < 1e-12


def test_snr_profile_received_power():
    cfg = FadingConfig("block_rayleigh", 1, (0.0, -10.0))
    ch = draw_channel(cfg, 2, 1_000_000, 6)
    p = np.mean(np.abs(ch.gains) ** 2, axis=1)
    assert abs(p[0] - 1) < 0.01 and abs(p[1] / 0.1 - 1) < 0.01


def test_frame_axis():
    ch = draw_channel(FadingConfig("block_rayleigh", 2), 3, 8, 1, snr_db=5, n_frames=4)
    assert ch.gains.shape == (4, 3, 8)
    assert np.isclose(ch.noise_var, 10 ** -0.5)
