"""RE-level multi-user channel: ``y_k = sum_u h[u, k] x[u, k] + n_k``.

SNR convention: ``snr_db`` is the per-user, per-block SNR for unit nominal
block energy, so the complex noise variance per RE is ``10**(-snr_db/10)``.
Per-user entries of ``snr_db_profile`` shift individual users by scaling
their gains (near-far modelling).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ContractError

FADING_MODELS = ("awgn_unit", "block_rayleigh")


@dataclass
class FadingConfig:
    model: str = "awgn_unit"
    block_len_res: int = 1
    snr_db_profile: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.model not in FADING_MODELS:
            raise ConfigurationError(f"unknown fading model {self.model!r}")
        if self.block_len_res < 1:
            raise ConfigurationError("block_len_res must be >= 1")


@dataclass
class ChannelRealization:
    """``gains`` has shape (n_users, n_res) or (n_frames, n_users, n_res)."""

    gains: np.ndarray
    noise_var: float

    def __post_init__(self):
        if not self.noise_var > 0:
            raise ConfigurationError("noise_var must be positive")
        if not np.isfinite(self.gains).all():
            raise ConfigurationError("channel gains must be finite")


def snr_to_noise_var(snr_db: float) -> float:
    return 10.0 ** (-snr_db / 10.0)


def draw_channel(config: FadingConfig, n_users: int, n_res_total: int, stream_seed: int,
                 snr_db: float = 0.0, n_frames: int | None = None) -> ChannelRealization:
    """Draw gains; with ``n_frames`` the result carries a leading frame axis."""
    L = config.block_len_res
    if n_res_total % L:
        raise ConfigurationError(f"block_len_res {L} does not divide {n_res_total} REs")
    lead = () if n_frames is None else (n_frames,)
    shape = lead + (n_users, n_res_total)
    if config.model == "awgn_unit":
        gains = np.ones(shape, complex)
    else:
        rng = np.random.default_rng(stream_seed)
        g = rng.standard_normal(lead + (n_users, n_res_total // L, 2)) / np.sqrt(2.0)
        gains = np.repeat(g[..., 0] + 1j * g[..., 1], L, axis=-1)
    profile = np.asarray(config.snr_db_profile, dtype=float)
    if profile.size:
        if profile.size != n_users:
            raise ConfigurationError("snr_db_profile needs one entry per user")
        gains = gains * (10.0 ** (profile / 20.0))[:, None]
    return ChannelRealization(gains, snr_to_noise_var(snr_db))


def draw_noise(shape, noise_var: float, stream_seed: int) -> np.ndarray:
    rng = np.random.default_rng(stream_seed)
    n = rng.standard_normal(tuple(shape) + (2,)) * np.sqrt(noise_var / 2.0)
    return n[..., 0] + 1j * n[..., 1]


def superimpose(tx_chips, channel: ChannelRealization, stream_seed: int,
                noiseless: bool = False) -> np.ndarray:
    """Sum of faded user signals plus circular Gaussian noise.

    ``tx_chips`` is a list of :class:`TxBlock` / chip vectors, or an array shaped
    like ``channel.gains`` (users on the second-to-last axis).
    """
    if isinstance(tx_chips, (list, tuple)):
        x = np.stack([getattr(t, "chips", t) for t in tx_chips], axis=-2)
    else:
        x = np.asarray(tx_chips)
    if x.shape != channel.gains.shape:
        raise ContractError(f"transmit span {x.shape} != channel span {channel.gains.shape}")
    y = np.sum(channel.gains * x, axis=-2)
    if not noiseless:
        y = y + draw_noise(y.shape, channel.noise_var, stream_seed)
    return y
