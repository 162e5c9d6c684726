"""YAML experiment configuration, validated with pydantic (unknown keys rejected)."""
from __future__ import annotations

import math
from pathlib import Path
from typing import Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..errors import ConfigurationError


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SpreadingSpec(_Strict):
    length: int = Field(4, ge=1)
    index: int = Field(0, ge=0)
    alphabet: Literal["quaternary_unit", "gold_derived"] = "quaternary_unit"


class PatternSpec(_Strict):
    n_re: int = Field(4, ge=1)
    weight: int = Field(2, ge=1)
    index: int = Field(0, ge=0)
    unequal: bool = False


class CodebookSpec(_Strict):
    design: Literal["builtin_4x4x2", "rotated_qpsk"] = "builtin_4x4x2"
    layer: int = Field(0, ge=0)
    rotation: Optional[float] = None


class UserSpec(_Strict):
    mode: Literal["seq_dense", "rep_sparse", "indep_sparse", "joint_codebook"]
    modulation: Literal["qpsk", "qam16"] = "qpsk"
    scrambler_seed: int = Field(0, ge=0)
    power_offset_db: float = Field(0.0, ge=-20.0, le=20.0)
    spreading: Optional[SpreadingSpec] = None
    pattern: Optional[PatternSpec] = None
    codebook: Optional[CodebookSpec] = None
    symbol_interleaver: Optional[int] = Field(None, ge=0)
    bit_interleaver: Optional[int] = Field(None, ge=0)

    @model_validator(mode="after")
    def _mode_fields(self):
        need = {"seq_dense": "spreading", "rep_sparse": "pattern",
                "indep_sparse": "pattern", "joint_codebook": "codebook"}[self.mode]
        if getattr(self, need) is None:
            raise ValueError(f"mode {self.mode} requires '{need}'")
        for other in ("spreading", "pattern", "codebook"):
            if other != need and getattr(self, other) is not None:
                raise ValueError(f"mode {self.mode} does not use '{other}'")
        if self.mode == "indep_sparse" and self.symbol_interleaver is None:
            raise ValueError("indep_sparse requires 'symbol_interleaver' (pool index)")
        if self.mode != "indep_sparse" and self.symbol_interleaver is not None:
            raise ValueError("'symbol_interleaver' only applies to indep_sparse")
        return self


class FecSpec(_Strict):
    constraint_length: int = Field(7, ge=2)
    generators_octal: list[int] = Field(default_factory=lambda: [133, 171])


class CrcSpec(_Strict):
    width: Literal[8, 16, 24] = 16
    polynomial: int = 0x1021
    init: int = 0xFFFF
    final_xor: int = 0


class FadingSpec(_Strict):
    model: Literal["awgn_unit", "block_rayleigh"] = "awgn_unit"
    block_len_res: int = Field(1, ge=1)


class DetectorSpec(_Strict):
    kind: Literal["mf", "mmse_su", "mmse_mu", "map_exhaustive", "mpa", "epa", "ese"] = "mpa"
    inner_iters: Optional[int] = Field(None, ge=1)
    damping: Optional[float] = Field(None, ge=0.0, lt=1.0)
    variance_floor: float = Field(1e-8, gt=0.0)
    llr_clamp: float = Field(30.0, gt=0.0)


class OuterSpec(_Strict):
    mode: Literal["hard_sic", "soft_sic", "hybrid_pic"] = "hybrid_pic"
    max_outer_iters: int = Field(5, ge=1)
    sic_order: Literal["by_postdecode_metric", "by_power"] = "by_postdecode_metric"


class LinkScheme(_Strict):
    name: str
    payload_bits: int = Field(32, ge=1)
    fec: Optional[FecSpec] = Field(default_factory=FecSpec)
    crc: Optional[CrcSpec] = Field(default_factory=CrcSpec)
    fading: FadingSpec = Field(default_factory=FadingSpec)
    users: list[UserSpec] = Field(min_length=1)
    detector: DetectorSpec = Field(default_factory=DetectorSpec)
    outer: OuterSpec = Field(default_factory=OuterSpec)

    @field_validator("name")
    @classmethod
    def _name(cls, v):
        if not v or "," in v or "\n" in v:
            raise ValueError("scheme name must be non-empty without commas or newlines")
        return v


def _check_sweep(v: list[float]) -> list[float]:
    if not v:
        raise ValueError("sweep must be non-empty")
    if any(not math.isfinite(x) for x in v):
        raise ValueError("sweep values must be finite")
    if any(b <= a for a, b in zip(v, v[1:])):
        raise ValueError("sweep must be strictly increasing")
    return v


class LinkConfig(_Strict):
    experiment: Literal["link"]
    master_seed: int = Field(0, ge=0)
    n_trials: int = Field(ge=1)                       # frames per sweep point and scheme
    chunk_size: int = Field(50, ge=1)                 # frames per work item
    sweep: list[float]                                # SNR in dB
    snr_definition: Literal["per_block", "ebn0"] = "per_block"
    schemes: list[LinkScheme] = Field(min_length=1)
    plot: Optional[str] = None

    @field_validator("sweep")
    @classmethod
    def _sweep(cls, v):
        return _check_sweep(v)

    @model_validator(mode="after")
    def _unique_names(self):
        names = [s.name for s in self.schemes]
        if len(set(names)) != len(names):
            raise ValueError("scheme names must be unique")
        return self


class TrafficSpec(_Strict):
    n_users: int = Field(24, ge=1)
    packet_bits: int = Field(32, ge=1)
    max_attempts: int = Field(4, ge=1)
    latency_budget_slots: int = Field(4, ge=1)


class PhySpec(_Strict):
    snr_db: float = 10.0
    snr_spread_db: float = Field(3.0, ge=0.0)
    block_len_res: int = Field(4, ge=1)
    policy: Literal["random", "preconfigured"] = "random"
    noma_pool_size: Optional[int] = Field(None, ge=1)
    ofdma_pool_size: Optional[int] = Field(None, ge=1, le=4)
    detector: DetectorSpec = Field(default_factory=DetectorSpec)
    outer: OuterSpec = Field(default_factory=OuterSpec)


class SupportedParSpec(_Strict):
    target_pdr: float = Field(0.01, gt=0.0, lt=1.0)
    tol: float = Field(0.002, gt=0.0)
    bracket: tuple[float, float] = (0.0, 0.2)
    grid_points: int = Field(5, ge=2)

    @model_validator(mode="after")
    def _bracket(self):
        if not 0 <= self.bracket[0] < self.bracket[1]:
            raise ValueError("bracket must satisfy 0 <= low < high")
        return self


class GrantFreeConfig(_Strict):
    experiment: Literal["grantfree"]
    master_seed: int = Field(0, ge=0)
    n_trials: int = Field(ge=1)                       # independent replicas per sweep point
    n_slots: int = Field(200, ge=1)
    sweep: list[float]                                # packet arrival rate per user per slot
    schemes: list[Literal["noma", "ofdma_baseline"]] = Field(
        default_factory=lambda: ["noma", "ofdma_baseline"], min_length=1)
    traffic: TrafficSpec = Field(default_factory=TrafficSpec)
    phy: PhySpec = Field(default_factory=PhySpec)
    supported_par: Optional[SupportedParSpec] = None
    plot: Optional[str] = None

    @field_validator("sweep")
    @classmethod
    def _sweep(cls, v):
        if any(x < 0 for x in v):
            raise ValueError("arrival rates must be >= 0")
        return _check_sweep(v)


class CalibrateConfig(_Strict):
    experiment: Literal["calibrate"]
    master_seed: int = Field(0, ge=0)
    n_trials: int = Field(20, ge=1)                   # random instances per check


ExperimentConfig = Union[LinkConfig, GrantFreeConfig, CalibrateConfig]
_MODELS = {"link": LinkConfig, "grantfree": GrantFreeConfig, "calibrate": CalibrateConfig}


def _format_errors(err: ValidationError) -> str:
    parts = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        parts.append(f"{loc}: {e['msg']}")
    return "; ".join(parts)


def parse_config(data, expected: str | None = None) -> ExperimentConfig:
    """Validate a mapping; raises :class:`ConfigurationError` naming the field path."""
    if not isinstance(data, dict):
        raise ConfigurationError("<root>: configuration must be a mapping")
    kind = data.get("experiment")
    if kind not in _MODELS:
        raise ConfigurationError(f"experiment: must be one of {sorted(_MODELS)}, got {kind!r}")
    if expected is not None and kind != expected:
        raise ConfigurationError(f"experiment: config is for '{kind}', command is '{expected}'")
    try:
        return _MODELS[kind].model_validate(data)
    except ValidationError as err:
        raise ConfigurationError(_format_errors(err)) from None


def load_config(path, expected: str | None = None,
                master_seed: int | None = None) -> ExperimentConfig:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ConfigurationError(f"<root>: invalid YAML ({err})") from None
    if master_seed is not None and isinstance(data, dict):
        data = {**data, "master_seed": master_seed}
    return parse_config(data, expected)
