"""Multi-user receivers: detectors, demapping and outer-loop cancellation."""
from .demap import demap_to_llrs, layer_bit_llrs
from .detectors import (DETECTOR_KINDS, MAP_COMBINATION_LIMIT, MPA_RE_COMBINATION_LIMIT,
                        DetectorConfig, OpCounter, SymbolPosterior, detect,
                        epa_detect, epa_gaussian_estimate, ese_detect, map_exhaustive_detect,
                        mf_detect, mmse_detect, mmse_estimate, mpa_detect)
from .outer import (STRATEGIES, OuterLoopConfig, ReceiverResult, decode_user, receive,
                    run_receiver)
from .problem import RxProblem, build_problem, layer_log_priors

__all__ = [
    "DETECTOR_KINDS", "MAP_COMBINATION_LIMIT", "MPA_RE_COMBINATION_LIMIT", "STRATEGIES",
    "DetectorConfig", "OpCounter", "OuterLoopConfig", "ReceiverResult", "RxProblem",
    "SymbolPosterior", "build_problem", "decode_user", "demap_to_llrs", "detect",
    "epa_detect", "epa_gaussian_estimate", "ese_detect", "layer_bit_llrs",
    "layer_log_priors", "map_exhaustive_detect", "mf_detect", "mmse_detect",
    "mmse_estimate", "mpa_detect", "receive", "run_receiver",
]
