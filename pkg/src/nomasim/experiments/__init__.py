"""Configuration, experiment runners and oracle calibration."""
from .config import (CalibrateConfig, GrantFreeConfig, LinkConfig, load_config, parse_config)
from .runners import parallel_map, run_calibrate, run_grantfree_curve, run_link_curve

__all__ = ["CalibrateConfig", "GrantFreeConfig", "LinkConfig", "load_config", "parse_config",
           "parallel_map", "run_calibrate", "run_grantfree_curve", "run_link_curve"]
