"""Pan-private streaming estimators with an attack and experiment harness."""

from .cropped_sum import CroppedSumState
from .distinct import DistinctConfig, NoisySketch, theoretical_additive_error
from .dot_product import DotPairState
from .errors import (ConfigError, InputError, ModeViolation, NumericError, PanSketchError,
                     SnapshotError, UndefinedStatistic)
from .heavy_hitters import HHConfig, HHEstimator, choose_h
from .snapshot import IntrusionSnapshot
from .stable import Calibration, StableParams, calibrate
from .stream import StateVector, StreamSpec, Update, generate, oracle_stats

__version__ = "0.1.0"

__all__ = [
    "Calibration", "ConfigError", "CroppedSumState", "DistinctConfig", "DotPairState",
    "HHConfig", "HHEstimator", "InputError", "IntrusionSnapshot", "ModeViolation",
    "NoisySketch", "NumericError", "PanSketchError", "SnapshotError", "StableParams",
    "StateVector", "StreamSpec", "UndefinedStatistic", "Update", "calibrate", "choose_h",
    "generate", "oracle_stats", "theoretical_additive_error",
]
