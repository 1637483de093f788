"""First-path-power NLOS mitigation for UWB TDOA positioning."""

from .channel import NlosStats, PowerModel, ToaMeasurement, simulate_epoch
from .classification import Thresholds, calibrate_thresholds, classify_power, estimate_bias_stats
from .ekf import EkfModel, EkfState, init_state, predict, update
from .geometry import Anchor, Floorplan, Point2, PropagationClass, Site, load_site
from .harness import ScenarioConfig, default_config, load_config, run_scenario, summarize
from .mitigation import CorrectedToa, TdoaVector, build_tdoa_vector, correct_toa, mitigate_epoch

__version__ = "0.1.0"

__all__ = [
    "Anchor", "CorrectedToa", "EkfModel", "EkfState", "Floorplan", "NlosStats",
    "Point2", "PowerModel", "PropagationClass", "ScenarioConfig", "Site",
    "TdoaVector", "Thresholds", "ToaMeasurement", "build_tdoa_vector",
    "calibrate_thresholds", "classify_power", "correct_toa", "default_config",
    "estimate_bias_stats", "init_state", "load_config", "load_site",
    "mitigate_epoch", "predict", "run_scenario", "simulate_epoch", "summarize",
    "update",
]
