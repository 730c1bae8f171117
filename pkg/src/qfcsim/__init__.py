"""Simulation and analysis toolkit for single-photon frequency conversion with
cascaded spectral filtering, time-tagged detection and a chopped cavity lock."""

__version__ = "0.1.0"

from .filters import (FilterCascade, FilterElement, FilterKind, cascade_transmission, element_transmission,
                      noise_bandwidth, noise_suppression_ratio)
from .conversion import (ConversionParams, EfficiencyFit, FitError, G2Prediction, OpticalPath, device_efficiency,
                         fit_efficiency_curve, g2_after_conversion, internal_efficiency, mu1, predict_g2)
from .tagfile import TagStream, read_tagfile, write_tagfile
from .photon_sim import Scenario, apply_dead_time, simulate_timetags
from .analysis import (AnalysisError, Histogram, LineFit, Mu1Point, SnrResult, build_histogram, compute_snr,
                       estimate_fwhm, fit_mu1_slope)
from .lock_sim import CavityState, ChopperPhase, LockController, chopper_phase, lock_step, simulate_lock_session
from .config import ConfigError, RunConfig

__all__ = [n for n in dir() if not n.startswith("_")]
