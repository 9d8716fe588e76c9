"""Dreammap base/root module."""


from . import store
from .dreamer import AcquisitionConfig, AcquisitionTrace, OccupiedEnvironment, SelectionRule, run_acquisition
from .errors import ConfigError, DataError, DreammapError, NumericalError, UsageError
from .gp import GpPosterior, KernelParams, empty_copy, fit_kernel, gp_reconstruct
from .grid import EnvironmentPair, GridMap, MeasurementState, Observation, Unit, apply_measurement, mae, rmse
from .harness import ExperimentSpec, run_sweep
from .heatmap import export_heatmap
from .mapio import load_map, load_pair, save_map, save_pair
from .repo import ResultsRepo
from .resample import bilinear_upscale
from .result import ResultRecord
from .synth import SynthConfig, make_dataset, normalize_pair, synth_pair
