"""Monte-Carlo data generators and the experiment runner."""

from .sampling import (RoiGrid, build_roi, factor, replication_rng, sample_matrix_normal,
                       spatial_cov_from_grid, true_patterns_from_rdm)
from .timeseries import (RunAnalysis, SimulatedRuns, TimeseriesSimSpec, TimeseriesSimulator,
                         analyze_runs, simulate_timeseries)
from .experiments import EXPERIMENTS, ConfigError, DirectSimSpec, ExperimentResult, run_experiment

__all__ = [
    "RoiGrid", "build_roi", "factor", "replication_rng", "sample_matrix_normal",
    "spatial_cov_from_grid", "true_patterns_from_rdm",
    "RunAnalysis", "SimulatedRuns", "TimeseriesSimSpec", "TimeseriesSimulator",
    "analyze_runs", "simulate_timeseries",
    "EXPERIMENTS", "ConfigError", "DirectSimSpec", "ExperimentResult", "run_experiment",
]
