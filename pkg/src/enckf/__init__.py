"""Ensemble consider Kalman filtering for systems with uncertain parameters.

The package pairs a perturbed-observation ensemble Kalman filter with a
consider variant that propagates the statistics of constant-but-uncertain
model parameters into the state estimate without ever estimating them, plus
two reproducible Monte Carlo benchmarks and a CLI harness around them.
"""

__version__ = "0.1.0"

from .filters import (
    AugmentedEnsemble,
    CovarianceBlocks,
    FilterConfig,
    FilterEstimate,
    FilterRngs,
    FilterState,
    init_filter,
    run_filter,
    step,
)
from .harness import RmseReport, compare_report, run_campaign, write_report
from .numkit import SeededRng, augmented_sqrt, cholesky_lower, psd_repair, sample_mvn
from .scenarios import (
    Scenario,
    ScenarioSpec,
    build_scenario,
    generate_truth,
    make_spec,
    scenario_constants,
)
from .sysmodel import SystemModel, TruthTrajectory, measure_truth, propagate_truth

__all__ = [
    "AugmentedEnsemble",
    "CovarianceBlocks",
    "FilterConfig",
    "FilterEstimate",
    "FilterRngs",
    "FilterState",
    "RmseReport",
    "Scenario",
    "ScenarioSpec",
    "SeededRng",
    "SystemModel",
    "TruthTrajectory",
    "augmented_sqrt",
    "build_scenario",
    "cholesky_lower",
    "compare_report",
    "generate_truth",
    "init_filter",
    "make_spec",
    "measure_truth",
    "propagate_truth",
    "psd_repair",
    "run_campaign",
    "run_filter",
    "sample_mvn",
    "scenario_constants",
    "step",
    "write_report",
]
