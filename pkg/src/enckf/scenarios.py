"""The two benchmark experiments as reproducible scenario generators.

`spacecraft` is a linear two-state attitude-drift tracker with an uncertain
constant input bias; `ungm` is the univariate non-stationary growth model, a
strongly nonlinear scalar benchmark with an unknown constant measurement
bias. Constants live in one table per scenario so the CLI `describe` output,
the model builders, and the unit tests cannot drift apart.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, replace
from typing import Any, Mapping

import numpy as np

from .numkit import (
    STREAM_TRUTH_MEAS,
    STREAM_TRUTH_PARAM,
    STREAM_TRUTH_PROCESS,
    STREAMS_PER_RUN,
    SeededRng,
    cholesky_lower,
)
from .sysmodel import SystemModel, TruthTrajectory, measure_truth, propagate_truth

SCENARIO_NAMES = ("spacecraft", "ungm")

SPACECRAFT_CONSTANTS: dict[str, Any] = {
    "name": "spacecraft",
    "state_dim": 2,
    "meas_dim": 1,
    "param_dim": 1,
    "A": [[0.0, 1.0], [-0.85, 1.70]],
    "B": [0.0129, -1.2504],
    "G": [0.0, 1.0],
    "H": [0.0, 1.0],
    "Q": 0.0025,   # 0.05^2, scalar driving-noise variance through G
    "R": 0.25,     # 0.5^2
    "b0": 0.0,
    "Qb": 0.25,    # 0.5^2
    "x0": [2.0, 1.0],
    "P0": 0.025,   # isotropic: 0.025 * I2
    "default_steps": 40,
    "default_runs": 100,
    "default_ensemble_sizes": [13, 21],
}

UNGM_CONSTANTS: dict[str, Any] = {
    "name": "ungm",
    "state_dim": 1,
    "meas_dim": 1,
    "param_dim": 1,
    "Q": 1.0,
    "R": 1.0,
    "b0": 5.0,
    "Qb": 100.0,   # 10^2
    "x0": 0.0,
    "P0": 10.0,
    "default_steps": 200,
    "default_runs": 50,
    "default_ensemble_sizes": [13, 51],
}

_CONSTANTS = {"spacecraft": SPACECRAFT_CONSTANTS, "ungm": UNGM_CONSTANTS}

_OVERRIDE_KEYS = frozenset(
    {
        "process_noise_cov",
        "meas_noise_cov",
        "param_cov",
        "param_reference",
        "x0_mean",
        "P0",
        "truth_x0",
        "truth_param_mean",
        "truth_param_cov",
        "enkf_param_reference",
    }
)


@dataclass(frozen=True)
class ScenarioSpec:
    """Shape of one Monte Carlo campaign."""

    name: str
    steps: int
    mc_runs: int
    ensemble_sizes: tuple[int, ...]
    seed: int = 0
    overrides: Mapping[str, Any] | None = None

    def __post_init__(self):
        if self.name not in SCENARIO_NAMES:
            raise ValueError(
                f"unknown scenario {self.name!r}; choose from {SCENARIO_NAMES}"
            )
        if self.steps < 1:
            raise ValueError("steps must be at least 1")
        if self.mc_runs < 1:
            raise ValueError("mc_runs must be at least 1")
        object.__setattr__(self, "ensemble_sizes", tuple(int(m) for m in self.ensemble_sizes))
        if not self.ensemble_sizes or any(m < 2 for m in self.ensemble_sizes):
            raise ValueError("every ensemble size must be at least 2")
        if self.overrides:
            unknown = set(self.overrides) - _OVERRIDE_KEYS
            if unknown:
                raise ValueError(f"unknown override keys: {sorted(unknown)}")


@dataclass(frozen=True, eq=False)
class Scenario:
    """A built experiment: filter-side model plus truth-side statistics.

    `model` carries the consider statistics (parameter reference and
    covariance) used by the consider filter; the plain-filter baseline gets
    `enkf_param_reference` with zero parameter covariance. Truth draws its
    parameter from (truth_param_mean, truth_param_cov) each run.
    """

    name: str
    model: SystemModel
    x0_mean: np.ndarray
    P0: np.ndarray
    truth_x0: np.ndarray
    truth_param_mean: np.ndarray
    truth_param_cov: np.ndarray
    enkf_param_reference: np.ndarray

    def enkf_model(self) -> SystemModel:
        """Baseline variant: parameter fixed at the baseline reference, no spread."""
        return replace(
            self.model,
            param_reference=self.enkf_param_reference,
            param_cov=np.zeros_like(self.model.param_cov),
        )


def scenario_constants(name: str) -> dict[str, Any]:
    """JSON-safe copy of the scenario's constants table."""
    if name not in _CONSTANTS:
        raise KeyError(f"unknown scenario {name!r}; choose from {SCENARIO_NAMES}")
    return copy.deepcopy(_CONSTANTS[name])


def build_spacecraft() -> Scenario:
    """Linear attitude tracker: x' = A x + B b + G w, z = x2 + v."""
    c = SPACECRAFT_CONSTANTS
    A = np.array(c["A"], dtype=float)
    B = np.array(c["B"], dtype=float).reshape(2, 1)
    G = np.array(c["G"], dtype=float).reshape(2, 1)
    H = np.array(c["H"], dtype=float).reshape(1, 2)

    def transition(x, b, k):
        return A @ x + B @ b

    def measurement(x, b):
        return H @ x

    model = SystemModel(
        state_dim=2,
        meas_dim=1,
        param_dim=1,
        transition=transition,
        measurement=measurement,
        process_noise_cov=c["Q"] * (G @ G.T),
        meas_noise_cov=np.array([[c["R"]]]),
        param_reference=np.array([c["b0"]]),
        param_cov=np.array([[c["Qb"]]]),
    )
    x0 = np.array(c["x0"], dtype=float)
    return Scenario(
        name="spacecraft",
        model=model,
        x0_mean=x0,
        P0=c["P0"] * np.eye(2),
        truth_x0=x0.copy(),
        truth_param_mean=np.array([c["b0"]]),
        truth_param_cov=np.array([[c["Qb"]]]),
        enkf_param_reference=np.array([c["b0"]]),
    )


def build_ungm() -> Scenario:
    """Univariate non-stationary growth model with a constant measurement bias."""
    c = UNGM_CONSTANTS

    def transition(x, b, k):
        return 0.5 * x + 2.5 * x / (1.0 + x * x) + 8.0 * math.cos(1.2 * (k - 1))

    def measurement(x, b):
        return x * x / 20.0 + b

    model = SystemModel(
        state_dim=1,
        meas_dim=1,
        param_dim=1,
        transition=transition,
        measurement=measurement,
        process_noise_cov=np.array([[c["Q"]]]),
        meas_noise_cov=np.array([[c["R"]]]),
        param_reference=np.array([c["b0"]]),
        param_cov=np.array([[c["Qb"]]]),
    )
    return Scenario(
        name="ungm",
        model=model,
        x0_mean=np.array([c["x0"]]),
        P0=np.array([[c["P0"]]]),
        truth_x0=np.array([c["x0"]]),
        truth_param_mean=np.array([c["b0"]]),
        truth_param_cov=np.array([[c["Qb"]]]),
        enkf_param_reference=np.array([c["b0"]]),
    )


_BUILDERS = {"spacecraft": build_spacecraft, "ungm": build_ungm}


def _as_cov(value, dim: int) -> np.ndarray:
    M = np.asarray(value, dtype=float)
    if M.ndim == 0:
        M = M * np.eye(dim)
    return M.reshape(dim, dim)


def build_scenario(name: str, overrides: Mapping[str, Any] | None = None) -> Scenario:
    """Build a scenario, optionally replacing noise levels or initial conditions.

    Override keys: process_noise_cov, meas_noise_cov, param_cov,
    param_reference (model side); x0_mean, P0, truth_x0, truth_param_mean,
    truth_param_cov, enkf_param_reference (scenario side). Scalar covariance
    values are promoted to scaled identity.
    """
    if name not in _BUILDERS:
        raise KeyError(f"unknown scenario {name!r}; choose from {SCENARIO_NAMES}")
    scenario = _BUILDERS[name]()
    if not overrides:
        return scenario
    unknown = set(overrides) - _OVERRIDE_KEYS
    if unknown:
        raise ValueError(f"unknown override keys: {sorted(unknown)}")
    model = scenario.model
    n, p, l = model.state_dim, model.meas_dim, model.param_dim
    model_updates = {}
    if "process_noise_cov" in overrides:
        model_updates["process_noise_cov"] = _as_cov(overrides["process_noise_cov"], n)
    if "meas_noise_cov" in overrides:
        model_updates["meas_noise_cov"] = _as_cov(overrides["meas_noise_cov"], p)
    if "param_cov" in overrides:
        model_updates["param_cov"] = _as_cov(overrides["param_cov"], l)
    if "param_reference" in overrides:
        model_updates["param_reference"] = np.asarray(
            overrides["param_reference"], dtype=float
        ).reshape(l)
    if model_updates:
        model = replace(model, **model_updates)
    scen_updates: dict[str, Any] = {"model": model}
    if "x0_mean" in overrides:
        scen_updates["x0_mean"] = np.asarray(overrides["x0_mean"], dtype=float).reshape(n)
    if "P0" in overrides:
        scen_updates["P0"] = _as_cov(overrides["P0"], n)
    if "truth_x0" in overrides:
        scen_updates["truth_x0"] = np.asarray(overrides["truth_x0"], dtype=float).reshape(n)
    if "truth_param_mean" in overrides:
        scen_updates["truth_param_mean"] = np.asarray(
            overrides["truth_param_mean"], dtype=float
        ).reshape(l)
    if "truth_param_cov" in overrides:
        scen_updates["truth_param_cov"] = _as_cov(overrides["truth_param_cov"], l)
    if "enkf_param_reference" in overrides:
        scen_updates["enkf_param_reference"] = np.asarray(
            overrides["enkf_param_reference"], dtype=float
        ).reshape(l)
    return replace(scenario, **scen_updates)


def make_spec(
    name: str,
    steps: int | None = None,
    mc_runs: int | None = None,
    ensemble_sizes=None,
    seed: int = 0,
    overrides: Mapping[str, Any] | None = None,
) -> ScenarioSpec:
    """Campaign spec with per-scenario defaults filled in."""
    c = scenario_constants(name)
    return ScenarioSpec(
        name=name,
        steps=steps if steps is not None else c["default_steps"],
        mc_runs=mc_runs if mc_runs is not None else c["default_runs"],
        ensemble_sizes=tuple(
            ensemble_sizes if ensemble_sizes is not None else c["default_ensemble_sizes"]
        ),
        seed=seed,
        overrides=dict(overrides) if overrides else None,
    )


def _sqrt_or_zero(cov: np.ndarray) -> np.ndarray:
    if not np.any(cov):
        return np.zeros_like(cov)
    return cholesky_lower(cov)


def generate_truth(
    scenario: Scenario, spec: ScenarioSpec, run_index: int
) -> TruthTrajectory:
    """Simulate one ground-truth trajectory, fully determined by (seed, run).

    Draws the run's constant parameter, then iterates the model with fresh
    process and measurement noise on run-scoped streams, so runs can be
    generated in any order or in parallel without changing results.
    """
    model = scenario.model
    base = run_index * STREAMS_PER_RUN
    rng_b = SeededRng(spec.seed, base + STREAM_TRUTH_PARAM)
    rng_w = SeededRng(spec.seed, base + STREAM_TRUTH_PROCESS)
    rng_v = SeededRng(spec.seed, base + STREAM_TRUTH_MEAS)

    L_b = _sqrt_or_zero(scenario.truth_param_cov)
    b = scenario.truth_param_mean + L_b @ rng_b.standard_normal(model.param_dim)
    L_q = _sqrt_or_zero(model.process_noise_cov)
    L_r = _sqrt_or_zero(model.meas_noise_cov)

    states = np.empty((spec.steps + 1, model.state_dim))
    measurements = np.empty((spec.steps, model.meas_dim))
    states[0] = scenario.truth_x0
    for k in range(1, spec.steps + 1):
        w = L_q @ rng_w.standard_normal(model.state_dim)
        states[k] = propagate_truth(model, states[k - 1], b, k, w)
        v = L_r @ rng_v.standard_normal(model.meas_dim)
        measurements[k - 1] = measure_truth(model, states[k], b, v)
    if not (np.all(np.isfinite(states)) and np.all(np.isfinite(measurements))):
        raise RuntimeError(f"non-finite truth trajectory in run {run_index}")
    return TruthTrajectory(states=states, measurements=measurements, true_param=b)
