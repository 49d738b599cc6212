"""Discrete-time nonlinear system abstraction with constant uncertain parameters.

A model bundles the transition and measurement maps with their noise
statistics and the reference statistics of a constant parameter vector.
Noise is always injected by the caller, so truth simulation and filtering
share one propagation code path and tests can pin noise to zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

Transition = Callable[[np.ndarray, np.ndarray, int], np.ndarray]
Measurement = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _validate_cov(M, dim: int, name: str, positive_definite: bool = False) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.shape != (dim, dim):
        raise ValueError(f"{name} has shape {M.shape}, expected ({dim}, {dim})")
    if M.size == 0:
        return M
    scale = max(1.0, float(np.max(np.abs(M))))
    if float(np.max(np.abs(M - M.T))) > 1e-12 * scale:
        raise ValueError(f"{name} is not symmetric")
    w = np.linalg.eigvalsh(0.5 * (M + M.T))
    if positive_definite:
        if w[0] <= 0.0:
            raise ValueError(f"{name} must be positive definite (min eigenvalue {w[0]:.3e})")
    elif w[0] < -1e-10 * max(float(np.trace(M)), 1.0):
        raise ValueError(f"{name} is not positive semidefinite (min eigenvalue {w[0]:.3e})")
    return M


@dataclass(frozen=True, eq=False)
class SystemModel:
    """Nonlinear discrete-time model with additive noise and a constant parameter.

    The transition map takes (state, params, step_index) and the measurement
    map takes (state, params); both must be pure and must broadcast over a
    trailing member axis, i.e. accept states of shape (n,) or (n, m) and
    params of shape (l,) or (l, m). Models that ignore the step index or the
    parameter simply discard them. Parameters are constant over a run; the
    model carries no parameter dynamics. Instances are immutable and safe to
    share across concurrent workers.

    Attributes:
        state_dim: state dimension n.
        meas_dim: measurement dimension p.
        param_dim: parameter dimension l (may be zero).
        transition: state map, (n,) x (l,) x int -> (n,).
        measurement: measurement map, (n,) x (l,) -> (p,).
        process_noise_cov: (n, n) symmetric PSD process noise covariance.
        meas_noise_cov: (p, p) symmetric positive definite noise covariance.
        param_reference: (l,) reference value of the uncertain parameter.
        param_cov: (l, l) symmetric PSD parameter covariance.
    """

    state_dim: int
    meas_dim: int
    param_dim: int
    transition: Transition
    measurement: Measurement
    process_noise_cov: np.ndarray
    meas_noise_cov: np.ndarray
    param_reference: np.ndarray
    param_cov: np.ndarray

    def __post_init__(self):
        if self.state_dim < 1:
            raise ValueError("state_dim must be positive")
        if self.meas_dim < 1:
            raise ValueError("meas_dim must be positive")
        if self.param_dim < 0:
            raise ValueError("param_dim must be non-negative")
        set_ = object.__setattr__
        set_(self, "process_noise_cov",
             _validate_cov(self.process_noise_cov, self.state_dim, "process_noise_cov"))
        set_(self, "meas_noise_cov",
             _validate_cov(self.meas_noise_cov, self.meas_dim, "meas_noise_cov",
                           positive_definite=True))
        set_(self, "param_cov",
             _validate_cov(self.param_cov, self.param_dim, "param_cov"))
        b = np.asarray(self.param_reference, dtype=float).reshape(-1)
        if b.shape != (self.param_dim,):
            raise ValueError(
                f"param_reference has shape {b.shape}, expected ({self.param_dim},)"
            )
        set_(self, "param_reference", b)


@dataclass(frozen=True, eq=False)
class TruthTrajectory:
    """Simulated ground truth: states at epochs 0..K, measurements at 1..K."""

    states: np.ndarray        # (K+1, n)
    measurements: np.ndarray  # (K, p)
    true_param: np.ndarray    # (l,)

    def __post_init__(self):
        if len(self.measurements) != len(self.states) - 1:
            raise ValueError(
                f"{len(self.measurements)} measurements inconsistent with "
                f"{len(self.states)} states (expected one fewer)"
            )


def _check_vector(v, dim: int, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape != (dim,):
        raise ValueError(f"{name} has shape {v.shape}, expected ({dim},)")
    return v


def propagate_truth(model: SystemModel, x_prev, b, k: int, w) -> np.ndarray:
    """One truth propagation step: transition(x_prev, b, k) + w."""
    x_prev = _check_vector(x_prev, model.state_dim, "x_prev")
    b = _check_vector(b, model.param_dim, "b")
    w = _check_vector(w, model.state_dim, "w")
    x = np.asarray(model.transition(x_prev, b, k), dtype=float).reshape(-1)
    if x.shape != (model.state_dim,):
        raise ValueError(
            f"transition returned shape {x.shape}, expected ({model.state_dim},)"
        )
    return x + w


def measure_truth(model: SystemModel, x, b, v) -> np.ndarray:
    """One truth measurement: measurement(x, b) + v."""
    x = _check_vector(x, model.state_dim, "x")
    b = _check_vector(b, model.param_dim, "b")
    v = _check_vector(v, model.meas_dim, "v")
    z = np.asarray(model.measurement(x, b), dtype=float).reshape(-1)
    if z.shape != (model.meas_dim,):
        raise ValueError(
            f"measurement returned shape {z.shape}, expected ({model.meas_dim},)"
        )
    return z + v
