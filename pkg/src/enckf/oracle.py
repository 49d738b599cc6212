"""Closed-form linear-Gaussian filters used as convergence oracles in tests.

Implements the textbook Kalman filter (parameter treated as known) and the
Schmidt-Kalman consider filter (parameter covariance propagated, parameter
gain forced to zero) for linear models with a constant parameter input.
Neither is part of the runtime filtering API.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class LinearModel:
    """x' = A x + B b + G w,  z = H x + D b + v, with constant parameter b.

    Q is the covariance of w (driving-noise space, q-dimensional), R the
    measurement noise covariance, (b_ref, Q_b) the parameter statistics.
    """

    A: np.ndarray   # (n, n)
    B: np.ndarray   # (n, l)
    G: np.ndarray   # (n, q)
    H: np.ndarray   # (p, n)
    D: np.ndarray   # (p, l)
    Q: np.ndarray   # (q, q)
    R: np.ndarray   # (p, p)
    Q_b: np.ndarray  # (l, l)
    b_ref: np.ndarray  # (l,)

    def __post_init__(self):
        for name in ("A", "B", "G", "H", "D", "Q", "R", "Q_b"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        object.__setattr__(self, "b_ref", np.asarray(self.b_ref, dtype=float).reshape(-1))
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.B.shape[0] != n or self.H.shape[1] != n:
            raise ValueError("inconsistent linear model dimensions")


def _sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def kalman_step(
    model: LinearModel, mean: np.ndarray, cov: np.ndarray, z
) -> tuple[np.ndarray, np.ndarray]:
    """One predict/update cycle with the parameter clamped to its reference.

    Uses the Joseph-form covariance update so symmetry is preserved by
    construction.
    """
    mean = np.asarray(mean, dtype=float).reshape(-1)
    cov = np.asarray(cov, dtype=float)
    z = np.asarray(z, dtype=float).reshape(-1)
    A, B, G, H, D = model.A, model.B, model.G, model.H, model.D
    mean_prior = A @ mean + B @ model.b_ref
    cov_prior = _sym(A @ cov @ A.T + G @ model.Q @ G.T)
    z_pred = H @ mean_prior + D @ model.b_ref
    S = _sym(H @ cov_prior @ H.T + model.R)
    try:
        K = np.linalg.solve(S, H @ cov_prior).T
    except np.linalg.LinAlgError as exc:
        raise ValueError("innovation covariance singular") from exc
    mean_post = mean_prior + K @ (z - z_pred)
    I_KH = np.eye(mean.shape[0]) - K @ H
    cov_post = _sym(I_KH @ cov_prior @ I_KH.T + K @ model.R @ K.T)
    return mean_post, cov_post


def schmidt_kalman_step(
    model: LinearModel, mean: np.ndarray, P_xx: np.ndarray, P_xb: np.ndarray, z
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One consider predict/update cycle: the parameter is never estimated,
    but its covariance flows through the state covariance, the cross
    covariance, and the innovation covariance."""
    mean = np.asarray(mean, dtype=float).reshape(-1)
    P_xx = np.asarray(P_xx, dtype=float)
    P_xb = np.asarray(P_xb, dtype=float)
    z = np.asarray(z, dtype=float).reshape(-1)
    A, B, G, H, D = model.A, model.B, model.G, model.H, model.D
    Q_b = model.Q_b

    mean_prior = A @ mean + B @ model.b_ref
    P_xx_prior = _sym(
        A @ P_xx @ A.T
        + A @ P_xb @ B.T
        + B @ P_xb.T @ A.T
        + B @ Q_b @ B.T
        + G @ model.Q @ G.T
    )
    P_xb_prior = A @ P_xb + B @ Q_b

    z_pred = H @ mean_prior + D @ model.b_ref
    P_zz = _sym(
        H @ P_xx_prior @ H.T
        + H @ P_xb_prior @ D.T
        + D @ P_xb_prior.T @ H.T
        + D @ Q_b @ D.T
        + model.R
    )
    P_xz = P_xx_prior @ H.T + P_xb_prior @ D.T
    P_bz = P_xb_prior.T @ H.T + Q_b @ D.T
    try:
        K = np.linalg.solve(P_zz, P_xz.T).T
    except np.linalg.LinAlgError as exc:
        raise ValueError("innovation covariance singular") from exc
    mean_post = mean_prior + K @ (z - z_pred)
    P_xx_post = _sym(P_xx_prior - K @ P_zz @ K.T)
    P_xb_post = P_xb_prior - K @ P_bz.T
    return mean_post, P_xx_post, P_xb_post


def run_kalman(model: LinearModel, x0_mean, P0, measurements) -> list[np.ndarray]:
    """Posterior means for a measurement sequence under the plain filter."""
    mean = np.asarray(x0_mean, dtype=float).reshape(-1)
    cov = np.asarray(P0, dtype=float)
    means = []
    for z in measurements:
        mean, cov = kalman_step(model, mean, cov, z)
        means.append(mean)
    return means


def run_schmidt_kalman(
    model: LinearModel, x0_mean, P0, measurements
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Posterior means and state covariances under the consider filter.

    The initial cross covariance is zero: state and parameter knowledge
    start independent."""
    mean = np.asarray(x0_mean, dtype=float).reshape(-1)
    P_xx = np.asarray(P0, dtype=float)
    P_xb = np.zeros((mean.shape[0], model.b_ref.shape[0]))
    means, covs = [], []
    for z in measurements:
        mean, P_xx, P_xb = schmidt_kalman_step(model, mean, P_xx, P_xb, z)
        means.append(mean)
        covs.append(P_xx)
    return means, covs
