"""Ensemble filters over augmented [state; parameter] ensembles.

Two modes share one pipeline: a perturbed-observation ensemble Kalman filter
that updates states and parameters with the full augmented gain, and a
consider variant that forces the parameter gain to zero, pins the parameter
covariance to its reference value, and resamples the ensemble from the
augmented square-root covariance between steps so the state-parameter
cross-covariance is reinjected.

Members are stored column-wise: an ensemble of m members over an n-state,
l-parameter model holds an (n, m) state block and an (l, m) parameter block.
Parameter deviations are always taken about the fixed reference value, not
the ensemble mean; the consider update absorbs the difference by reporting
the reference parameter covariance unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .numkit import (
    STREAM_FILTER_INIT,
    STREAM_FILTER_PERTURB,
    STREAM_FILTER_PROCESS,
    STREAM_FILTER_RESAMPLE,
    STREAMS_PER_RUN,
    RepairStats,
    SeededRng,
    augmented_sqrt,
    cholesky_lower,
    psd_repair,
    sample_mvn,
)
from .sysmodel import SystemModel

MODES = ("enkf", "enckf")


class FilterDivergenceError(RuntimeError):
    """Raised when a propagated or measured ensemble turns non-finite."""


@dataclass(frozen=True)
class FilterConfig:
    """Run-time filter settings.

    recenter_resample shifts freshly resampled members so their sample mean
    hits the target exactly, which keeps the consider filter's parameter mean
    pinned to the reference value rather than just unbiased.
    """

    ensemble_size: int
    mode: str
    recenter_resample: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.ensemble_size < 2:
            raise ValueError("ensemble_size must be at least 2")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")


@dataclass(eq=False)
class AugmentedEnsemble:
    """m members of stacked [state; parameter] vectors, columns as members."""

    states: np.ndarray  # (n, m)
    params: np.ndarray  # (l, m)
    epoch: int

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        self.params = np.asarray(self.params, dtype=float).reshape(-1, self.states.shape[1])
        if self.states.shape[1] < 2:
            raise ValueError("ensemble needs at least 2 members")

    @property
    def size(self) -> int:
        return self.states.shape[1]

    def stacked(self) -> np.ndarray:
        """Members as (n+l, m) augmented columns."""
        return np.vstack([self.states, self.params])


@dataclass(eq=False)
class DeviationMatrices:
    """Member deviations: states and measurements about their ensemble means,
    parameters about the fixed reference value."""

    M_x: np.ndarray              # (n, m)
    M_b: np.ndarray              # (l, m)
    M_z: np.ndarray | None = None  # (p, m), filled at the measurement stage


@dataclass(eq=False)
class CovarianceBlocks:
    """Partitioned augmented covariance: state, cross, and parameter blocks."""

    P_xx: np.ndarray  # (n, n)
    P_xb: np.ndarray  # (n, l)
    P_bb: np.ndarray  # (l, l)


@dataclass(eq=False)
class FilterEstimate:
    """Posterior mean and covariance blocks at one epoch."""

    mean_state: np.ndarray
    mean_param: np.ndarray
    cov: CovarianceBlocks
    epoch: int


class Gains(NamedTuple):
    P_zz: np.ndarray  # (p, p) innovation covariance, measurement spread plus R
    P_xz: np.ndarray  # (n, p) state-measurement cross covariance
    P_bz: np.ndarray  # (l, p) parameter-measurement cross covariance
    K_x: np.ndarray   # (n, p) state gain
    K_b: np.ndarray   # (l, p) parameter gain (discarded by the consider path)


@dataclass(frozen=True)
class FilterRngs:
    """One independent stream per filter-internal consumer."""

    init: SeededRng
    process: SeededRng
    perturb: SeededRng
    resample: SeededRng

    @classmethod
    def from_seed(cls, seed: int, run_index: int = 0) -> "FilterRngs":
        base = run_index * STREAMS_PER_RUN
        return cls(
            init=SeededRng(seed, base + STREAM_FILTER_INIT),
            process=SeededRng(seed, base + STREAM_FILTER_PROCESS),
            perturb=SeededRng(seed, base + STREAM_FILTER_PERTURB),
            resample=SeededRng(seed, base + STREAM_FILTER_RESAMPLE),
        )


@dataclass(eq=False)
class FilterState:
    """Single-owner mutable state of one filter instance."""

    ensemble: AugmentedEnsemble
    rngs: FilterRngs
    last_estimate: FilterEstimate | None = None
    repair_stats: RepairStats = field(default_factory=RepairStats)


def _sqrt_or_zero(cov: np.ndarray) -> np.ndarray:
    # Exact zero covariances sample as exact copies instead of jitter noise.
    if not np.any(cov):
        return np.zeros_like(cov)
    return cholesky_lower(cov)


def init_ensemble(
    model: SystemModel,
    x0_mean,
    P0,
    cfg: FilterConfig,
    rng: SeededRng,
) -> AugmentedEnsemble:
    """Draw the initial ensemble: states from N(x0_mean, P0), parameters from
    the model's reference statistics, independently (zero initial cross
    covariance by construction)."""
    x0_mean = np.asarray(x0_mean, dtype=float).reshape(-1)
    P0 = np.asarray(P0, dtype=float)
    if x0_mean.shape != (model.state_dim,):
        raise ValueError(
            f"x0_mean has shape {x0_mean.shape}, expected ({model.state_dim},)"
        )
    states = sample_mvn(x0_mean, _sqrt_or_zero(P0), rng, cfg.ensemble_size)
    params = sample_mvn(
        model.param_reference, _sqrt_or_zero(model.param_cov), rng, cfg.ensemble_size
    )
    return AugmentedEnsemble(states=states, params=params, epoch=0)


def predict(
    model: SystemModel, ens: AugmentedEnsemble, rng: SeededRng
) -> tuple[AugmentedEnsemble, np.ndarray, DeviationMatrices, CovarianceBlocks]:
    """Propagate every member one step and form prior statistics.

    States move through the transition map plus fresh process noise;
    parameter members are carried unchanged. Returns the propagated
    ensemble, the stacked prior mean, the deviation matrices (parameters
    about the reference value), and the prior covariance blocks with the
    parameter block pinned to the model's parameter covariance.
    """
    epoch = ens.epoch + 1
    m = ens.size
    states = np.asarray(model.transition(ens.states, ens.params, epoch), dtype=float)
    if states.shape != ens.states.shape:
        raise ValueError(
            f"transition returned shape {states.shape}, expected {ens.states.shape}"
        )
    if np.any(model.process_noise_cov):
        L_q = cholesky_lower(model.process_noise_cov)
        states = states + L_q @ rng.standard_normal((model.state_dim, m))
    if not np.all(np.isfinite(states)):
        bad = int(np.where(~np.all(np.isfinite(states), axis=0))[0][0])
        raise FilterDivergenceError(
            f"non-finite propagated state at epoch {epoch}, member {bad}"
        )
    mean_x = states.mean(axis=1)
    mean_b = ens.params.mean(axis=1)
    M_x = states - mean_x[:, None]
    M_b = ens.params - model.param_reference[:, None]
    P_xx = (M_x @ M_x.T) / (m - 1)
    P_xb = (M_x @ M_b.T) / (m - 1)
    blocks = CovarianceBlocks(P_xx=P_xx, P_xb=P_xb, P_bb=model.param_cov)
    out = AugmentedEnsemble(states=states, params=ens.params, epoch=epoch)
    return out, np.concatenate([mean_x, mean_b]), DeviationMatrices(M_x, M_b), blocks


def measurement_ensemble(
    model: SystemModel, ens: AugmentedEnsemble
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Map members into measurement space; each member uses its own parameter.

    Returns (Z_members, z_mean, M_z) with members column-wise.
    """
    Z = np.asarray(model.measurement(ens.states, ens.params), dtype=float)
    Z = Z.reshape(model.meas_dim, ens.size)
    if not np.all(np.isfinite(Z)):
        bad = int(np.where(~np.all(np.isfinite(Z), axis=0))[0][0])
        raise FilterDivergenceError(
            f"non-finite measurement at epoch {ens.epoch}, member {bad}"
        )
    z_mean = Z.mean(axis=1)
    return Z, z_mean, Z - z_mean[:, None]


def gains_and_covariances(M_x, M_b, M_z, R) -> Gains:
    """Sample innovation/cross covariances and the augmented gain.

    The parameter gain is always computed; the consider update simply
    discards it, so both filter modes differ only by that constraint.
    """
    M_x = np.asarray(M_x, dtype=float)
    M_b = np.asarray(M_b, dtype=float)
    M_z = np.asarray(M_z, dtype=float)
    m = M_x.shape[1]
    if m < 2:
        raise ValueError("deviation matrices need at least 2 members")
    if M_b.shape[1] != m or M_z.shape[1] != m:
        raise ValueError(
            f"inconsistent member counts: {m}, {M_b.shape[1]}, {M_z.shape[1]}"
        )
    R = np.asarray(R, dtype=float)
    P_zz = (M_z @ M_z.T) / (m - 1) + R
    P_xz = (M_x @ M_z.T) / (m - 1)
    P_bz = (M_b @ M_z.T) / (m - 1)
    try:
        K_x = np.linalg.solve(P_zz, P_xz.T).T
        K_b = np.linalg.solve(P_zz, P_bz.T).T
    except np.linalg.LinAlgError as exc:
        raise ValueError(
            "innovation covariance singular; R too small or measurement spread collapsed"
        ) from exc
    return Gains(P_zz=P_zz, P_xz=P_xz, P_bz=P_bz, K_x=K_x, K_b=K_b)


def _perturbed_innovations(
    Z_members: np.ndarray, z_actual: np.ndarray, rng: SeededRng, R: np.ndarray
) -> np.ndarray:
    # Each member sees the received measurement plus an independent noise
    # draw; the truth-side measurement already carried its own noise.
    p, m = Z_members.shape
    v = cholesky_lower(R) @ rng.standard_normal((p, m))
    return z_actual[:, None] + v - Z_members


def update_enkf(
    ens: AugmentedEnsemble,
    Z_members,
    z_actual,
    gains: Gains,
    rng: SeededRng,
    R,
) -> tuple[AugmentedEnsemble, FilterEstimate]:
    """Perturbed-observation update with the full augmented gain.

    Both state and parameter members move; the reported covariance blocks
    are the posterior sample covariances about the posterior means.
    """
    z_actual = np.asarray(z_actual, dtype=float).reshape(-1)
    Z_members = np.asarray(Z_members, dtype=float)
    D = _perturbed_innovations(Z_members, z_actual, rng, np.asarray(R, dtype=float))
    states = ens.states + gains.K_x @ D
    params = ens.params + gains.K_b @ D
    m = ens.size
    mean_x = states.mean(axis=1)
    mean_b = params.mean(axis=1)
    M_x = states - mean_x[:, None]
    M_b = params - mean_b[:, None]
    cov = CovarianceBlocks(
        P_xx=(M_x @ M_x.T) / (m - 1),
        P_xb=(M_x @ M_b.T) / (m - 1),
        P_bb=(M_b @ M_b.T) / (m - 1),
    )
    out = AugmentedEnsemble(states=states, params=params, epoch=ens.epoch)
    return out, FilterEstimate(mean_x, mean_b, cov, epoch=ens.epoch)


def update_enckf(
    ens: AugmentedEnsemble,
    Z_members,
    z_actual,
    gains: Gains,
    rng: SeededRng,
    R,
    prior: CovarianceBlocks,
    b_ref,
    stats: RepairStats | None = None,
) -> tuple[AugmentedEnsemble, FilterEstimate]:
    """Consider update: state gain only, parameters untouched.

    Posterior covariance comes from the closed-form gain identities rather
    than posterior member spread; the parameter block stays pinned to the
    prior (reference) parameter covariance. Because parameter updates are
    discarded, the reported parameter estimate is the reference value
    itself, not the (resampling-noise-laden) member mean. A posterior state
    covariance that loses positive semidefiniteness at small ensemble sizes
    is floored and counted in `stats`.
    """
    z_actual = np.asarray(z_actual, dtype=float).reshape(-1)
    Z_members = np.asarray(Z_members, dtype=float)
    D = _perturbed_innovations(Z_members, z_actual, rng, np.asarray(R, dtype=float))
    states = ens.states + gains.K_x @ D
    P_xx = prior.P_xx - gains.K_x @ gains.P_zz @ gains.K_x.T
    P_xx = 0.5 * (P_xx + P_xx.T)
    if P_xx.size and np.linalg.eigvalsh(P_xx)[0] < 0.0:
        P_xx = psd_repair(P_xx, stats)
    P_xb = prior.P_xb - gains.K_x @ gains.P_bz.T
    cov = CovarianceBlocks(P_xx=P_xx, P_xb=P_xb, P_bb=prior.P_bb)
    mean_x = states.mean(axis=1)
    mean_b = np.asarray(b_ref, dtype=float).reshape(-1).copy()
    out = AugmentedEnsemble(states=states, params=ens.params, epoch=ens.epoch)
    return out, FilterEstimate(mean_x, mean_b, cov, epoch=ens.epoch)


def resample(
    estimate: FilterEstimate,
    Q_b,
    b_ref,
    cfg: FilterConfig,
    rng: SeededRng,
    stats: RepairStats | None = None,
) -> AugmentedEnsemble:
    """Regenerate the ensemble from the posterior mean and augmented square root.

    Members are drawn about [posterior state mean; parameter reference] with
    the block covariance [[P_xx, P_xb], [P_xb.T, Q_b]]. With recentering on,
    the sample mean is shifted onto the target exactly.
    """
    Q_b = np.asarray(Q_b, dtype=float)
    b_ref = np.asarray(b_ref, dtype=float).reshape(-1)
    n = estimate.mean_state.shape[0]
    target = np.concatenate([estimate.mean_state, b_ref])
    blocks = estimate.cov
    if np.any(blocks.P_xx) or np.any(blocks.P_xb) or np.any(Q_b):
        S = augmented_sqrt(blocks.P_xx, blocks.P_xb, Q_b, stats)
    else:
        S = np.zeros((target.shape[0], target.shape[0]))
    members = sample_mvn(target, S, rng, cfg.ensemble_size)
    if cfg.recenter_resample:
        members = members + (target - members.mean(axis=1))[:, None]
    return AugmentedEnsemble(
        states=members[:n], params=members[n:], epoch=estimate.epoch
    )


def init_filter(
    model: SystemModel, x0_mean, P0, cfg: FilterConfig, rngs: FilterRngs
) -> FilterState:
    """Build the initial filter state (epoch 0 ensemble, fresh diagnostics)."""
    ens = init_ensemble(model, x0_mean, P0, cfg, rngs.init)
    return FilterState(ensemble=ens, rngs=rngs)


def step(
    state: FilterState, model: SystemModel, z_actual, cfg: FilterConfig
) -> tuple[FilterState, FilterEstimate]:
    """Advance one epoch: (resample) -> predict -> measure -> gain -> update.

    The consider mode resamples from the previous posterior before
    predicting, except when the parameter covariance is exactly zero: with
    nothing to reinject, resampling would only add sampling noise, and
    skipping it keeps the zero-covariance consider filter identical to the
    plain filter on aligned streams.
    """
    ens = state.ensemble
    if (
        cfg.mode == "enckf"
        and state.last_estimate is not None
        and np.any(model.param_cov)
    ):
        ens = resample(
            state.last_estimate,
            model.param_cov,
            model.param_reference,
            cfg,
            state.rngs.resample,
            state.repair_stats,
        )
    ens, _, devs, prior = predict(model, ens, state.rngs.process)
    Z_members, _, M_z = measurement_ensemble(model, ens)
    gains = gains_and_covariances(devs.M_x, devs.M_b, M_z, model.meas_noise_cov)
    if cfg.mode == "enkf":
        ens, est = update_enkf(
            ens, Z_members, z_actual, gains, state.rngs.perturb, model.meas_noise_cov
        )
    else:
        ens, est = update_enckf(
            ens,
            Z_members,
            z_actual,
            gains,
            state.rngs.perturb,
            model.meas_noise_cov,
            prior,
            model.param_reference,
            state.repair_stats,
        )
    state.ensemble = ens
    state.last_estimate = est
    return state, est


def run_filter(
    model: SystemModel,
    x0_mean,
    P0,
    measurements,
    cfg: FilterConfig,
    rngs: FilterRngs,
) -> list[FilterEstimate]:
    """Drive a filter through a measurement sequence, one estimate per epoch."""
    state = init_filter(model, x0_mean, P0, cfg, rngs)
    estimates = []
    for z in np.asarray(measurements, dtype=float).reshape(-1, model.meas_dim):
        state, est = step(state, model, z, cfg)
        estimates.append(est)
    return estimates
