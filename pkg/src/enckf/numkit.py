"""Dense linear-algebra and sampling kernels shared by the filters.

Provides lower-triangular Cholesky factorization with a positive-semidefinite
repair fallback, reproducible multivariate normal sampling on named streams,
and the block square root of an augmented state/parameter covariance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

# Stream-id layout: each Monte Carlo run owns STREAMS_PER_RUN consecutive
# stream ids, one per consumer, so adding draws to one consumer never shifts
# the sequences seen by another.
STREAMS_PER_RUN = 8
STREAM_TRUTH_PARAM = 0
STREAM_TRUTH_PROCESS = 1
STREAM_TRUTH_MEAS = 2
STREAM_FILTER_INIT = 3
STREAM_FILTER_PROCESS = 4
STREAM_FILTER_PERTURB = 5
STREAM_FILTER_RESAMPLE = 6

_SYM_RTOL = 1e-10
_EIG_REJECT_RTOL = 1e-10
_JITTER_RTOL = 1e-12


@dataclass
class RepairStats:
    """Mutable counter for genuine (beyond round-off) eigenvalue clamps."""

    clamps: int = 0


@dataclass(frozen=True)
class SeededRng:
    """Deterministic random stream keyed by (seed, stream).

    Identical (seed, stream) pairs reproduce identical draw sequences across
    runs and platforms (PCG64 under a spawned SeedSequence). Instances are
    single-owner: hand each consumer its own stream.
    """

    seed: int
    stream: int = 0
    _gen: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,))
        object.__setattr__(self, "_gen", np.random.Generator(np.random.PCG64(ss)))

    def standard_normal(self, shape) -> np.ndarray:
        return self._gen.standard_normal(shape)


def _as_square(A, name: str) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {A.shape}")
    return A


def _check_symmetric(A: np.ndarray, name: str, rtol: float = _SYM_RTOL) -> None:
    scale = max(1.0, float(np.max(np.abs(A))) if A.size else 0.0)
    if A.size and float(np.max(np.abs(A - A.T))) > rtol * scale:
        raise ValueError(f"{name} is not symmetric within tolerance {rtol}")


def _eig_floor(A: np.ndarray) -> float:
    """Most negative eigenvalue tolerated before an input counts as indefinite."""
    return -_EIG_REJECT_RTOL * max(float(np.trace(A)), 1.0)


def psd_repair(A, stats: RepairStats | None = None) -> np.ndarray:
    """Clamp negative eigenvalues to zero and add a trace-scaled diagonal jitter.

    Total on symmetric input: any eigenvalue spectrum is accepted. The jitter
    is 1e-12 * max(trace, 1), so repairing an already-PSD matrix changes only
    the diagonal, and repairing twice accumulates at most one extra jitter
    unit. Clamps larger than round-off noise are counted in `stats`.
    """
    A = _as_square(A, "matrix")
    _check_symmetric(A, "matrix")
    A = 0.5 * (A + A.T)
    jitter = _JITTER_RTOL * max(float(np.trace(A)), 1.0)
    if A.size == 0:
        return A
    w = np.linalg.eigvalsh(A)
    if w[0] >= 0.0:
        out = A.copy()
    else:
        if stats is not None and w[0] < _eig_floor(A):
            stats.clamps += 1
        w_full, V = np.linalg.eigh(A)
        out = (V * np.maximum(w_full, 0.0)) @ V.T
        out = 0.5 * (out + out.T)
    out[np.diag_indices_from(out)] += jitter
    return out


def cholesky_lower(A, stats: RepairStats | None = None) -> np.ndarray:
    """Lower-triangular L with L @ L.T == A, repairing borderline inputs.

    Accepts symmetric positive-semidefinite matrices: eigenvalues in
    [-1e-10 * max(trace, 1), 0) are treated as round-off and repaired via
    `psd_repair` before factorizing. Anything more negative is rejected.
    """
    A = _as_square(A, "matrix")
    _check_symmetric(A, "matrix")
    if A.size == 0:
        return A.copy()
    if not np.all(np.isfinite(A)):
        # LAPACK potrf can return NaN factors without signalling
        raise ValueError("matrix has non-finite entries")
    try:
        return np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        pass
    w = np.linalg.eigvalsh(0.5 * (A + A.T))
    if w[0] < _eig_floor(A):
        raise ValueError(
            f"matrix is not positive semidefinite (min eigenvalue {w[0]:.3e})"
        )
    return np.linalg.cholesky(psd_repair(A, stats))


def sample_mvn(mean, sqrt_cov, rng: SeededRng, count: int) -> np.ndarray:
    """Draw `count` members of N(mean, sqrt_cov @ sqrt_cov.T), columns as members.

    Args:
        mean: center, shape (d,).
        sqrt_cov: lower-triangular square root, shape (d, d).
        rng: stream to consume; identical streams give bit-identical output.
        count: number of members, at least 2 (deviation matrices need m-1 >= 1).

    Returns:
        Array of shape (d, count); column i is mean + sqrt_cov @ u_i.
    """
    mean = np.asarray(mean, dtype=float).reshape(-1)
    sqrt_cov = _as_square(sqrt_cov, "sqrt_cov")
    d = mean.shape[0]
    if sqrt_cov.shape != (d, d):
        raise ValueError(
            f"sqrt_cov has shape {sqrt_cov.shape}, expected ({d}, {d})"
        )
    if count < 2:
        raise ValueError(f"ensemble size must be at least 2, got {count}")
    u = rng.standard_normal((d, count))
    return mean[:, None] + sqrt_cov @ u


def augmented_sqrt(
    P_xx, P_xb, Q_b, stats: RepairStats | None = None
) -> np.ndarray:
    """Block lower-triangular square root of [[P_xx, P_xb], [P_xb.T, Q_b]].

    The upper-left block is the Cholesky factor of P_xx, the lower-left block
    solves the cross-covariance consistency, and the lower-right block is the
    Cholesky factor of the (repaired) Schur complement
    Q_b - P_xb.T @ inv(P_xx) @ P_xb. The inverse is applied through
    triangular solves only.
    """
    P_xx = _as_square(P_xx, "P_xx")
    Q_b = _as_square(Q_b, "Q_b")
    n = P_xx.shape[0]
    l = Q_b.shape[0]
    P_xb = np.asarray(P_xb, dtype=float).reshape(n, l)
    try:
        S_xx = cholesky_lower(P_xx, stats)
    except ValueError as exc:
        raise ValueError(f"state covariance collapsed: {exc}") from exc
    S = np.zeros((n + l, n + l))
    S[:n, :n] = S_xx
    if l:
        # Y = inv(S_xx) @ P_xb, so the lower-left block Y.T satisfies
        # Y.T @ S_xx.T == P_xb.T and Y.T @ Y is the subtracted Schur term.
        if n:
            Y = solve_triangular(S_xx, P_xb, lower=True)
            schur = Q_b - Y.T @ Y
            S[n:, :n] = Y.T
        else:
            schur = Q_b.copy()
        schur = 0.5 * (schur + schur.T)
        S[n:, n:] = cholesky_lower(psd_repair(schur, stats))
    return S
