import numpy as np
import pytest

from enckf.numkit import (
    RepairStats,
    SeededRng,
    augmented_sqrt,
    cholesky_lower,
    psd_repair,
    sample_mvn,
)


def random_psd(rng, d, scale=1.0):
    M = rng.standard_normal((d, d))
    return scale * (M @ M.T)


class TestCholeskyLower:
    def test_identity(self):
        L = cholesky_lower(np.eye(2))
        np.testing.assert_array_equal(L, np.eye(2))

    def test_diagonal(self):
        L = cholesky_lower(np.diag([4.0, 9.0]))
        np.testing.assert_allclose(L, np.diag([2.0, 3.0]))

    def test_dense_example(self):
        A = np.array([[4.0, 2.0], [2.0, 5.0]])
        L = cholesky_lower(A)
        np.testing.assert_allclose(L, [[2.0, 0.0], [1.0, 2.0]])
        np.testing.assert_allclose(L @ L.T, A, atol=1e-12)

    def test_reconstruction_property(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            d = int(rng.integers(1, 7))
            A = random_psd(rng, d, scale=10.0 ** rng.integers(-3, 4))
            L = cholesky_lower(A)
            scale = 1e-10 * (1.0 + np.max(np.abs(A)))
            np.testing.assert_allclose(L @ L.T, A, atol=scale)
            assert np.allclose(np.triu(L, k=1), 0.0)
            assert np.all(np.diag(L) >= 0.0)

    def test_singular_psd_is_repaired(self):
        A = np.array([[4.0, 0.0], [0.0, 0.0]])
        L = cholesky_lower(A)
        np.testing.assert_allclose(L @ L.T, A, atol=1e-10)

    def test_indefinite_rejected(self):
        with pytest.raises(ValueError, match="not positive semidefinite"):
            cholesky_lower(np.diag([1.0, -1.0]))

    def test_asymmetric_rejected(self):
        with pytest.raises(ValueError, match="symmetric"):
            cholesky_lower(np.array([[1.0, 0.5], [0.0, 1.0]]))


class TestPsdRepair:
    def test_psd_input_gets_only_jitter(self):
        A = np.array([[4.0, 2.0], [2.0, 5.0]])
        out = psd_repair(A)
        jitter = 1e-12 * max(np.trace(A), 1.0)
        np.testing.assert_array_equal(out - jitter * np.eye(2), A)

    def test_tiny_negative_eigenvalue_clamped(self):
        A = np.diag([1.0, -1e-13])
        out = psd_repair(A)
        jitter = 1e-12 * max(np.trace(A), 1.0)
        np.testing.assert_allclose(out, np.diag([1.0 + jitter, jitter]), atol=1e-25)

    def test_zero_matrix_jitter_floor(self):
        out = psd_repair(np.zeros((2, 2)))
        np.testing.assert_array_equal(out, 1e-12 * np.eye(2))

    def test_idempotent_up_to_jitter(self):
        rng = np.random.default_rng(3)
        A = random_psd(rng, 4)
        once = psd_repair(A)
        twice = psd_repair(once)
        jitter = 1e-12 * max(np.trace(once), 1.0)
        # slack for float absorption when jitter lands on O(10) diagonals
        assert np.max(np.abs(twice - once)) <= jitter + 1e-13 * np.max(np.abs(once))

    def test_clamp_counting(self):
        stats = RepairStats()
        psd_repair(np.diag([1.0, -1e-13]), stats)  # round-off scale, not counted
        assert stats.clamps == 0
        psd_repair(np.diag([2.0, -1.2]), stats)
        assert stats.clamps == 1

    def test_result_passes_cholesky(self):
        out = psd_repair(np.diag([2.0, -1.2]))
        cholesky_lower(out)


class TestSeededRng:
    def test_determinism(self):
        a = SeededRng(123, 5).standard_normal(100)
        b = SeededRng(123, 5).standard_normal(100)
        np.testing.assert_array_equal(a, b)

    def test_streams_are_independent_sequences(self):
        a = SeededRng(123, 0).standard_normal(100)
        b = SeededRng(123, 1).standard_normal(100)
        assert not np.array_equal(a, b)


class TestSampleMvn:
    def test_degenerate_sqrt_gives_copies(self):
        out = sample_mvn([1.0, -2.0], np.zeros((2, 2)), SeededRng(0), 5)
        np.testing.assert_array_equal(out, np.tile([[1.0], [-2.0]], 5))

    def test_standard_normal_moments(self):
        out = sample_mvn([0.0], np.eye(1), SeededRng(7), 100_000)
        assert abs(out.mean()) < 0.02
        assert abs(out.var(ddof=1) - 1.0) < 0.02

    def test_bit_identical_reruns(self):
        a = sample_mvn([0.0, 1.0], np.eye(2), SeededRng(9, 2), 50)
        b = sample_mvn([0.0, 1.0], np.eye(2), SeededRng(9, 2), 50)
        np.testing.assert_array_equal(a, b)

    def test_rejects_single_member(self):
        with pytest.raises(ValueError, match="at least 2"):
            sample_mvn([0.0], np.eye(1), SeededRng(0), 1)


class TestAugmentedSqrt:
    def test_zero_cross_covariance_decouples(self):
        P_xx = np.array([[4.0, 2.0], [2.0, 5.0]])
        Q_b = np.array([[9.0]])
        S = augmented_sqrt(P_xx, np.zeros((2, 1)), Q_b)
        np.testing.assert_allclose(S[:2, :2], cholesky_lower(P_xx))
        np.testing.assert_allclose(S[2:, :2], 0.0)
        np.testing.assert_allclose(S[2:, 2:], 3.0, atol=1e-6)

    def test_scalar_blocks(self):
        S = augmented_sqrt([[4.0]], [[2.0]], [[4.0]])
        np.testing.assert_allclose(S, [[2.0, 0.0], [1.0, np.sqrt(3.0)]], atol=1e-6)
        np.testing.assert_allclose(
            S @ S.T, [[4.0, 2.0], [2.0, 4.0]], atol=1e-10
        )

    def test_vanishing_schur_complement(self):
        # Q_b equal to the explained variance leaves only jitter below.
        P_xx = np.array([[4.0]])
        P_xb = np.array([[2.0]])
        Q_b = np.array([[1.0]])  # exactly P_xb^T P_xx^-1 P_xb
        S = augmented_sqrt(P_xx, P_xb, Q_b)
        assert abs(S[1, 1]) < 1e-5

    def test_lower_triangular_shape(self):
        rng = np.random.default_rng(11)
        P = random_psd(rng, 5)
        S = augmented_sqrt(P[:3, :3], P[:3, 3:], P[3:, 3:])
        assert np.allclose(np.triu(S, k=1), 0.0)

    def test_reconstruction_random_blocks(self):
        rng = np.random.default_rng(1234)
        for _ in range(100):
            n = int(rng.integers(1, 6))
            l = int(rng.integers(1, 4))
            P = random_psd(rng, n + l, scale=10.0 ** rng.integers(-2, 3))
            target = np.block([[P[:n, :n], P[:n, n:]], [P[n:, :n], P[n:, n:]]])
            S = augmented_sqrt(P[:n, :n], P[:n, n:], P[n:, n:])
            tol = 1e-10 * max(np.trace(target), 1.0)
            np.testing.assert_allclose(S @ S.T, target, atol=tol)

    def test_collapsed_state_covariance_rejected(self):
        bad = np.full((2, 2), np.nan)
        with pytest.raises(ValueError, match="state covariance collapsed"):
            augmented_sqrt(bad, np.zeros((2, 1)), np.eye(1))
