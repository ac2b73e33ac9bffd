"""
Unit tests for the ordered log-eigenvalue solver
Active-set solution against the pool-adjacent-violators closed form
"""

import numpy as np
import pytest

from src.core.exceptions import InvalidProjectionError
from src.services.ordered_solver import (
    kkt_residual,
    ordered_eigenvalue_solve,
    pav_ordered_solution,
)


class TestOrderedSolve:
    """Test the primal active-set method"""

    def test_already_ordered_is_unconstrained_optimum(self):
        """Non-increasing b gives z_l = log(b_l / n)"""
        b = np.array([8.0, 4.0, 2.0, 1.0])
        zeta = ordered_eigenvalue_solve(b, 2.0)
        np.testing.assert_allclose(zeta, np.log(b / 2.0), atol=1e-12)

    def test_sum_zero_centres_ordered_solution(self):
        b = np.array([8.0, 4.0, 2.0, 1.0])
        zeta = ordered_eigenvalue_solve(b, 2.0, sum_zero=True)
        expected = np.log(b / 2.0)
        np.testing.assert_allclose(zeta, expected - expected.mean(), atol=1e-12)
        assert zeta.sum() == pytest.approx(0.0, abs=1e-12)

    def test_violating_pair_is_pooled(self):
        """Increasing b ties both coordinates at log of the mean"""
        zeta = ordered_eigenvalue_solve(np.array([1.0, 3.0]), 1.0)
        np.testing.assert_allclose(zeta, [np.log(2.0), np.log(2.0)], atol=1e-12)

    def test_equal_entries_sum_zero(self):
        zeta = ordered_eigenvalue_solve(np.full(3, 5.0), 10.0, sum_zero=True)
        np.testing.assert_allclose(zeta, np.zeros(3), atol=1e-12)

    def test_single_entry(self):
        assert ordered_eigenvalue_solve([6.0], 3.0)[0] == pytest.approx(np.log(2.0))
        assert ordered_eigenvalue_solve([6.0], 3.0, sum_zero=True)[0] == 0.0

    @pytest.mark.parametrize("sum_zero", [False, True])
    @pytest.mark.parametrize("seed", range(8))
    def test_matches_pool_adjacent_violators(self, seed, sum_zero):
        """Active-set output coincides with the PAV closed form"""
        rng = np.random.default_rng(seed)
        p = int(rng.integers(2, 8))
        b = rng.uniform(0.1, 10.0, size=p)
        n_j = float(rng.uniform(5.0, 50.0))
        zeta = ordered_eigenvalue_solve(b, n_j, sum_zero=sum_zero)
        np.testing.assert_allclose(
            zeta, pav_ordered_solution(b, n_j, sum_zero=sum_zero), atol=1e-8
        )
        assert np.all(np.diff(zeta) <= 1e-12), "solution must be non-increasing"
        assert kkt_residual(b, n_j, zeta, sum_zero) <= 1e-8

    @pytest.mark.slow
    @pytest.mark.parametrize("sum_zero", [False, True])
    def test_matches_pool_adjacent_violators_on_many_instances(self, sum_zero):
        rng = np.random.default_rng(10_000)
        worst = 0.0
        for _ in range(10_000):
            p = int(rng.integers(1, 9))
            b = np.exp(rng.uniform(-3.0, 3.0, size=p))
            n_j = float(rng.uniform(1.0, 100.0))
            zeta = ordered_eigenvalue_solve(b, n_j, sum_zero=sum_zero)
            closed = pav_ordered_solution(b, n_j, sum_zero=sum_zero)
            worst = max(worst, float(np.max(np.abs(zeta - closed))))
        assert worst <= 1e-10

    def test_solution_beats_feasible_points(self, rng):
        """No random feasible point scores lower"""
        b = np.array([1.0, 5.0, 2.0, 7.0, 0.5])
        n_j = 4.0

        def objective(z):
            return float(np.sum(b * np.exp(-z) + n_j * z))

        best = objective(ordered_eigenvalue_solve(b, n_j))
        for _ in range(200):
            z = np.sort(rng.normal(size=5))[::-1]
            assert objective(z) >= best - 1e-12


class TestKktResidual:
    """Test the optimality certificate"""

    def test_rejects_non_optimal_point(self):
        b = np.array([1.0, 3.0])
        assert kkt_residual(b, 1.0, np.zeros(2)) > 1e-3

    def test_rejects_infeasible_order(self):
        b = np.array([1.0, 3.0])
        assert kkt_residual(b, 1.0, np.log(b)) > 0.5


class TestValidation:
    """Test input checking"""

    @pytest.mark.parametrize("b", [[1.0, 0.0], [1.0, -2.0], [np.inf, 1.0], []])
    def test_bad_eigenvalues(self, b):
        with pytest.raises(InvalidProjectionError):
            ordered_eigenvalue_solve(np.array(b), 1.0)

    def test_bad_count(self):
        with pytest.raises(InvalidProjectionError):
            ordered_eigenvalue_solve(np.array([1.0, 2.0]), 0.0)
