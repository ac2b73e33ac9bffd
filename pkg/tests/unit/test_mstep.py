"""
Unit tests for the covariance M-steps
Closed forms, exact recovery when the truth satisfies the constraints,
and descent from warm starts
"""

import numpy as np
import pytest
from scipy.linalg import expm
from scipy.optimize import minimize

from src.core.exceptions import DegenerateScatterError
from src.models.gaussian import (
    CovarianceFactors,
    FactorSet,
    SufficientStats,
    compose_covariance,
)
from src.models.model_id import ALL_MODELS, EEE, EEV, EVE, EVV, VEE, VEV, VVE, VVV
from src.services.mstep import mstep, mstep_eve, mstep_objective, mstep_vve
from src.services.ordered_solver import pav_ordered_solution
from tests.conftest import rotation


def _covariance(lam, shape, angle):
    return compose_covariance(CovarianceFactors(lam, np.asarray(shape), rotation(angle)))


@pytest.fixture
def random_stats(rng, make_spd, make_stats):
    covariances = [make_spd(rng, 3) for _ in range(3)]
    return make_stats(covariances, [20.0, 35.0, 45.0])


class TestClosedForms:
    """Test models with explicit solutions"""

    def test_vvv_is_sample_covariance(self, random_stats):
        factors = mstep(VVV, random_stats)
        expected = random_stats.scatters / random_stats.counts[:, None, None]
        np.testing.assert_allclose(factors.covariances(), expected, atol=1e-10)

    def test_eee_is_pooled_covariance(self, random_stats):
        factors = mstep(EEE, random_stats)
        pooled = random_stats.scatters.sum(axis=0) / random_stats.n
        for sigma in factors.covariances():
            np.testing.assert_allclose(sigma, pooled, atol=1e-10)

    def test_evv_common_volume(self, random_stats):
        """lam = sum_j |W_j|^(1/p) / n"""
        factors = mstep(EVV, random_stats)
        roots = [np.linalg.det(w) ** (1 / 3) for w in random_stats.scatters]
        assert factors.volume(0) == pytest.approx(sum(roots) / random_stats.n)

    def test_eev_keeps_group_orientations(self, random_stats):
        factors = mstep(EEV, random_stats)
        for j in range(3):
            w = random_stats.scatters[j]
            gamma = factors.orientation(j)
            projected = gamma.T @ w @ gamma
            np.testing.assert_allclose(
                projected - np.diag(np.diag(projected)), 0.0, atol=1e-8
            )

    def test_single_component_is_ml_covariance(self, rng, make_spd, make_stats):
        """k=1 every model returns the sample covariance"""
        sigma = make_spd(rng, 3)
        stats = make_stats([sigma], [50.0])
        for model in ALL_MODELS:
            factors = mstep(model, stats)
            np.testing.assert_allclose(
                factors.covariances()[0], sigma, atol=1e-6, err_msg=str(model)
            )


class TestExactRecovery:
    """Test that representable truths are returned exactly"""

    def test_vee_recovers_proportional_covariances(self, make_stats):
        base = _covariance(1.0, [3.0, 1 / 3], 0.4)
        stats = make_stats([base, 4.0 * base], [30.0, 50.0])
        factors = mstep(VEE, stats)
        np.testing.assert_allclose(factors.covariances()[1], 4.0 * base, atol=1e-8)
        assert factors.volume(1) / factors.volume(0) == pytest.approx(4.0)

    def test_vev_recovers_common_shape(self, make_stats):
        first = _covariance(1.0, [2.0, 0.5], 0.2)
        second = _covariance(3.0, [2.0, 0.5], 1.3)
        stats = make_stats([first, second], [40.0, 60.0])
        factors = mstep(VEV, stats)
        np.testing.assert_allclose(factors.covariances()[0], first, atol=1e-8)
        np.testing.assert_allclose(factors.covariances()[1], second, atol=1e-8)

    def test_vve_recovers_common_orientation(self, make_stats):
        first = _covariance(1.0, [4.0, 0.25], 0.7)
        second = _covariance(2.5, [1.5, 1 / 1.5], 0.7)
        stats = make_stats([first, second], [40.0, 60.0])
        factors = mstep_vve(stats)
        np.testing.assert_allclose(factors.covariances()[0], first, atol=1e-7)
        np.testing.assert_allclose(factors.covariances()[1], second, atol=1e-7)

    def test_eve_recovers_common_volume_and_orientation(self, make_stats):
        first = _covariance(2.0, [4.0, 0.25], -0.5)
        second = _covariance(2.0, [1.5, 1 / 1.5], -0.5)
        stats = make_stats([first, second], [45.0, 55.0])
        factors = mstep_eve(stats)
        np.testing.assert_allclose(factors.covariances()[0], first, atol=1e-7)
        np.testing.assert_allclose(factors.covariances()[1], second, atol=1e-7)

    def test_different_orientations_favour_eev(self, make_stats):
        """Equal ordered shapes on different axes are EEV, not EVE"""
        first = _covariance(1.0, [4.0, 0.25], np.pi / 4)
        second = _covariance(1.0, [4.0, 0.25], 0.0)
        stats = make_stats([first, second], [50.0, 50.0])
        eev = mstep_objective(stats, mstep(EEV, stats))
        for model in (EEE, EVE, VVE):
            constrained = mstep_objective(stats, mstep(model, stats))
            assert constrained > eev + 1e-3, f"{model} should fit worse than EEV"


class TestDescentAndConstraints:
    """Test invariants every solver must keep"""

    @pytest.mark.parametrize("model", ALL_MODELS, ids=str)
    def test_factors_satisfy_constraints(self, model, random_stats):
        factors = mstep(model, random_stats)
        assert factors.model == model
        factors.check()

    @pytest.mark.parametrize("model", ALL_MODELS, ids=str)
    def test_vvv_is_the_lower_bound(self, model, random_stats):
        """No constrained model beats the unconstrained optimum"""
        floor = mstep_objective(random_stats, mstep(VVV, random_stats))
        value = mstep_objective(random_stats, mstep(model, random_stats))
        assert value >= floor - 1e-8 * abs(floor)

    @pytest.mark.parametrize(
        "parent, child", [(EEE, VEE), (VEE, VVE), (EVE, VVE), (EEE, EVE), (EEV, VEV)]
    )
    def test_warm_start_from_parent_never_worse(self, parent, child, random_stats):
        """An iterative M-step started at the parent optimum keeps or lowers F"""
        warm = mstep(parent, random_stats)
        start = mstep_objective(random_stats, warm)
        value = mstep_objective(random_stats, mstep(child, random_stats, prev=warm))
        assert value <= start + 1e-8 * abs(start)

    def test_zero_scatter_is_degenerate(self, make_stats):
        stats = make_stats([np.zeros((2, 2)), np.eye(2)], [5.0, 5.0])
        with pytest.raises(DegenerateScatterError):
            mstep(VVV, stats)

    @pytest.mark.parametrize("model", [VEE, VVE, EVE, VEV], ids=str)
    def test_iterative_models_reject_singular_scatter(self, model, make_stats):
        singular = np.array([[1.0, 1.0], [1.0, 1.0]])
        stats = make_stats([singular, singular], [5.0, 5.0])
        with pytest.raises(DegenerateScatterError):
            mstep(model, stats)


def _random_instance(seed: int, p: int = 3, k: int = 2):
    """Scatters n_j Sigma_j with independent orientations and spectra"""
    rng = np.random.default_rng(seed)
    counts = rng.uniform(20.0, 80.0, size=k)
    scatters = []
    for n_j in counts:
        q, _ = np.linalg.qr(rng.standard_normal((p, p)))
        scatters.append(n_j * (q * rng.uniform(0.2, 5.0, size=p)) @ q.T)
    return SufficientStats(
        counts=counts, means=np.zeros((k, p)), scatters=np.asarray(scatters)
    )


def _profiled_objective(model, stats):
    """F over the rotation exp(skew(theta)) of a base orientation"""
    n, p = stats.counts.sum(), stats.p

    def objective(theta, base):
        skew = np.zeros((p, p))
        skew[np.triu_indices(p, 1)] = theta
        gamma = base @ expm(skew - skew.T)
        b = np.einsum("pl,jpq,ql->jl", gamma, stats.scatters, gamma)
        if model == EVE:
            shapes = np.exp(
                [
                    pav_ordered_solution(b[j], n_j, sum_zero=True)
                    for j, n_j in enumerate(stats.counts)
                ]
            )
            return n * p * (1.0 + np.log(np.sum(b / shapes) / (n * p)))
        zetas = np.array(
            [pav_ordered_solution(b[j], n_j) for j, n_j in enumerate(stats.counts)]
        )
        return float(np.sum(b * np.exp(-zetas)) + np.sum(stats.counts[:, None] * zetas))

    return objective


def _oracle_value(model, stats, seed: int, starts: int = 8) -> float:
    """Best Nelder-Mead minimum over SO(p) from random and pooled bases"""
    rng = np.random.default_rng(seed + 1000)
    p = stats.p
    objective = _profiled_objective(model, stats)
    bases = [np.linalg.eigh(stats.scatters.sum(axis=0))[1][:, ::-1]]
    bases += [np.linalg.qr(rng.standard_normal((p, p)))[0] for _ in range(starts)]
    best = np.inf
    for base in bases:
        x0 = np.zeros(p * (p - 1) // 2)
        for _ in range(3):
            result = minimize(
                objective,
                x0,
                args=(base,),
                method="Nelder-Mead",
                options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 5000},
            )
            x0 = result.x
        best = min(best, result.fun)
    return best


class TestCommonOrientationOptimality:
    """EVE and VVE reach the constrained optimum found by an independent search"""

    @pytest.mark.parametrize("model", [EVE, VVE], ids=str)
    @pytest.mark.parametrize("seed", range(10))
    def test_matches_independent_optimizer(self, model, seed):
        stats = _random_instance(seed)
        factors = mstep(model, stats)
        factors.check()
        value = mstep_objective(stats, factors)
        oracle = _oracle_value(model, stats, seed)
        assert value <= oracle + 1e-5 * max(1.0, abs(oracle))

    @pytest.mark.slow
    @pytest.mark.parametrize("model", [EVE, VVE], ids=str)
    def test_matches_independent_optimizer_on_many_instances(self, model):
        gaps = []
        for seed in range(100, 200):
            stats = _random_instance(seed)
            value = mstep_objective(stats, mstep(model, stats))
            oracle = _oracle_value(model, stats, seed)
            gaps.append((value - oracle) / max(1.0, abs(oracle)))
        assert max(gaps) <= 1e-5

    @pytest.mark.parametrize("model", [EVE, VVE], ids=str)
    def test_warm_start_from_swapped_axes_improves(self, model):
        """Swapped axes pair the largest shape with the smallest variance"""
        stats = _random_instance(3)
        poor = mstep(model, stats)
        poor = FactorSet(
            model=model,
            k=poor.k,
            volumes=poor.volumes,
            shapes=poor.shapes,
            orientations=poor.orientations[:, :, ::-1].copy(),
        )
        start = mstep_objective(stats, poor)
        warm = mstep_objective(stats, mstep(model, stats, prev=poor))
        assert warm < start
