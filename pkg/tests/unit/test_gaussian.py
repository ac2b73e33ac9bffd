"""
Unit tests for the Gaussian core
Eigen-factoring, log densities, factor storage and mixture sampling
"""

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from src.core.exceptions import DecompositionError, InsufficientDataError
from src.models.gaussian import (
    CovarianceFactors,
    DataMatrix,
    FactorSet,
    MixtureParams,
    compose_covariance,
    decompose_covariance,
    log_density,
    map_classification,
    mixture_loglik,
    orient_columns,
    sample_mixture,
)
from src.models.model_id import EEE, EEV, VVE, VVV
from tests.conftest import rotation


class TestDataMatrix:
    """Test the validated observation container"""

    def test_vector_becomes_column(self):
        data = DataMatrix(np.arange(5.0))
        assert (data.n, data.p) == (5, 1)

    def test_non_finite_rejected(self):
        with pytest.raises(InsufficientDataError):
            DataMatrix(np.array([[1.0, np.nan]]))

    def test_empty_rejected(self):
        with pytest.raises(InsufficientDataError):
            DataMatrix(np.empty((0, 2)))

    def test_values_are_read_only(self):
        data = DataMatrix(np.ones((3, 2)))
        with pytest.raises(ValueError):
            data.values[0, 0] = 2.0


class TestDecomposition:
    """Test volume / shape / orientation factoring"""

    def test_round_trip(self, rng, make_spd):
        """compose(decompose(S)) reproduces S"""
        sigma = make_spd(rng, 4)
        factors = decompose_covariance(sigma)
        np.testing.assert_allclose(compose_covariance(factors), sigma, atol=1e-10)

    def test_factor_invariants(self, rng, make_spd):
        """Shape is non-increasing with unit determinant, orientation orthogonal"""
        factors = decompose_covariance(make_spd(rng, 5, scale=3.0))
        factors.check()
        assert np.all(np.diff(factors.shape) <= 0)
        assert np.prod(factors.shape) == pytest.approx(1.0, abs=1e-10)

    def test_volume_is_root_determinant(self, rng, make_spd):
        sigma = make_spd(rng, 3)
        factors = decompose_covariance(sigma)
        assert factors.lam == pytest.approx(np.linalg.det(sigma) ** (1 / 3), rel=1e-10)

    def test_known_configuration(self):
        """lam=1, shape (4, 1/4) along the diagonals"""
        factors = CovarianceFactors(1.0, np.array([4.0, 0.25]), rotation(np.pi / 4))
        sigma = compose_covariance(factors)
        expected = np.array([[2.125, 1.875], [1.875, 2.125]])
        np.testing.assert_allclose(sigma, expected, atol=1e-12)
        recovered = decompose_covariance(sigma)
        np.testing.assert_allclose(recovered.shape, [4.0, 0.25], atol=1e-10)
        assert recovered.lam == pytest.approx(1.0)

    def test_singular_matrix_raises(self):
        with pytest.raises(DecompositionError):
            decompose_covariance(np.array([[1.0, 1.0], [1.0, 1.0]]))

    def test_non_square_raises(self):
        with pytest.raises(DecompositionError):
            decompose_covariance(np.ones((2, 3)))

    def test_orient_columns_sign(self):
        """First nonzero entry of every column becomes positive"""
        vectors = orient_columns(np.array([[0.0, -1.0], [-1.0, 0.0]]))
        np.testing.assert_array_equal(vectors, [[0.0, 1.0], [1.0, 0.0]])


class TestLogDensity:
    """Test the factored density against scipy"""

    def test_matches_scipy(self, rng, make_spd):
        sigma = make_spd(rng, 3)
        mean = rng.standard_normal(3)
        x = rng.standard_normal(3)
        expected = multivariate_normal(mean, sigma).logpdf(x)
        assert log_density(x, mean, decompose_covariance(sigma)) == pytest.approx(
            expected, rel=1e-10
        )

    def test_single_component_mixture_is_sum_of_densities(self, rng, make_spd):
        """k=1 log-likelihood equals the summed log densities"""
        sigma = make_spd(rng, 2)
        values = rng.standard_normal((20, 2))
        params = MixtureParams(
            model=VVV,
            weights=np.array([1.0]),
            means=np.zeros((1, 2)),
            factors=FactorSet.from_components(VVV, [decompose_covariance(sigma)]),
        )
        expected = multivariate_normal(np.zeros(2), sigma).logpdf(values).sum()
        assert mixture_loglik(values, params) == pytest.approx(expected, rel=1e-10)

    @pytest.mark.parametrize("scale", [1e-100, 1e100])
    def test_extreme_scales_stay_finite(self, rng, scale):
        """Scaling data and means by s shifts the log-likelihood by -n p log s"""
        centres = np.repeat([[0.0, 0.0], [3.0, 1.0]], 15, axis=0)
        values = rng.standard_normal((30, 2)) + centres
        components = [
            CovarianceFactors(1.0, np.array([2.0, 0.5]), rotation(0.3)),
            CovarianceFactors(2.0, np.array([1.5, 1.0 / 1.5]), rotation(1.1)),
        ]

        def params(s):
            scaled = [
                CovarianceFactors(f.lam * s**2, f.shape, f.orientation) for f in components
            ]
            return MixtureParams(
                model=VVV,
                weights=np.array([0.4, 0.6]),
                means=s * np.array([[0.0, 0.0], [3.0, 1.0]]),
                factors=FactorSet.from_components(VVV, scaled),
            )

        base = mixture_loglik(values, params(1.0))
        scaled = mixture_loglik(values * scale, params(scale))
        assert np.isfinite(scaled)
        assert scaled == pytest.approx(base - values.size * np.log(scale), rel=1e-9)

    def test_map_ties_go_to_lowest_index(self):
        z = np.array([[0.5, 0.5], [0.2, 0.8]])
        np.testing.assert_array_equal(map_classification(z), [0, 1])


class TestFactorSet:
    """Test shared factor storage"""

    def _components(self):
        return [
            CovarianceFactors(1.0, np.array([2.0, 0.5]), rotation(0.3)),
            CovarianceFactors(2.0, np.array([2.0, 0.5]), rotation(1.1)),
        ]

    def test_shared_factors_stored_once(self):
        factors = FactorSet.from_components(EEV, self._components())
        assert factors.volumes.shape == (1,)
        assert factors.shapes.shape == (1, 2)
        assert factors.orientations.shape == (2, 2, 2)
        assert factors.volume(1) == 1.0, "EEV takes component 0's volume"

    def test_wrong_storage_size_raises(self):
        with pytest.raises(ValueError):
            FactorSet(
                model=EEE,
                k=2,
                volumes=np.ones(2),
                shapes=np.ones((1, 2)),
                orientations=np.eye(2)[None],
            )

    def test_relax_keeps_covariances(self):
        """EEV stored as VVV describes the same matrices"""
        eev = FactorSet.from_components(EEV, self._components())
        relaxed = eev.relax_to(VVV)
        assert relaxed.volumes.shape == (2,)
        np.testing.assert_allclose(relaxed.covariances(), eev.covariances())

    def test_relax_requires_nesting(self):
        vve = FactorSet.from_components(VVE, self._components())
        with pytest.raises(ValueError):
            vve.relax_to(EEV)

    def test_mixture_params_validation(self):
        factors = FactorSet.from_components(VVV, self._components())
        with pytest.raises(ValueError):
            MixtureParams(VVV, np.array([0.7, 0.7]), np.zeros((2, 2)), factors)
        with pytest.raises(ValueError):
            MixtureParams(EEE, np.array([0.5, 0.5]), np.zeros((2, 2)), factors)


class TestSampling:
    """Test drawing from a mixture"""

    def _params(self):
        components = [
            CovarianceFactors(1.0, np.array([4.0, 0.25]), rotation(np.pi / 4)),
            CovarianceFactors(1.0, np.array([4.0, 0.25]), rotation(0.0)),
        ]
        return MixtureParams(
            model=EEV,
            weights=np.array([0.3, 0.7]),
            means=np.array([[0.0, 0.0], [0.0, 5.0]]),
            factors=FactorSet.from_components(EEV, components),
        )

    def test_same_seed_same_draws(self):
        first = sample_mixture(self._params(), 50, np.random.default_rng(3))
        second = sample_mixture(self._params(), 50, np.random.default_rng(3))
        np.testing.assert_array_equal(first[0], second[0])
        np.testing.assert_array_equal(first[1], second[1])

    def test_moments(self):
        """Large samples match the component means and covariances"""
        params = self._params()
        values, labels = sample_mixture(params, 20000, np.random.default_rng(11))
        assert np.mean(labels == 1) == pytest.approx(0.7, abs=0.02)
        for j in range(2):
            group = values[labels == j]
            np.testing.assert_allclose(group.mean(axis=0), params.means[j], atol=0.1)
            np.testing.assert_allclose(
                np.cov(group.T), compose_covariance(params.covariances[j]), atol=0.15
            )
