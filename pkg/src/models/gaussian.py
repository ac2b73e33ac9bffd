"""
Gaussian Core
Data container, eigen-factored covariances (volume, shape, orientation),
factored Gaussian log density and the mixture log-likelihood.
"""

from dataclasses import dataclass
from typing import List, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import logsumexp

from src.core.exceptions import DecompositionError, InsufficientDataError
from src.models.model_id import ModelId

LOG_2PI = np.log(2.0 * np.pi)
SPD_TOLERANCE = 1e-10
FACTOR_TOLERANCE = 1e-8

# n x k posterior probabilities, rows summing to one
Responsibilities = NDArray[np.float64]


@dataclass(frozen=True)
class DataMatrix:
    """n observations of p variables, all finite"""

    values: NDArray[np.float64]

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise InsufficientDataError(
                f"Data must be a non-empty n x p matrix, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise InsufficientDataError("Data contains non-finite entries")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]


DataLike = Union[DataMatrix, ArrayLike]


def as_data_matrix(data: DataLike) -> DataMatrix:
    return data if isinstance(data, DataMatrix) else DataMatrix(np.asarray(data))


@dataclass(frozen=True)
class CovarianceFactors:
    """Sigma = lam * Gamma diag(shape) Gamma'"""

    lam: float
    shape: NDArray[np.float64]
    orientation: NDArray[np.float64]

    @property
    def p(self) -> int:
        return self.shape.shape[0]

    def check(self, tol: float = FACTOR_TOLERANCE) -> None:
        """Raise DecompositionError when a factor invariant is broken"""
        if not self.lam > 0:
            raise DecompositionError(f"Volume must be positive, got {self.lam}")
        if np.any(self.shape <= 0):
            raise DecompositionError("Shape entries must be positive")
        if abs(np.sum(np.log(self.shape))) > tol:
            raise DecompositionError("Shape determinant differs from 1")
        if np.any(np.diff(self.shape) > tol * np.max(self.shape)):
            raise DecompositionError("Shape entries are not non-increasing")
        gram = self.orientation.T @ self.orientation
        if np.max(np.abs(gram - np.eye(self.p))) > tol:
            raise DecompositionError("Orientation is not orthogonal")


def compose_covariance(f: CovarianceFactors) -> NDArray[np.float64]:
    """lam * Gamma diag(shape) Gamma'"""
    gamma = f.orientation
    sigma = f.lam * (gamma * f.shape) @ gamma.T
    return 0.5 * (sigma + sigma.T)


def orient_columns(vectors: NDArray[np.float64]) -> NDArray[np.float64]:
    """Flip columns so the first nonzero entry of each is positive"""
    vectors = np.array(vectors, dtype=float)
    for col in range(vectors.shape[1]):
        column = vectors[:, col]
        nonzero = np.flatnonzero(np.abs(column) > 1e-12)
        if nonzero.size and column[nonzero[0]] < 0:
            vectors[:, col] = -column
    return vectors


def sorted_eigh(
    matrix: NDArray[np.float64],
) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Eigenpairs of a symmetric matrix, eigenvalues descending, signs fixed"""
    values, vectors = np.linalg.eigh(0.5 * (matrix + matrix.T))
    order = np.argsort(values, kind="stable")[::-1]
    return values[order], orient_columns(vectors[:, order])


def decompose_covariance(sigma: ArrayLike) -> CovarianceFactors:
    """Split an SPD matrix into volume, descending shape and orientation"""
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise DecompositionError(f"Expected a square matrix, got shape {sigma.shape}")
    if not np.all(np.isfinite(sigma)):
        raise DecompositionError("Matrix contains non-finite entries")

    values, vectors = sorted_eigh(sigma)
    if values[0] <= 0 or values[-1] <= SPD_TOLERANCE * values[0]:
        raise DecompositionError(
            f"Matrix is not positive definite (eigenvalues {values[-1]:.3g}..{values[0]:.3g})"
        )
    log_values = np.log(values)
    log_lam = log_values.mean()
    return CovarianceFactors(
        lam=float(np.exp(log_lam)),
        shape=np.exp(log_values - log_lam),
        orientation=vectors,
    )


def log_density(x: ArrayLike, mean: ArrayLike, cov: CovarianceFactors) -> float:
    """Gaussian log density evaluated through the factors"""
    rows = log_density_rows(np.atleast_2d(np.asarray(x, dtype=float)), mean, cov)
    return float(rows[0])


def log_density_rows(
    values: NDArray[np.float64], mean: ArrayLike, cov: CovarianceFactors
) -> NDArray[np.float64]:
    p = values.shape[1]
    projected = (values - np.asarray(mean, dtype=float)) @ cov.orientation
    quad = np.sum(projected**2 / (cov.lam * cov.shape), axis=1)
    log_det = p * np.log(cov.lam) + np.sum(np.log(cov.shape))
    return -0.5 * (p * LOG_2PI + log_det + quad)


# =============================================================================
# Factor storage for a constrained family member
# =============================================================================


@dataclass(frozen=True)
class FactorSet:
    """
    Covariance factors for k components under a model

    Shared factors are stored once (leading axis of length 1) and expanded on
    read, so equality constraints hold exactly.
    """

    model: ModelId
    k: int
    volumes: NDArray[np.float64]  # (1,) or (k,)
    shapes: NDArray[np.float64]  # (1, p) or (k, p)
    orientations: NDArray[np.float64]  # (1, p, p) or (k, p, p)

    def __post_init__(self):
        expected = {
            "volumes": 1 if self.model.common_volume else self.k,
            "shapes": 1 if self.model.common_shape else self.k,
            "orientations": 1 if self.model.common_orientation else self.k,
        }
        for field_name, size in expected.items():
            array = getattr(self, field_name)
            if array.shape[0] != size:
                raise ValueError(
                    f"{self.model} expects {size} {field_name}, got {array.shape[0]}"
                )

    @property
    def p(self) -> int:
        return self.shapes.shape[1]

    def volume(self, j: int) -> float:
        return float(self.volumes[0 if self.volumes.shape[0] == 1 else j])

    def shape(self, j: int) -> NDArray[np.float64]:
        return self.shapes[0 if self.shapes.shape[0] == 1 else j]

    def orientation(self, j: int) -> NDArray[np.float64]:
        return self.orientations[0 if self.orientations.shape[0] == 1 else j]

    def component(self, j: int) -> CovarianceFactors:
        return CovarianceFactors(self.volume(j), self.shape(j), self.orientation(j))

    def components(self) -> List[CovarianceFactors]:
        return [self.component(j) for j in range(self.k)]

    def covariances(self) -> NDArray[np.float64]:
        return np.stack([compose_covariance(f) for f in self.components()])

    def relax_to(self, model: ModelId) -> "FactorSet":
        """Same covariances, stored in the pattern of a less restrictive model"""
        if not self.model.is_nested_in(model):
            raise ValueError(f"{self.model} is not nested in {model}")

        def expand(array: NDArray[np.float64], common: bool) -> NDArray[np.float64]:
            if common or array.shape[0] == self.k:
                return array.copy()
            return np.repeat(array, self.k, axis=0)

        return FactorSet(
            model=model,
            k=self.k,
            volumes=expand(self.volumes, model.common_volume),
            shapes=expand(self.shapes, model.common_shape),
            orientations=expand(self.orientations, model.common_orientation),
        )

    @classmethod
    def from_components(
        cls, model: ModelId, factors: List[CovarianceFactors]
    ) -> "FactorSet":
        """
        Pack per-component factors; shared slots take component 0's values

        Callers are responsible for passing factors that already satisfy the
        model's equalities.
        """
        k = len(factors)

        def pick(common: bool) -> List[int]:
            return [0] if common else list(range(k))

        return cls(
            model=model,
            k=k,
            volumes=np.array([factors[j].lam for j in pick(model.common_volume)]),
            shapes=np.stack([factors[j].shape for j in pick(model.common_shape)]),
            orientations=np.stack(
                [factors[j].orientation for j in pick(model.common_orientation)]
            ),
        )

    def check(self, tol: float = FACTOR_TOLERANCE) -> None:
        for f in self.components():
            f.check(tol)


@dataclass(frozen=True)
class MixtureParams:
    """Weights, means and constrained covariance factors"""

    model: ModelId
    weights: NDArray[np.float64]
    means: NDArray[np.float64]  # (k, p)
    factors: FactorSet

    def __post_init__(self):
        if np.any(self.weights <= 0) or abs(self.weights.sum() - 1.0) > 1e-10:
            raise ValueError("Mixing weights must be positive and sum to one")
        if self.means.shape != (self.factors.k, self.factors.p):
            raise ValueError(
                f"Means shape {self.means.shape} does not match "
                f"k={self.factors.k}, p={self.factors.p}"
            )
        if self.factors.model != self.model:
            raise ValueError(f"Factors built for {self.factors.model}, not {self.model}")

    @property
    def k(self) -> int:
        return self.factors.k

    @property
    def p(self) -> int:
        return self.factors.p

    @property
    def covariances(self) -> List[CovarianceFactors]:
        return self.factors.components()


@dataclass(frozen=True)
class SufficientStats:
    """Weighted counts n_j, means and scatter matrices W_j about those means"""

    counts: NDArray[np.float64]  # (k,)
    means: NDArray[np.float64]  # (k, p)
    scatters: NDArray[np.float64]  # (k, p, p)

    @property
    def n(self) -> float:
        return float(self.counts.sum())

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    @property
    def p(self) -> int:
        return self.means.shape[1]


def component_log_densities(data: DataLike, params: MixtureParams) -> NDArray[np.float64]:
    """n x k matrix of log(pi_j) + log phi(x_i; mu_j, Sigma_j)"""
    values = as_data_matrix(data).values
    columns = [
        np.log(params.weights[j])
        + log_density_rows(values, params.means[j], params.factors.component(j))
        for j in range(params.k)
    ]
    return np.column_stack(columns)


def mixture_loglik(data: DataLike, params: MixtureParams) -> float:
    return float(np.sum(logsumexp(component_log_densities(data, params), axis=1)))


def map_classification(z: ArrayLike) -> NDArray[np.int64]:
    """MAP labels, ties resolved to the lowest component index"""
    return np.argmax(np.asarray(z), axis=1)


def sample_mixture(
    params: MixtureParams, n: int, rng: np.random.Generator
) -> Tuple[NDArray[np.float64], NDArray[np.int64]]:
    """Draw n observations and their true component labels"""
    labels = rng.choice(params.k, size=n, p=params.weights)
    noise = rng.standard_normal((n, params.p))
    values = np.empty((n, params.p))
    for j in range(params.k):
        rows = labels == j
        f = params.factors.component(j)
        scale = np.sqrt(f.lam * f.shape)
        values[rows] = params.means[j] + (noise[rows] * scale) @ f.orientation.T
    return values, labels
