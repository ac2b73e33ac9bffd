"""
Pytest Configuration and Fixtures
Shared datasets, random SPD matrices and sufficient-statistics builders.
"""

from pathlib import Path

import numpy as np
import pytest

from src.core.config import FitConfig
from src.models.gaussian import SufficientStats
from src.repositories.data_repository import DataRepository

FIXTURES = Path(__file__).parent / "fixtures"


def rotation(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def iris():
    """Versicolor and virginica flowers, four measurements plus species"""
    return DataRepository(FIXTURES).load_csv("iris_versicolor_virginica.csv")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def make_spd():
    """Factory for random SPD matrices with a controlled condition number"""

    def build(rng: np.random.Generator, p: int, scale: float = 1.0) -> np.ndarray:
        q, _ = np.linalg.qr(rng.standard_normal((p, p)))
        values = scale * rng.uniform(0.5, 3.0, size=p)
        return (q * values) @ q.T

    return build


@pytest.fixture
def make_stats():
    """Sufficient statistics whose scatters are exactly n_j * Sigma_j"""

    def build(covariances, counts) -> SufficientStats:
        covariances = np.asarray(covariances, dtype=float)
        counts = np.asarray(counts, dtype=float)
        k, p = covariances.shape[0], covariances.shape[1]
        return SufficientStats(
            counts=counts,
            means=np.zeros((k, p)),
            scatters=counts[:, None, None] * covariances,
        )

    return build


@pytest.fixture(scope="session")
def two_clusters():
    """Two well separated bivariate Gaussian groups of 60 and their labels"""
    rng = np.random.default_rng(7)
    first = rng.multivariate_normal([0.0, 0.0], [[1.0, 0.3], [0.3, 0.5]], size=60)
    second = rng.multivariate_normal([6.0, 6.0], [[0.5, -0.2], [-0.2, 1.0]], size=60)
    return np.vstack([first, second]), np.repeat([0, 1], 60)


@pytest.fixture(scope="session")
def quick_config() -> FitConfig:
    """Few random starts so family fits stay fast"""
    return FitConfig(starts=2)
