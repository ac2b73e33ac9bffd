"""
GPCM Toolkit Package
Version: 1.0.0

Eigen-decomposed Gaussian mixture models fitted by EM, likelihood-ratio
tests against the unconstrained model, closed testing for model selection,
information criteria and overlap-calibrated simulation.
"""

__version__ = "1.0.0"
__description__ = "GPCM Toolkit - Constrained Gaussian mixtures and LR-based model selection"

from src.core.config import settings

__all__ = [
    "settings",
    "__version__",
    "__description__",
]
