"""
GPCM Services Layer
Estimation, testing and simulation built on the data models.
"""

from src.services.em_engine import FitResult, fit, fit_family, fit_multistart
from src.services.closed_testing import closed_test
from src.services.scoring import ic_table, information_criteria
from src.services.simulation import pvalue_sdf_experiment

__all__ = [
    "FitResult",
    "fit",
    "fit_multistart",
    "fit_family",
    "closed_test",
    "information_criteria",
    "ic_table",
    "pvalue_sdf_experiment",
]
