"""
GPCM Data Models
Model identifiers, Gaussian mixture parameters and serializable reports.
"""

from src.models.gaussian import (
    CovarianceFactors,
    DataMatrix,
    FactorSet,
    MixtureParams,
    SufficientStats,
)
from src.models.model_id import ALL_MODELS, ModelId, parse_model_id
from src.models.reports import (
    ClosedTestReport,
    ExperimentSummary,
    FitReport,
    IcRow,
    IcTable,
    LrTestResult,
)

__all__ = [
    # Model space
    "ModelId",
    "ALL_MODELS",
    "parse_model_id",
    # Mixture parameters
    "DataMatrix",
    "CovarianceFactors",
    "FactorSet",
    "MixtureParams",
    "SufficientStats",
    # Reports
    "LrTestResult",
    "ClosedTestReport",
    "FitReport",
    "IcRow",
    "IcTable",
    "ExperimentSummary",
]
