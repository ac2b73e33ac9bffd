"""
GPCM Core Module
Exposes configuration, the error hierarchy and replicate parallelism.
"""

from src.core.config import FitConfig, MStepConfig, RunConfig, get_settings, settings
from src.core.exceptions import GpcmError, NumericalFailure, ValidationFailure
from src.core.parallel import run_tasks, task_rng

__all__ = [
    # Configuration
    "settings",
    "get_settings",
    "FitConfig",
    "MStepConfig",
    "RunConfig",
    # Errors
    "GpcmError",
    "ValidationFailure",
    "NumericalFailure",
    # Parallelism
    "run_tasks",
    "task_rng",
]
