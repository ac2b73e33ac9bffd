"""
Data Access Layer - Repositories
CSV input and report output kept apart from the numerical services
"""

from src.repositories.data_repository import DataRepository, LabeledData

__all__ = [
    "DataRepository",
    "LabeledData",
]
