"""
Model Space
The eight general-family constraint patterns, their parameter counts and the
hypothesis hierarchy that ties them together.
"""

from enum import Enum
from itertools import product
from typing import Dict, FrozenSet, List, NamedTuple, Tuple

from src.core.exceptions import InvalidModelError, NotANullHypothesisError


class Flag(str, Enum):
    EQUAL = "E"
    VARIABLE = "V"


class ModelId(NamedTuple):
    """
    Constraint pattern (volume, shape, orientation)

    E shares the factor across components, V lets each component have its own.
    """

    volume: Flag
    shape: Flag
    orientation: Flag

    @property
    def name(self) -> str:
        return f"{self.volume.value}{self.shape.value}{self.orientation.value}"

    def __str__(self) -> str:
        return self.name

    def __repr__(self) -> str:
        return f"ModelId({self.name})"

    @property
    def common_volume(self) -> bool:
        return self.volume is Flag.EQUAL

    @property
    def common_shape(self) -> bool:
        return self.shape is Flag.EQUAL

    @property
    def common_orientation(self) -> bool:
        return self.orientation is Flag.EQUAL

    @property
    def variable_count(self) -> int:
        return sum(flag is Flag.VARIABLE for flag in self)

    def is_nested_in(self, other: "ModelId") -> bool:
        """True when every constraint of other also holds in self"""
        return all(
            mine is Flag.EQUAL or theirs is Flag.VARIABLE
            for mine, theirs in zip(self, other)
        )


def _model(code: str) -> ModelId:
    return ModelId(*(Flag(c) for c in code))


EEE = _model("EEE")
VEE = _model("VEE")
EVE = _model("EVE")
EEV = _model("EEV")
VVE = _model("VVE")
VEV = _model("VEV")
EVV = _model("EVV")
VVV = _model("VVV")

# Hierarchy order: EEE, then one V, then two V, then VVV
ALL_MODELS: Tuple[ModelId, ...] = (EEE, VEE, EVE, EEV, VVE, VEV, EVV, VVV)
NULL_MODELS: Tuple[ModelId, ...] = ALL_MODELS[:-1]
ELEMENTARY_MODELS: Tuple[ModelId, ...] = (VVE, VEV, EVV)

_BY_NAME: Dict[str, ModelId] = {m.name: m for m in ALL_MODELS}


def parse_model_id(name: str) -> ModelId:
    """Parse a 3-letter code, case-insensitive"""
    key = name.strip().upper() if isinstance(name, str) else ""
    try:
        return _BY_NAME[key]
    except KeyError:
        raise InvalidModelError(name, [m.name for m in ALL_MODELS]) from None


def covariance_params(m: ModelId, p: int, k: int) -> int:
    """Free parameters of the k covariance matrices under m"""
    rotation = p * (p - 1) // 2
    volumes = k if m.volume is Flag.VARIABLE else 1
    shapes = (k if m.shape is Flag.VARIABLE else 1) * (p - 1)
    orientations = (k if m.orientation is Flag.VARIABLE else 1) * rotation
    return volumes + shapes + orientations


def total_params(m: ModelId, p: int, k: int) -> int:
    """eta_M: mixing weights, means and covariance parameters"""
    if p < 1 or k < 1:
        raise ValueError(f"p and k must be positive, got p={p}, k={k}")
    return (k - 1) + k * p + covariance_params(m, p, k)


def lr_degrees_of_freedom(m: ModelId, p: int, k: int) -> int:
    """nu_M = eta_VVV - eta_M"""
    return total_params(VVV, p, k) - total_params(m, p, k)


def hierarchy_level(m: ModelId) -> int:
    """0 for EEE up to 3 for VVV"""
    return m.variable_count


def hierarchy_parents(m: ModelId) -> List[ModelId]:
    """Models one step more restrictive than m (one V turned into E)"""
    parents = []
    for position, flag in enumerate(m):
        if flag is Flag.VARIABLE:
            flags = list(m)
            flags[position] = Flag.EQUAL
            parents.append(ModelId(*flags))
    return sorted(parents, key=ALL_MODELS.index)


def implied_hypotheses(m: ModelId) -> FrozenSet[ModelId]:
    """m plus every strictly more restrictive member of the family"""
    if m == VVV:
        raise NotANullHypothesisError("VVV is the alternative, not a null hypothesis")
    choices = [(Flag.EQUAL,) if f is Flag.EQUAL else (Flag.EQUAL, Flag.VARIABLE) for f in m]
    return frozenset(ModelId(*flags) for flags in product(*choices))
