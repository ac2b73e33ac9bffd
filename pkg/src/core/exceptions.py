"""
GPCM Toolkit Exceptions
Validation failures map to CLI exit code 2, numerical failures to exit code 3.
"""

from typing import Optional, Sequence

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


class GpcmError(Exception):
    """Root of every error raised by the toolkit"""

    exit_code = 1


class ValidationFailure(GpcmError, ValueError):
    """Bad input: codes, flags, files, parameter pairs"""

    exit_code = EXIT_VALIDATION


class NumericalFailure(GpcmError, ArithmeticError):
    """A computation could not be carried out on otherwise valid input"""

    exit_code = EXIT_NUMERICAL


# =============================================================================
# Validation failures
# =============================================================================


class InvalidModelError(ValidationFailure):
    def __init__(self, name: str, valid: Sequence[str]):
        self.name = name
        super().__init__(
            f"Unknown model code {name!r}; valid codes are {', '.join(valid)}"
        )


class NotANullHypothesisError(ValidationFailure):
    pass


class InvalidAlphaRError(ValidationFailure):
    pass


class IncompleteInputError(ValidationFailure):
    pass


class CsvParseError(ValidationFailure):
    def __init__(self, message: str, line: int, column: Optional[int] = None):
        self.line = line
        self.column = column
        where = f"line {line}" if column is None else f"line {line}, column {column}"
        super().__init__(f"{where}: {message}")


class InsufficientDataError(ValidationFailure):
    pass


class InvalidShapeError(ValidationFailure):
    pass


class UnreachableOverlapError(ValidationFailure):
    pass


class InvalidProjectionError(ValidationFailure):
    pass


# =============================================================================
# Numerical failures
# =============================================================================


class DecompositionError(NumericalFailure):
    pass


class DegenerateScatterError(NumericalFailure):
    pass


class ComponentCollapseError(DegenerateScatterError):
    """A component's effective size fell below the collapse floor"""

    def __init__(
        self, component: int, weight: float, floor: float, trace: Sequence[float] = ()
    ):
        self.component = component
        self.weight = weight
        self.floor = floor
        self.trace = list(trace)
        super().__init__(
            f"Component {component} collapsed: n_j={weight:.4g} < {floor:.4g}"
        )

    def with_trace(self, trace: Sequence[float]) -> "ComponentCollapseError":
        return ComponentCollapseError(self.component, self.weight, self.floor, trace)


class NumericalUnderflowError(NumericalFailure):
    pass


class DominanceViolationError(NumericalFailure):
    pass


class BootstrapUnstableError(NumericalFailure):
    pass
