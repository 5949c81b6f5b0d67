"""Exception hierarchy shared by every stage of the pipeline."""

from __future__ import annotations


class DistbeamError(Exception):
    """Base class for all library errors."""


class InvalidSpecError(DistbeamError, ValueError):
    pass


class InvalidInputError(DistbeamError, ValueError):
    pass


class OutOfRangeError(DistbeamError, ValueError):
    pass


class IncompatibleBuffersError(DistbeamError, ValueError):
    pass


class ParseError(DistbeamError, ValueError):
    """Scenario file does not match the schema; ``field`` names the offender."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class ValidationError(DistbeamError, ValueError):
    pass


class InsufficientDataError(DistbeamError, ValueError):
    pass


class InsufficientMicsError(DistbeamError, ValueError):
    pass


class ConsistencyError(DistbeamError):
    """Two anchor pairs contradict the triangle identity."""

    def __init__(self, triple: tuple[int, int, int], residual: float):
        super().__init__(
            f"anchors violate closure on mics {triple}: residual {residual:.3f} samples"
        )
        self.triple = triple
        self.residual = residual


class NothingToEnhanceError(DistbeamError):
    pass


class InvalidBaselineError(DistbeamError, ValueError):
    pass


class PlacementError(DistbeamError):
    pass


class StageError(DistbeamError):
    """Wraps a failure with the name of the pipeline stage that raised it."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
