from typing import Any, Optional


class TrackingError(Exception):
    """Base class for all tracker, simulator and dataset errors"""

    exit_code: int = 1


class InvalidArgumentError(TrackingError, ValueError):
    exit_code = 2


class UsageError(TrackingError):
    exit_code = 2


class DegenerateGeometryError(TrackingError):
    """Point sets or endcap pairs that do not determine a rigid transform"""

    exit_code = 4

    def __init__(self, message: str, rank: Optional[int] = None):
        super().__init__(message)
        self.rank = rank


class NumericalFailureError(TrackingError):
    """NaN or Inf produced while evaluating a solver callable"""

    exit_code = 4

    def __init__(self, message: str, point: Any = None, context: Optional[dict] = None):
        super().__init__(message)
        self.point = point
        self.context = dict(context or {})

    def with_context(self, **context: Any) -> "NumericalFailureError":
        merged = {**self.context, **context}
        details = ", ".join(f"{k}={v}" for k, v in merged.items())
        return NumericalFailureError(f"{self.args[0]} ({details})", point=self.point, context=merged)


class PlaneNotFoundError(TrackingError):
    exit_code = 3


class InitializationError(TrackingError):
    exit_code = 3

    def __init__(self, message: str, endcap: Optional[int] = None):
        super().__init__(message)
        self.endcap = endcap


class InfeasibleTrajectoryError(TrackingError):
    exit_code = 3


class UndefinedMetricError(TrackingError):
    exit_code = 3


class DatasetError(TrackingError):
    """Unreadable, corrupt or incompatible dataset content"""

    exit_code = 3

    def __init__(self, message: str, path: Any = None, frame: Optional[int] = None):
        super().__init__(message)
        self.path = path
        self.frame = frame
