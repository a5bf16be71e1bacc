"""Exception types raised across the package."""


class PinowaveError(Exception):
    """Base class for all package errors."""


class InvalidArgument(PinowaveError, ValueError):
    pass


class InvalidGeometry(PinowaveError, ValueError):
    pass


class InvalidSample(PinowaveError, ValueError):
    pass


class UndefinedMetric(PinowaveError, ValueError):
    pass


class SolverDiverged(PinowaveError, RuntimeError):
    """Raised when a time integration produces non-finite or runaway values."""

    def __init__(self, message: str, step: int | None = None, time: float | None = None):
        super().__init__(message)
        self.step = step
        self.time = time


class ContractViolation(PinowaveError, RuntimeError):
    pass


class IntegrityError(PinowaveError, IOError):
    pass


class VersionMismatch(PinowaveError, IOError):
    pass


class NonFiniteLoss(PinowaveError, RuntimeError):
    def __init__(self, message: str, snapshot: dict | None = None):
        super().__init__(message)
        self.snapshot = snapshot or {}
