"""Exception hierarchy shared by all modules."""


class PlateHomogError(Exception):
    """Base class for toolkit errors."""


class InvalidArgumentError(PlateHomogError, ValueError):
    pass


class CoefficientValidityError(PlateHomogError, ValueError):
    pass


class ParityViolationError(PlateHomogError, ValueError):
    pass


class CompatibilityError(PlateHomogError, ValueError):
    """Right-hand side not orthogonal to the operator's nullspace."""


class SolverFailureError(PlateHomogError, RuntimeError):
    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class OutOfDomainError(PlateHomogError, ValueError):
    pass


class UnsupportedDataError(PlateHomogError, ValueError):
    pass


class TensorValidityError(PlateHomogError, ArithmeticError):
    pass


class InvalidConfigError(PlateHomogError, ValueError):
    pass


class StageError(PlateHomogError, RuntimeError):
    """A pipeline stage failed; the message is prefixed with the stage name."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
