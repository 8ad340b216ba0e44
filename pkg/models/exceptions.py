from typing import List, Optional, Sequence


class FNLSError(Exception):
    """Base class for every error raised by the lab"""


class StructuralError(FNLSError, ValueError):
    """Grid, shape or kind mismatch between objects that must agree"""


class DomainError(FNLSError, ValueError):
    """A parameter lies outside the precondition of an operation"""


class UnsupportedOperationError(FNLSError, ValueError):
    pass


class AdmissibilityError(DomainError):
    """Exponent pair or hypothesis rejected; `condition` names the failed test"""

    def __init__(self, message: str, condition: str):
        super().__init__(message)
        self.condition = condition


class QuadratureValidationError(FNLSError, RuntimeError):
    def __init__(self, message: str, worst_x: float, max_error: float):
        super().__init__(message)
        self.worst_x = worst_x
        self.max_error = max_error


class ConvergenceError(FNLSError, RuntimeError):
    def __init__(self, message: str, residual_trace: Optional[Sequence[float]] = None):
        super().__init__(message)
        self.residual_trace = list(residual_trace or [])


class IntegrationError(FNLSError, RuntimeError):
    """Non-finite values appeared during time stepping"""

    def __init__(self, message: str, last_state=None, t: Optional[float] = None):
        super().__init__(message)
        self.last_state = last_state
        self.t = t


class ConfigValidationError(FNLSError, ValueError):
    """Run configuration rejected; `errors` lists every violated precondition"""

    def __init__(self, errors: List[str]):
        super().__init__("; ".join(errors))
        self.errors = list(errors)
