"""
Exception hierarchy of the FMSE lab.

The management command maps these onto process exit codes:
configuration problems → 2, well-posedness violations → 3, failed identities → 1.
"""
from typing import Optional


class FmseError(Exception):
    """Base class for every error raised by the lab."""


class ConfigurationError(FmseError, ValueError):
    """Experiment or settings configuration failed validation."""


class GridError(FmseError, ValueError):
    """Grid precondition violated, or objects living on different grids were combined."""


class FieldError(FmseError, ValueError):
    """Shape, finiteness or positivity requirement of a field violated."""


class WellPosednessError(FmseError):
    """
    The interior block of the stiffness matrix is singular or numerically singular.

    The standing assumption is that 0 is not an eigenvalue of the exterior
    Dirichlet problem; no shift or regularization is attempted.
    """

    def __init__(self, message: str, condition: Optional[float] = None):
        super().__init__(message)
        self.condition = condition


class GaugeConstructionError(FmseError):
    """No gauge partner construction exists for the given potentials."""


class IdentityFailure(FmseError):
    """An asserted identity exceeded its tolerance."""

    def __init__(self, metric: str, value: float, tolerance: float):
        super().__init__(f"{metric} = {value:.3e} exceeds tolerance {tolerance:.1e}")
        self.metric = metric
        self.value = value
        self.tolerance = tolerance
