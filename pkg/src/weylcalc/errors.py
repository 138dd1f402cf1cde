"""Exception hierarchy shared by all modules."""


class WeylCalcError(Exception):
    """Base class for every error raised by the package."""


class DegenerateFormError(WeylCalcError):
    """A quadratic form is singular or not positive definite."""


class DimensionError(WeylCalcError):
    """Arguments live in spaces of different dimension."""


class NumericFailure(WeylCalcError):
    """An iterative routine did not converge.

    The ``trace`` attribute keeps whatever convergence history was recorded.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []


class DomainError(WeylCalcError):
    """A point lies outside the sampled phase-space box."""


class ResolutionError(WeylCalcError):
    """The grid is too coarse for the requested finite-difference probe."""


class GridMismatchError(WeylCalcError):
    """Two objects were sampled on incompatible grids."""


class SymbolError(WeylCalcError):
    """Unknown symbol id or non-finite samples."""


class ContractionError(WeylCalcError):
    """The Neumann series precondition ||r^w|| < 1 fails."""


class ConvergenceError(WeylCalcError):
    """An iteration cap was reached before the tolerance was met."""


class NonInvertibleError(WeylCalcError):
    """The operator is singular or too badly conditioned to invert."""


class NoSpectralGapError(WeylCalcError):
    """The singular spectrum shows no usable gap around the rank tolerance.

    ``details`` carries the per-truncation measurements so that callers can
    report them.
    """

    def __init__(self, message, details=None):
        super().__init__(message)
        self.details = details or {}


class ContourError(WeylCalcError):
    """An eigenvalue sits on (or too close to) the Riesz contour."""


class EllipticityError(WeylCalcError):
    """A construction that needs an elliptic symbol received a non-elliptic one."""


class CoverageError(WeylCalcError):
    """Partition-of-unity centers are too sparse to renormalize."""


class FitUndefined(WeylCalcError):
    """A regression has no informative data."""


class ConfigError(WeylCalcError):
    """Invalid configuration file or value."""
