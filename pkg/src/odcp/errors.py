"""Exception hierarchy shared across the package."""


class OdcpError(Exception):
    """Base class for all errors raised by odcp."""


class DomainError(OdcpError, ValueError):
    """Argument outside the domain of a numerical function."""


class InvalidSampleError(OdcpError, ValueError):
    """A single sample cannot be mapped onto the simplex."""


class InvalidSeriesError(OdcpError, ValueError):
    """Ragged, empty or otherwise malformed series."""


class DimensionError(OdcpError, ValueError):
    """Operands have incompatible dimensions."""


class InsufficientDataError(OdcpError, ValueError):
    """Too few samples for the requested computation."""


class EmptySegmentError(InsufficientDataError):
    """A likelihood was requested over zero samples."""


class NonConvergenceError(OdcpError, RuntimeError):
    """Iterative estimation stopped without meeting its tolerance.

    Attributes
    ----------
    alpha : numpy.ndarray
        Last iterate reached before giving up.
    residual : float
        Stationarity residual at ``alpha``.
    """

    def __init__(self, message, alpha=None, residual=float("nan")):
        super().__init__(message)
        self.alpha = alpha
        self.residual = residual


class SearchFailureError(OdcpError, RuntimeError):
    """A bracketing search could not reach its target."""


class SignificanceFailureError(OdcpError, RuntimeError):
    """Too many resampling replicates failed to produce a statistic."""


class DegenerateDensityError(OdcpError, ValueError):
    """A density evaluated to zero (log density of -inf) at a sample."""


class GenerationError(OdcpError, RuntimeError):
    """Synthetic data generation could not satisfy its constraints."""
