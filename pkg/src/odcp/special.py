"""Scalar special functions used by the Dirichlet likelihood and its MLE.

All functions accept a float or an array and return the same shape.
Arguments outside the domain raise :class:`~odcp.errors.DomainError`.
``digamma`` and ``trigamma`` shift upward by recurrence until the argument
reaches 6, then apply the asymptotic series. ``log_gamma`` delegates to
``math.lgamma`` (compiled backend) or ``scipy.special.gammaln``.
"""

import numpy as np

from ._kernels import active as _k
from .errors import DomainError

__all__ = ["log_gamma", "digamma", "trigamma", "inv_digamma", "EULER_GAMMA"]

EULER_GAMMA = 0.5772156649015329


def _positive(x, name):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
        raise DomainError(f"{name} requires finite positive arguments")
    return arr


def _apply(fn, arr):
    flat = np.ascontiguousarray(arr, dtype=float).reshape(-1)
    out = np.asarray(fn(flat)).reshape(arr.shape)
    return float(out) if out.ndim == 0 else out


def log_gamma(x):
    """Natural log of the gamma function for ``x > 0``."""
    return _apply(_k.log_gamma, _positive(x, "log_gamma"))


def digamma(x):
    """Logarithmic derivative of the gamma function for ``x > 0``."""
    return _apply(_k.digamma, _positive(x, "digamma"))


def trigamma(x):
    """Derivative of :func:`digamma` for ``x > 0``."""
    return _apply(_k.trigamma, _positive(x, "trigamma"))


def inv_digamma(y):
    """Solve ``digamma(x) = y`` for ``x > 0``.

    Starts from Minka's piecewise initializer and applies five Newton steps,
    which is enough for ``|digamma(x) - y| <= 1e-10`` over the working range.
    """
    arr = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("inv_digamma requires finite arguments")
    return _apply(_k.inv_digamma, arr)
