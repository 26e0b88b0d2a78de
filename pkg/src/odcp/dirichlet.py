"""Dirichlet density, likelihood, maximum-likelihood fitting and KL divergence."""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._kernels import active as _k
from .errors import (
    DimensionError,
    EmptySegmentError,
    InsufficientDataError,
    InvalidSampleError,
    NonConvergenceError,
)
from .simplex import as_matrix
from .special import digamma, log_gamma

__all__ = [
    "DirichletParams",
    "SufficientStats",
    "DegenerateFitWarning",
    "MLE_TOL",
    "MLE_MAX_ITER",
    "log_beta",
    "log_pdf",
    "log_likelihood",
    "fit_mle",
    "moment_match_init",
    "stationarity_residual",
    "kl_dirichlet",
    "symmetric_kl",
    "sample",
]

MLE_TOL = 1e-7
MLE_MAX_ITER = 1000

_METHODS = {"newton": _kernels.METHOD_NEWTON, "fixed_point": _kernels.METHOD_FIXED_POINT}


class DegenerateFitWarning(UserWarning):
    """The fitted parameters hit a clamp bound."""


@dataclass(frozen=True)
class DirichletParams:
    """Concentration parameters of one Dirichlet distribution."""

    alpha: np.ndarray
    clamped: bool = False

    def __post_init__(self):
        a = np.array(self.alpha, dtype=float).reshape(-1)
        if a.size < 2 or not np.all(np.isfinite(a)) or np.any(a <= 0):
            raise InvalidSampleError(f"alpha must be a finite positive vector of length >= 2: {a}")
        a.setflags(write=False)
        object.__setattr__(self, "alpha", a)

    def __len__(self):
        return self.alpha.size

    @property
    def mean(self) -> np.ndarray:
        return self.alpha / self.alpha.sum()

    def tolist(self):
        return self.alpha.tolist()


def _params(p) -> DirichletParams:
    return p if isinstance(p, DirichletParams) else DirichletParams(p)


@dataclass(frozen=True)
class SufficientStats:
    """Per-component sums that determine the Dirichlet likelihood and its MLE.

    Stored as sums so two disjoint blocks combine by addition; ``mean_*``
    properties give the normalized forms.
    """

    n: int
    sum_log: np.ndarray
    sum_x: np.ndarray
    sum_sq: np.ndarray

    @classmethod
    def from_samples(cls, data) -> "SufficientStats":
        x = as_matrix(data)
        if np.any(x <= 0):
            raise InvalidSampleError("Dirichlet data must be strictly inside the simplex")
        return cls(x.shape[0], _exact_colsum(np.log(x)), _exact_colsum(x), _exact_colsum(x * x))

    def __add__(self, other: "SufficientStats") -> "SufficientStats":
        return SufficientStats(
            self.n + other.n,
            self.sum_log + other.sum_log,
            self.sum_x + other.sum_x,
            self.sum_sq + other.sum_sq,
        )

    def __sub__(self, other: "SufficientStats") -> "SufficientStats":
        return SufficientStats(
            self.n - other.n,
            self.sum_log - other.sum_log,
            self.sum_x - other.sum_x,
            self.sum_sq - other.sum_sq,
        )

    @property
    def mean_log(self):
        return self.sum_log / self.n

    @property
    def mean(self):
        return self.sum_x / self.n

    @property
    def mean_sq(self):
        return self.sum_sq / self.n


def _exact_colsum(a):
    # correctly rounded, hence independent of sample order
    return np.array([math.fsum(col) for col in a.T])


def _stats(data) -> SufficientStats:
    return data if isinstance(data, SufficientStats) else SufficientStats.from_samples(data)


def log_beta(params) -> float:
    """``log B(alpha) = sum(lgamma(alpha)) - lgamma(sum(alpha))``."""
    a = _params(params).alpha
    return float(np.sum(log_gamma(a)) - log_gamma(a.sum()))


def log_pdf(x, params) -> float:
    """Log density of one composition."""
    a = _params(params).alpha
    x = np.asarray(x, dtype=float)
    if x.shape != a.shape:
        raise DimensionError(f"sample has {x.size} components, alpha has {a.size}")
    return float(-log_beta(a) + np.dot(a - 1.0, np.log(x)))


def log_likelihood(data, params) -> float:
    """Sum of log densities over i.i.d. samples (or their sufficient statistics)."""
    a = _params(params).alpha
    if isinstance(data, SufficientStats):
        st = data
    else:
        if len(data) == 0:
            raise EmptySegmentError("log-likelihood of an empty segment")
        st = SufficientStats.from_samples(data)
    if st.n < 1:
        raise EmptySegmentError("log-likelihood of an empty segment")
    if st.sum_log.shape != a.shape:
        raise DimensionError(f"data has {st.sum_log.size} components, alpha has {a.size}")
    return float(-st.n * log_beta(a) + np.dot(a - 1.0, st.sum_log))


def moment_match_init(data) -> DirichletParams:
    """Moment-matching starting point for the MLE.

    The mean fixes the proportions; the precision comes from the mean and
    (population) variance of the first component and falls back to 1 when
    that variance is zero or the estimate is not positive.
    """
    st = _stats(data)
    if st.n < 2:
        raise InsufficientDataError("moment matching needs at least two samples")
    m = st.mean
    m1 = m[0]
    v1 = st.mean_sq[0] - m1 * m1
    s = (m1 - m1 * m1) / v1 - 1.0 if v1 > 0 else 1.0
    if not s > 0:
        s = 1.0
    return DirichletParams(np.clip(m * s, _kernels.ALPHA_MIN, _kernels.ALPHA_MAX))


def fit_mle(data, tol: float = MLE_TOL, max_iter: int = MLE_MAX_ITER, method: str = "newton") -> DirichletParams:
    """Maximum-likelihood Dirichlet parameters.

    Parameters
    ----------
    data : array_like or SufficientStats
        ``(n, K)`` interior compositions, ``n >= 2``. Only the sufficient
        statistics are used, so the result does not depend on sample order.
    tol : float
        Stop once the largest relative parameter change is at most ``tol``.
    max_iter : int
        Iteration budget.
    method : {"newton", "fixed_point"}
        ``"fixed_point"`` is Minka's update
        ``alpha_i <- inv_digamma(digamma(sum(alpha)) + mean_log_i)``.
        ``"newton"`` takes Newton steps on the concave log-likelihood using
        the diagonal-plus-rank-one Hessian. Each step is halved until it
        stays positive and does not lower the likelihood; the fixed-point
        update is the last resort.

    Notes
    -----
    When the precision diverges (near-constant data) the fit stops at
    ``max(alpha) = 1e6`` with the data's normalized geometric mean as its
    mean, is marked ``clamped`` and raises a ``DegenerateFitWarning``.

    Raises
    ------
    NonConvergenceError
        Budget exhausted with stationarity residual above ``100 * tol``.
    """
    st = _stats(data)
    if st.n < 2:
        raise InsufficientDataError("Dirichlet MLE needs at least two samples")
    try:
        code = _METHODS[method]
    except KeyError:
        raise ValueError(f"unknown MLE method {method!r}; choose from {sorted(_METHODS)}") from None
    alpha, flags, _ = _k.fit_batch(
        np.ascontiguousarray(st.mean_log[None, :]),
        np.ascontiguousarray(st.mean[None, :]),
        np.array([st.mean_sq[0]]),
        float(tol),
        int(max_iter),
        code,
    )
    alpha = alpha[0]
    if flags[0] & _kernels.FLAG_NONCONVERGED:
        raise NonConvergenceError(
            f"Dirichlet MLE did not converge in {max_iter} iterations",
            alpha=alpha,
            residual=stationarity_residual(alpha, st),
        )
    clamped = bool(flags[0] & _kernels.FLAG_CLAMPED)
    if clamped:
        warnings.warn("Dirichlet MLE hit a parameter clamp; data are near-degenerate", DegenerateFitWarning, stacklevel=2)
    return DirichletParams(alpha, clamped=clamped)


def stationarity_residual(params, data) -> float:
    """Largest ``|digamma(a_i) - digamma(sum a) - mean_log_i|``."""
    a = _params(params).alpha
    st = _stats(data)
    return float(np.max(np.abs(digamma(a) - digamma(a.sum()) - st.mean_log)))


def kl_dirichlet(a, b) -> float:
    """``KL(Dir(a) || Dir(b))`` in closed form, clamped at zero."""
    a = _params(a).alpha
    b = _params(b).alpha
    if a.shape != b.shape:
        raise DimensionError(f"parameter lengths differ: {a.size} vs {b.size}")
    val = log_beta(b) - log_beta(a) + float(np.dot(a - b, digamma(a) - digamma(a.sum())))
    return max(val, 0.0)


def symmetric_kl(a, b) -> float:
    """``KL(a || b) + KL(b || a)``."""
    return kl_dirichlet(a, b) + kl_dirichlet(b, a)


def sample(params, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``size`` compositions from ``Dir(params)``."""
    return rng.dirichlet(_params(params).alpha, size=size)
