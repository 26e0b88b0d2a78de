"""Map general multivariate data into the open simplex and back.

The forward map standardizes each column and applies the multi-dimensional
expit (inverse multinomial logit), producing ``d + 1`` components from ``d``.
Because the map is a fixed bijection onto the simplex interior, densities
transform with the Jacobian factor and likelihood ratios are unchanged;
:func:`check_llr_invariance` and :func:`mixture_integrand` evaluate both
sides of those identities numerically.

The standardization is usually estimated from the series being analysed,
so strictly speaking the map is data-dependent.  Pass an externally fitted
:class:`Standardization` when that matters.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DegenerateDensityError, DimensionError, DomainError, InsufficientDataError
from .simplex import Series, as_matrix

__all__ = [
    "Standardization",
    "LemmaTestCase",
    "fit_standardization",
    "expit_map",
    "logit_unmap",
    "log_abs_det_jacobian",
    "to_compositional",
    "from_compositional",
    "check_llr_invariance",
    "mixture_integrand",
    "gaussian_logpdf",
]

SIGMA_FLOOR = 1e-12


@dataclass(frozen=True)
class Standardization:
    mu: np.ndarray
    sigma: np.ndarray
    guarded: tuple = ()

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float).reshape(-1)
        sigma = np.array(self.sigma, dtype=float).reshape(-1)
        if mu.shape != sigma.shape:
            raise DimensionError("mu and sigma must have the same length")
        if np.any(sigma <= 0) or not np.all(np.isfinite(sigma)):
            raise DomainError("sigma must be finite and positive")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "guarded", tuple(int(i) for i in self.guarded))

    @property
    def dim(self) -> int:
        return self.mu.size

    def apply(self, y):
        return (np.asarray(y, dtype=float) - self.mu) / self.sigma

    def invert(self, z):
        return np.asarray(z, dtype=float) * self.sigma + self.mu

    def to_dict(self):
        return {"mu": self.mu.tolist(), "sigma": self.sigma.tolist(), "guarded": list(self.guarded)}


def _general_matrix(series):
    if isinstance(series, Series):
        if series.kind != "general":
            raise ValueError("expected a general-kind series")
        return series.samples
    return as_matrix(series)


def fit_standardization(series) -> Standardization:
    """Column means and sample standard deviations (``n - 1`` denominator).

    Columns whose deviation is below 1e-12 get ``sigma = 1``; their indices
    are listed in ``guarded``.
    """
    y = _general_matrix(series)
    if y.shape[0] < 2:
        raise InsufficientDataError("standardization needs at least two samples")
    mu = y.mean(axis=0)
    sigma = y.std(axis=0, ddof=1)
    guarded = np.flatnonzero(sigma < SIGMA_FLOOR)
    sigma[guarded] = 1.0
    return Standardization(mu, sigma, tuple(guarded.tolist()))


def expit_map(y) -> np.ndarray:
    """Multi-dimensional expit: ``d`` reals to ``d + 1`` interior proportions.

    Works on a single vector or row-wise on a ``(n, d)`` array. The implicit
    pivot coordinate has logit 0; shifting by ``max(0, max(y))`` keeps every
    exponential finite.
    """
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise DomainError("expit_map requires finite input")
    single = y.ndim == 1
    y2 = np.atleast_2d(y)
    shift = np.maximum(y2.max(axis=1, keepdims=True), 0.0)
    e = np.exp(y2 - shift)
    pivot = np.exp(-shift)
    denom = pivot + e.sum(axis=1, keepdims=True)
    out = np.concatenate([e, pivot], axis=1) / denom
    # extreme inputs can underflow a component; keep the result interior
    out = np.maximum(out, np.finfo(float).tiny)
    out /= out.sum(axis=1, keepdims=True)
    return out[0] if single else out


def _interior(x):
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0) or not np.all(np.isfinite(x)):
        raise DomainError("composition must be strictly inside the simplex")
    return x


def logit_unmap(x) -> np.ndarray:
    """Inverse of :func:`expit_map`: ``y_i = ln(x_i / x_last)``."""
    x = _interior(x)
    return np.log(x[..., :-1]) - np.log(x[..., -1:])


def log_abs_det_jacobian(x, std: Standardization | None = None):
    """``ln |det dy/dx|`` of the inverse map on the free coordinates.

    With ``x`` of length ``d + 1`` this is ``-sum(ln x) + sum(ln sigma)``.
    """
    x = _interior(x)
    out = -np.log(x).sum(axis=-1)
    if std is not None:
        if std.dim != x.shape[-1] - 1:
            raise DimensionError(f"standardization has dimension {std.dim}, composition {x.shape[-1]}")
        out = out + np.log(std.sigma).sum()
    return out


def to_compositional(series, std: Standardization | None = None) -> Series:
    """Standardize then expit every sample; ``std`` is fitted if omitted."""
    y = _general_matrix(series)
    if std is None:
        std = fit_standardization(y)
    if y.shape[1] != std.dim:
        raise DimensionError(f"series has dimension {y.shape[1]}, standardization {std.dim}")
    return Series(expit_map(std.apply(y)), kind="compositional")


def from_compositional(series, std: Standardization) -> np.ndarray:
    """Inverse of :func:`to_compositional`: back to data units."""
    x = series.samples if isinstance(series, Series) else as_matrix(series)
    return std.invert(logit_unmap(x))


# ---------------------------------------------------------------------------
# invariance checks


LogDensity = Callable[[np.ndarray], np.ndarray]


def gaussian_logpdf(mean, cov) -> LogDensity:
    """Closed-form multivariate normal log density, vectorized over rows."""
    mean = np.asarray(mean, dtype=float)
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    chol = np.linalg.cholesky(cov)
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    d = mean.size
    const = -0.5 * (d * np.log(2.0 * np.pi) + logdet)

    def logpdf(y):
        r = np.atleast_2d(y) - mean
        sol = np.linalg.solve(chol, r.T)
        return const - 0.5 * (sol * sol).sum(axis=0)

    return logpdf


@dataclass
class LemmaTestCase:
    """Densities on ``R^d`` (as log-density callables) plus data and a split."""

    p0: LogDensity
    p1: LogDensity
    p2: LogDensity
    tau: int
    series: np.ndarray
    std: Standardization | None = None
    _x: np.ndarray = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.series = _general_matrix(self.series)
        if not 0 < self.tau < self.series.shape[0]:
            raise ValueError("tau must lie strictly inside the series")
        if self.std is None:
            self.std = fit_standardization(self.series)
        self._x = to_compositional(self.series, self.std).samples

    @property
    def transformed(self) -> np.ndarray:
        return self._x


def _checked(values, label):
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise DegenerateDensityError(f"{label} density is zero or undefined at some sample")
    return values


def _pulled_back(logp, x, std):
    """Log density on the simplex induced by ``logp`` on data space."""
    return logp(from_compositional(x, std)) + log_abs_det_jacobian(x, std)


def check_llr_invariance(case: LemmaTestCase):
    """Log-likelihood ratio of the split at ``tau`` in data space and on the simplex.

    Returns ``(llr_y, llr_x)``; the two agree up to rounding.
    """
    y, x, tau, std = case.series, case.transformed, case.tau, case.std
    llr_y = (
        _checked(case.p1(y[:tau]), "p1").sum()
        + _checked(case.p2(y[tau:]), "p2").sum()
        - _checked(case.p0(y), "p0").sum()
    )
    llr_x = (
        _checked(_pulled_back(case.p1, x[:tau], std), "q1").sum()
        + _checked(_pulled_back(case.p2, x[tau:], std), "q2").sum()
        - _checked(_pulled_back(case.p0, x, std), "q0").sum()
    )
    return float(llr_y), float(llr_x)


def _mixture(case):
    w = case.tau / case.series.shape[0]

    def logpm(y):
        return np.logaddexp(np.log(w) + case.p1(y), np.log1p(-w) + case.p2(y))

    return logpm


def mixture_integrand(case: LemmaTestCase):
    """Pointwise ``ln(q_m / q_0)`` at each transformed sample and ``ln(p_m / p_0)`` at the original.

    ``p_m`` is the mixture of ``p1`` and ``p2`` weighted by the split
    proportions. Returns two arrays that agree up to rounding.
    """
    logpm = _mixture(case)
    x, std = case.transformed, case.std
    lhs = _checked(_pulled_back(logpm, x, std), "qm") - _checked(_pulled_back(case.p0, x, std), "q0")
    rhs = _checked(logpm(case.series), "pm") - _checked(case.p0(case.series), "p0")
    return lhs, rhs
