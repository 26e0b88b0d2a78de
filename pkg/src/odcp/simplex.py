"""Core data types and simplex boundary handling."""

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .errors import InvalidSampleError, InvalidSeriesError

__all__ = [
    "DEFAULT_EPS",
    "SUM_TOL",
    "Series",
    "SegmentLabeling",
    "SeriesReport",
    "as_matrix",
    "clamp_to_interior",
    "clamp_rows",
    "validate_series",
]

DEFAULT_EPS = 1e-6
SUM_TOL = 1e-9

Kind = Literal["compositional", "general"]


def as_matrix(samples) -> np.ndarray:
    """Coerce a sequence of samples into a 2-D float array.

    Raises :class:`InvalidSeriesError` for empty or ragged input.
    """
    if isinstance(samples, np.ndarray):
        arr = samples
    else:
        rows = list(samples)
        if not rows:
            raise InvalidSeriesError("series is empty")
        dims = {len(np.atleast_1d(r)) for r in rows}
        if len(dims) != 1:
            raise InvalidSeriesError(f"ragged series: sample dimensions {sorted(dims)}")
        arr = np.asarray(rows)
    arr = np.asarray(arr, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise InvalidSeriesError(f"expected a non-empty 2-D array of samples, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class Series:
    """Ordered, fixed-dimension sequence of samples.

    ``samples`` is stored as a read-only ``(T, d)`` float array.
    """

    samples: np.ndarray
    kind: Kind = "compositional"

    def __post_init__(self):
        if self.kind not in ("compositional", "general"):
            raise InvalidSeriesError(f"unknown series kind {self.kind!r}")
        arr = as_matrix(self.samples).copy()
        if not np.all(np.isfinite(arr)):
            raise InvalidSeriesError("series contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class SegmentLabeling:
    """Strictly increasing interior change-point indices.

    An index ``tau`` marks the first sample of a new segment, equivalently the
    number of samples that precede the change.
    """

    change_points: tuple = ()
    length: int | None = None

    def __post_init__(self):
        cps = tuple(int(c) for c in self.change_points)
        if any(b <= a for a, b in zip(cps, cps[1:])):
            raise InvalidSeriesError(f"change points must be strictly increasing: {cps}")
        if cps and cps[0] <= 0:
            raise InvalidSeriesError("change points must be interior (> 0)")
        if self.length is not None and cps and cps[-1] >= self.length:
            raise InvalidSeriesError(f"change point {cps[-1]} not interior to length {self.length}")
        object.__setattr__(self, "change_points", cps)

    @property
    def n_segments(self) -> int:
        return len(self.change_points) + 1


def clamp_to_interior(raw, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Project a non-negative vector onto the interior of the simplex.

    The vector is normalized, components below ``eps`` are raised to
    ``eps`` and the remaining ones are scaled down so the total is one again.
    Every output component is at least ``eps``, which makes the map
    idempotent, and a normalized vector whose components are all at least
    ``eps`` comes back unchanged up to rounding.

    Parameters
    ----------
    raw : array_like
        Non-negative vector with at least two components and positive sum.
    eps : float
        Floor applied before the final renormalization, in ``(0, 1/K)``.

    Returns
    -------
    numpy.ndarray
        Strictly positive vector summing to one.
    """
    x = np.asarray(raw, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise InvalidSampleError("a composition needs at least two components")
    return clamp_rows(x[None, :], eps)[0]


def clamp_rows(x, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Row-wise :func:`clamp_to_interior` for a ``(T, K)`` array."""
    x = np.asarray(x, dtype=float)
    k = x.shape[1]
    if k < 2:
        raise InvalidSampleError("a composition needs at least two components")
    if not 0.0 < eps < 1.0 / k:
        raise InvalidSampleError(f"eps must lie in (0, 1/{k}), got {eps}")
    if not np.all(np.isfinite(x)):
        raise InvalidSampleError("sample contains non-finite values")
    neg = np.flatnonzero((x < 0.0).any(axis=1))
    if neg.size:
        raise InvalidSampleError(f"negative component in sample {int(neg[0])}")
    total = x.sum(axis=1)
    zero = np.flatnonzero(total <= 0.0)
    if zero.size:
        raise InvalidSampleError(f"all-zero sample at row {int(zero[0])}")
    r = x / total[:, None]
    # Scale the unclamped mass down until every clamped component sits at eps:
    # sum(max(eps, c * r)) = 1. The clamped set only grows as c shrinks, so
    # this settles in at most K passes, and the result is a fixed point.
    clamped = r < eps
    scale = np.ones(r.shape[0])
    for _ in range(k):
        free = np.where(clamped, 0.0, r).sum(axis=1)
        scale = (1.0 - eps * clamped.sum(axis=1)) / free
        grown = clamped | (r * scale[:, None] < eps)
        if np.array_equal(grown, clamped):
            break
        clamped = grown
    return np.where(clamped, eps, r * scale[:, None])


@dataclass
class SeriesReport:
    """Diagnostics produced by :func:`validate_series`."""

    length: int
    dim: int
    kind: str
    col_min: np.ndarray
    col_max: np.ndarray
    boundary_rows: list = field(default_factory=list)
    bad_sum_rows: list = field(default_factory=list)
    negative_rows: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.boundary_rows or self.bad_sum_rows or self.negative_rows)


def validate_series(series: "Series | Sequence", kind: Kind | None = None) -> SeriesReport:
    """Check shape and, for compositional data, simplex membership.

    Boundary-touching or mis-normalized samples are flagged, not rejected.
    Ragged input raises :class:`InvalidSeriesError`.
    """
    if isinstance(series, Series):
        arr = series.samples
        kind = kind or series.kind
    else:
        arr = as_matrix(series)
        kind = kind or "compositional"
    report = SeriesReport(
        length=arr.shape[0],
        dim=arr.shape[1],
        kind=kind,
        col_min=arr.min(axis=0),
        col_max=arr.max(axis=0),
    )
    if kind == "compositional":
        report.negative_rows = np.flatnonzero((arr < 0).any(axis=1)).tolist()
        report.boundary_rows = np.flatnonzero((arr <= 0).any(axis=1)).tolist()
        report.bad_sum_rows = np.flatnonzero(np.abs(arr.sum(axis=1) - 1.0) > SUM_TOL).tolist()
    return report
