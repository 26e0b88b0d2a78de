"""Seeded synthetic series with known change points.

Segments are generated in order, each from its own random stream derived
from ``(seed, segment index)``, so editing a later segment never changes the
draws of an earlier one.

Noise levels for the Gaussian presets follow the labels used for the
reported experiments, where the *smaller* number (5) is called high SNR and
the larger (20) low SNR.  The number is treated as a noise multiplier:
noise standard deviation = ``label / 10`` base-signal units.
"""

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .dirichlet import DirichletParams, symmetric_kl
from .errors import GenerationError, SearchFailureError
from .simplex import DEFAULT_EPS, SegmentLabeling, Series, clamp_rows
from .transform import expit_map

__all__ = [
    "SegmentSpec",
    "GenSpec",
    "generate",
    "find_dirichlet_pair",
    "gaussian_preset",
    "preset",
    "PRESETS",
    "SNR_LABELS",
]

Family = Literal["dirichlet", "dirichlet_mixture", "gaussian"]
PostTransform = Literal["none", "l1_normalize", "expit"]

SNR_LABELS = {"high": 5.0, "low": 20.0}
SIGNAL_UNIT = 1.0
MIXTURE_WEIGHTS = (0.3, 0.4, 0.3)
MIXTURE_PERTURBATION = 0.15
MEAN_MARGIN_SIGMAS = 5.0
_MAX_REDRAWS = 100


@dataclass(frozen=True)
class SegmentSpec:
    """One homogeneous segment.

    ``params`` by family:

    - ``dirichlet``: ``{"alpha": [...]}``
    - ``dirichlet_mixture``: ``{"components": [[...], ...], "weights": [...]}``
    - ``gaussian``: ``{"mean": [...], "cov": [[...], ...]}``
    """

    length: int
    family: Family
    params: dict

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("segment length must be >= 1")
        p = self.params
        if self.family == "dirichlet":
            DirichletParams(p["alpha"])
        elif self.family == "dirichlet_mixture":
            w = np.asarray(p["weights"], dtype=float)
            if len(p["components"]) != w.size or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
                raise ValueError("mixture weights must be non-negative, sum to 1 and match the components")
            for c in p["components"]:
                DirichletParams(c)
        elif self.family == "gaussian":
            cov = np.asarray(p["cov"], dtype=float)
            mean = np.asarray(p["mean"], dtype=float)
            if cov.shape != (mean.size, mean.size) or not np.allclose(cov, cov.T):
                raise ValueError("covariance must be square, symmetric and match the mean")
            np.linalg.cholesky(cov)
        else:
            raise ValueError(f"unknown family {self.family!r}")

    @property
    def dim(self) -> int:
        p = self.params
        if self.family == "dirichlet":
            return len(p["alpha"])
        if self.family == "dirichlet_mixture":
            return len(p["components"][0])
        return len(p["mean"])

    def to_dict(self):
        return {"length": self.length, "family": self.family, "params": _jsonable(self.params)}


@dataclass(frozen=True)
class GenSpec:
    segments: tuple
    post_transform: PostTransform = "none"
    seed: int = 0
    eps: float = DEFAULT_EPS
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        segs = tuple(self.segments)
        if not segs:
            raise ValueError("at least one segment is required")
        if len({s.dim for s in segs}) != 1:
            raise ValueError("all segments must share one dimension")
        if self.post_transform != "none" and any(s.family != "gaussian" for s in segs):
            raise ValueError("post transforms apply to gaussian segments only")
        object.__setattr__(self, "segments", segs)

    @property
    def length(self) -> int:
        return sum(s.length for s in self.segments)

    @property
    def kind(self) -> str:
        if self.post_transform == "none" and self.segments[0].family == "gaussian":
            return "general"
        return "compositional"

    def labeling(self) -> SegmentLabeling:
        bounds = np.cumsum([s.length for s in self.segments])[:-1]
        return SegmentLabeling(tuple(int(b) for b in bounds), length=self.length)

    def to_dict(self):
        return {
            "segments": [s.to_dict() for s in self.segments],
            "post_transform": self.post_transform,
            "seed": self.seed,
            "eps": self.eps,
            "meta": _jsonable(self.meta),
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _segment_rng(seed, index):
    return np.random.default_rng([int(seed), 0x5E6, int(index)])


def _draw_dirichlet(alpha, n, rng):
    return rng.dirichlet(np.asarray(alpha, dtype=float), size=n)


def _draw_mixture(params, n, rng):
    comps = [np.asarray(c, dtype=float) for c in params["components"]]
    labels = rng.choice(len(comps), size=n, p=np.asarray(params["weights"], dtype=float))
    out = np.empty((n, comps[0].size))
    for j, a in enumerate(comps):
        idx = np.flatnonzero(labels == j)
        if idx.size:
            out[idx] = rng.dirichlet(a, size=idx.size)
    return out, labels


def _draw_gaussian(params, n, rng, positive):
    mean = np.asarray(params["mean"], dtype=float)
    chol = np.linalg.cholesky(np.asarray(params["cov"], dtype=float))
    y = mean + rng.standard_normal((n, mean.size)) @ chol.T
    if positive:
        for _ in range(_MAX_REDRAWS):
            bad = np.flatnonzero((y <= 0).any(axis=1))
            if not bad.size:
                break
            y[bad] = mean + rng.standard_normal((bad.size, mean.size)) @ chol.T
        else:
            raise GenerationError("could not draw strictly positive samples for l1 normalization")
    return y


def generate(spec: GenSpec):
    """Sample a series and its labeling.

    Returns ``(Series, SegmentLabeling)``. Compositional output is clamped
    to the simplex interior with ``spec.eps``.
    """
    parts = []
    for i, seg in enumerate(spec.segments):
        rng = _segment_rng(spec.seed, i)
        if seg.family == "dirichlet":
            x = _draw_dirichlet(seg.params["alpha"], seg.length, rng)
        elif seg.family == "dirichlet_mixture":
            x, _ = _draw_mixture(seg.params, seg.length, rng)
        else:
            x = _draw_gaussian(seg.params, seg.length, rng, positive=spec.post_transform == "l1_normalize")
        parts.append(x)
    data = np.concatenate(parts)
    if spec.post_transform == "l1_normalize":
        data = data / np.abs(data).sum(axis=1, keepdims=True)
    elif spec.post_transform == "expit":
        data = expit_map(data)
    if spec.kind == "compositional":
        data = clamp_rows(data, spec.eps)
    return Series(data, kind=spec.kind), spec.labeling()


# ---------------------------------------------------------------------------
# parameter construction


def _direction(k):
    u = np.where(np.arange(k) % 2 == 0, 1.0, -1.0)
    return u / np.linalg.norm(u)


def find_dirichlet_pair(base, target_sym_kl: float, tol: float = 1e-3, c_max: float = 10.0) -> DirichletParams:
    """Parameters at a given symmetric KL divergence from ``base``.

    Searches ``base * exp(c * u)`` over ``c`` in ``[0, c_max]`` by bisection,
    where ``u`` is the unit vector with alternating signs.
    """
    base = base if isinstance(base, DirichletParams) else DirichletParams(base)
    if target_sym_kl < 0:
        raise ValueError("target divergence must be non-negative")
    if target_sym_kl == 0:
        return base
    u = _direction(len(base))

    def skl(c):
        return symmetric_kl(base, base.alpha * np.exp(c * u))

    hi = 1.0
    while skl(hi) < target_sym_kl:
        hi *= 2.0
        if hi > c_max:
            if skl(c_max) < target_sym_kl:
                raise SearchFailureError(f"symmetric KL {target_sym_kl} unreachable for c <= {c_max}")
            hi = c_max
            break
    lo = 0.0
    prev = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        val = skl(mid)
        if abs(val - target_sym_kl) <= tol:
            return DirichletParams(base.alpha * np.exp(mid * u))
        if val < target_sym_kl:
            if val < prev:
                raise SearchFailureError("symmetric KL is not monotone along the search path")
            lo, prev = mid, val
        else:
            hi = mid
    raise SearchFailureError("bisection did not reach the requested tolerance")


def _choose_coords(rng, d, sparsity):
    n = int(math.ceil(sparsity * d - 1e-9))
    return np.sort(rng.choice(d, size=max(n, 1), replace=False))


def gaussian_preset(
    kind: Literal["mean_change", "var_change"],
    snr: Literal["high", "low"] = "high",
    d: int = 10,
    sparsity: float = 1.0,
    segments: int = 2,
    seg_len: int = 500,
    seed: int = 0,
    post_transform: PostTransform = "none",
) -> GenSpec:
    """Diagonal Gaussian segments whose boundaries change a random coordinate subset.

    At each boundary ``ceil(sparsity * d)`` coordinates, chosen uniformly,
    change: ``mean_change`` moves their means by one signal unit (random
    sign), ``var_change`` doubles their standard deviations. The noise
    standard deviation is ``SNR_LABELS[snr] / 10`` signal units. For
    ``l1_normalize`` the means are lifted to at least five of the largest
    standard deviations of each coordinate so samples stay positive.
    """
    if d < 2 or segments < 2:
        raise ValueError("need d >= 2 and at least two segments")
    if not 0.0 < sparsity <= 1.0:
        raise ValueError("sparsity must lie in (0, 1]")
    if kind not in ("mean_change", "var_change"):
        raise ValueError(f"unknown change kind {kind!r}")
    rng = np.random.default_rng([int(seed), 0xC0DE])
    noise = SNR_LABELS[snr] / 10.0 * SIGNAL_UNIT
    means = [np.zeros(d)]
    sds = [np.full(d, noise)]
    changed = []
    for _ in range(segments - 1):
        coords = _choose_coords(rng, d, sparsity)
        m, s = means[-1].copy(), sds[-1].copy()
        if kind == "mean_change":
            m[coords] += SIGNAL_UNIT * rng.choice([-1.0, 1.0], size=coords.size)
        else:
            s[coords] *= 2.0
        means.append(m)
        sds.append(s)
        changed.append(coords.tolist())
    means = np.array(means)
    sds = np.array(sds)
    if post_transform == "l1_normalize":
        lift = MEAN_MARGIN_SIGMAS * sds.max(axis=0) - means.min(axis=0)
        means = means + np.maximum(lift, 0.0) + SIGNAL_UNIT
    segs = tuple(
        SegmentSpec(seg_len, "gaussian", {"mean": means[r].tolist(), "cov": np.diag(sds[r] ** 2).tolist()})
        for r in range(segments)
    )
    meta = {"kind": kind, "snr": snr, "noise_sd": noise, "sparsity": sparsity, "changed_coords": changed}
    return GenSpec(segs, post_transform=post_transform, seed=seed, meta=meta)


# ---------------------------------------------------------------------------
# named presets


def _d1(seed, dim=10, seg_len=500, sym_kl=0.5, **_):
    rng = np.random.default_rng([int(seed), 0xD1])
    base = DirichletParams(rng.uniform(1.0, 5.0, size=dim))
    other = find_dirichlet_pair(base, sym_kl, tol=1e-3)
    if rng.random() < 0.5:
        base, other = other, base
    segs = (
        SegmentSpec(seg_len, "dirichlet", {"alpha": base.tolist()}),
        SegmentSpec(seg_len, "dirichlet", {"alpha": other.tolist()}),
    )
    return GenSpec(segs, seed=seed, meta={"preset": "d1", "sym_kl": symmetric_kl(base, other)})


def _d2(seed, dim=10, seg_len=500, **_):
    rng = np.random.default_rng([int(seed), 0xD2])
    comps = rng.uniform(1.0, 10.0, size=(len(MIXTURE_WEIGHTS), dim))
    u = np.where(np.arange(dim) % 2 == 0, 1.0, -1.0)
    perturbed = comps * np.exp(MIXTURE_PERTURBATION * u)
    segs = (
        SegmentSpec(seg_len, "dirichlet_mixture", {"components": comps.tolist(), "weights": list(MIXTURE_WEIGHTS)}),
        SegmentSpec(seg_len, "dirichlet_mixture", {"components": perturbed.tolist(), "weights": list(MIXTURE_WEIGHTS)}),
    )
    return GenSpec(segs, seed=seed, meta={"preset": "d2"})


def _gauss(post, kind_default):
    def build(seed, dim=10, seg_len=500, change=None, snr="high", sparsity=1.0, segments=2, **_):
        kind = {"mean": "mean_change", "var": "var_change"}[change or kind_default]
        spec = gaussian_preset(kind, snr, dim, sparsity, segments, seg_len, seed, post_transform=post)
        return spec

    return build


def _sparse(kind):
    def build(seed, dim=10, seg_len=300, snr="high", sparsity=0.5, segments=4, **_):
        return gaussian_preset(kind, snr, dim, sparsity, segments, seg_len, seed, post_transform="l1_normalize")

    return build


PRESETS = {
    "d1": _d1,
    "d2": _d2,
    "d3": _gauss("l1_normalize", "mean"),
    "d3-mean": _gauss("l1_normalize", "mean"),
    "d3-var": _gauss("l1_normalize", "var"),
    "d4": _gauss("expit", "mean"),
    "d4-mean": _gauss("expit", "mean"),
    "d4-var": _gauss("expit", "var"),
    "g1": _gauss("none", "mean"),
    "g1-mean": _gauss("none", "mean"),
    "g1-var": _gauss("none", "var"),
    "sparse-mean": _sparse("mean_change"),
    "sparse-var": _sparse("var_change"),
}


def preset(name: str, seed: int = 0, **kwargs) -> GenSpec:
    """Build a named experiment preset.

    Names: ``d1`` (Dirichlet pair at a target symmetric KL), ``d2``
    (three-component Dirichlet mixtures), ``d3``/``d4`` (Gaussian mapped by
    l1 normalization / expit), ``g1`` (raw Gaussian), each optionally suffixed
    ``-mean`` or ``-var``, and ``sparse-mean``/``sparse-var`` (four segments
    of 300, l1-normalized). ``None``-valued keyword arguments are ignored.
    """
    try:
        builder = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}") from None
    kwargs = {k: v for k, v in kwargs.items() if v is not None}
    return builder(seed, **kwargs)
