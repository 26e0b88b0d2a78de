"""Single change-point scan, resampling significance test and the active-window loop.

A change point at index ``g`` means samples ``[.., g)`` and ``[g, ..)`` come
from different Dirichlet distributions.  ``detect`` processes a whole series;
``OnlineDetector`` consumes it incrementally and produces the same reports for
any chunking.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import _kernels
from ._kernels import active as _k
from .dirichlet import MLE_MAX_ITER, MLE_TOL, DirichletParams
from .errors import (
    DimensionError,
    InsufficientDataError,
    NonConvergenceError,
    SignificanceFailureError,
)
from .simplex import DEFAULT_EPS, Series, as_matrix, clamp_rows
from .transform import Standardization, fit_standardization, to_compositional

__all__ = [
    "DetectorConfig",
    "ScanResult",
    "SignificanceResult",
    "ChangePointReport",
    "default_min_segment",
    "scan_window",
    "significance",
    "detect",
    "OnlineDetector",
    "GeneralOnlineDetector",
    "feed",
]

_log = logging.getLogger(__name__)

TEST_METHODS = ("subset", "permutation", "single")
# replicates evaluated between early-stopping checks; fixed so that results
# never depend on the thread count
_CHUNK = 16
# two profile values count as tied when they differ by less than this many
# units of the magnitude of the terms summed into them (their rounding noise)
TIE_RTOL = 1e-12

_SALT = {"subset": 0, "permutation": 1, "single": 2}


def default_min_segment(k: int) -> int:
    """Smallest default segment for ``k``-component compositions."""
    return max(10, k + 1)


@dataclass(frozen=True)
class DetectorConfig:
    """Tunables of the detector.

    ``min_segment=None`` resolves to :func:`default_min_segment` once the
    data dimension is known.  ``test`` picks the significance procedure:

    - ``"subset"`` (default): each replicate draws a uniformly random
      ordering; its left partitions are the nested random subsets formed by
      the first ``tau`` elements and the replicate statistic is the maximum
      over ``tau``, computed from cumulative sums.
    - ``"permutation"``: permutes the window and reruns :func:`scan_window`.
      Same null distribution through an independent code path; kept as a
      reference.
    - ``"single"``: one random subset of uniformly random size per replicate,
      without maximizing over ``tau``. Cheap but anti-conservative because
      the observed statistic is a maximum. Only for comparison.

    With ``early_stop`` the replicate loop ends as soon as the count of
    replicates reaching the observed statistic makes significance
    impossible. Accept/reject decisions, and every emitted report, are
    unaffected.
    """

    initial_window: int = 200
    batch: int = 50
    replicates: int = 199
    alpha: float = 0.05
    min_segment: int | None = None
    mle_tol: float = MLE_TOL
    mle_max_iter: int = MLE_MAX_ITER
    mle_method: str = "newton"
    eps: float = DEFAULT_EPS
    seed: int = 0
    test: str = "subset"
    early_stop: bool = True
    threads: int = 1

    def resolved(self, k: int) -> "DetectorConfig":
        """Fill in dimension-dependent defaults and validate."""
        cfg = self if self.min_segment is not None else replace(self, min_segment=default_min_segment(k))
        cfg.validate(k)
        return cfg

    def validate(self, k: int | None = None) -> None:
        m = self.min_segment
        if m is not None:
            floor = 2 if k is None else k + 1
            if m < floor:
                raise ValueError(f"min_segment={m} is below the floor {floor} for {k}-component data")
            if self.initial_window < 2 * m:
                raise ValueError(f"initial_window={self.initial_window} must be >= 2*min_segment={2 * m}")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if self.replicates < 19:
            raise ValueError("replicates must be >= 19")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.test not in TEST_METHODS:
            raise ValueError(f"unknown test {self.test!r}; choose from {TEST_METHODS}")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ScanResult:
    """Outcome of :func:`scan_window`.

    ``ll_profile[j]`` is the two-segment log-likelihood for split
    ``taus[j]``; skipped splits hold NaN and are listed in ``skipped``.
    """

    tau_star: int
    z_star: float
    ll_profile: np.ndarray
    taus: np.ndarray
    ll0: float
    left_params: DirichletParams
    right_params: DirichletParams
    skipped: list = field(default_factory=list)


@dataclass
class SignificanceResult:
    p_value: float
    exceed_count: int
    n_replicates: int
    significant: bool
    early_stopped: bool = False
    failures: int = 0


@dataclass
class ChangePointReport:
    global_index: int
    z_star: float
    p_value: float
    window_span: tuple
    left_params: DirichletParams
    right_params: DirichletParams

    def to_dict(self) -> dict:
        return {
            "global_index": int(self.global_index),
            "z_star": float(self.z_star),
            "p_value": float(self.p_value),
            "window_span": [int(v) for v in self.window_span],
            "left_alpha": self.left_params.tolist(),
            "right_alpha": self.right_params.tolist(),
        }


# ---------------------------------------------------------------------------
# batched fitting


class _Fitter:
    """Runs the fit kernel over stacked sufficient statistics."""

    def __init__(self, cfg: DetectorConfig):
        self.tol = float(cfg.mle_tol)
        self.max_iter = int(cfg.mle_max_iter)
        self.method = _kernels.METHOD_NEWTON if cfg.mle_method == "newton" else _kernels.METHOD_FIXED_POINT
        if cfg.mle_method not in ("newton", "fixed_point"):
            raise ValueError(f"unknown MLE method {cfg.mle_method!r}")
        self.threads = cfg.threads

    def _run(self, n, sum_log, sum_x, sum_sq1):
        mean_log = sum_log / n[:, None]
        mean = sum_x / n[:, None]
        alpha, flags, _ = _k.fit_batch(mean_log, mean, sum_sq1 / n, self.tol, self.max_iter, self.method)
        ll = _k.loglik_batch(n, sum_log, alpha)
        ok = (flags & _kernels.FLAG_NONCONVERGED) == 0
        return alpha, ll, ok

    def __call__(self, n, sum_log, sum_x, sum_sq1):
        n = np.ascontiguousarray(n, dtype=float)
        sum_log = np.ascontiguousarray(sum_log)
        sum_x = np.ascontiguousarray(sum_x)
        sum_sq1 = np.ascontiguousarray(sum_sq1)
        total = n.shape[0]
        if self.threads == 1 or total < 64:
            return self._run(n, sum_log, sum_x, sum_sq1)
        bounds = np.linspace(0, total, self.threads + 1).astype(int)
        parts = [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            results = list(pool.map(lambda s: self._run(n[s], sum_log[s], sum_x[s], sum_sq1[s]), parts))
        return tuple(np.concatenate(r) for r in zip(*results))


def _prefix_stats(x):
    """Cumulative sums along the sample axis with a leading zero row.

    ``x`` has shape ``(..., t, K)``; returns log, value and squared-first-
    component prefix sums with shapes ``(..., t+1, K)``, ``(..., t+1, K)``,
    ``(..., t+1)``.
    """
    pad = [(0, 0)] * (x.ndim - 2) + [(1, 0), (0, 0)]
    c_log = np.pad(np.cumsum(np.log(x), axis=-2), pad)
    c_x = np.pad(np.cumsum(x, axis=-2), pad)
    c_sq = np.pad(np.cumsum(x[..., 0] ** 2, axis=-1), pad[:-1])
    return c_log, c_x, c_sq


def _split_profiles(fitter, c_log, c_x, c_sq, taus, t):
    """Two-segment log-likelihood at each split for stacked prefix sums.

    Leading axes of the prefix arrays index independent orderings of the
    same window.  Returns ``(ll, ok, alpha_left, alpha_right)`` with the
    split axis last (alphas have an extra trailing component axis).
    """
    lead = c_log.shape[:-2]
    k = c_log.shape[-1]
    nt = taus.size
    left_log = c_log[..., taus, :]
    left_x = c_x[..., taus, :]
    left_sq = c_sq[..., taus]
    right_log = c_log[..., t : t + 1, :] - left_log
    right_x = c_x[..., t : t + 1, :] - left_x
    right_sq = c_sq[..., t : t + 1] - left_sq
    n_left = np.broadcast_to(taus.astype(float), lead + (nt,))
    n_right = t - n_left

    n = np.concatenate([n_left.reshape(-1), n_right.reshape(-1)])
    s_log = np.concatenate([left_log.reshape(-1, k), right_log.reshape(-1, k)])
    s_x = np.concatenate([left_x.reshape(-1, k), right_x.reshape(-1, k)])
    s_sq = np.concatenate([left_sq.reshape(-1), right_sq.reshape(-1)])
    alpha, ll, ok = fitter(n, s_log, s_x, s_sq)
    half = n_left.size
    ll2 = (ll[:half] + ll[half:]).reshape(lead + (nt,))
    ok2 = (ok[:half] & ok[half:]).reshape(lead + (nt,))
    return ll2, ok2, alpha[:half].reshape(lead + (nt, k)), alpha[half:].reshape(lead + (nt, k))


def _ll_scale(n, alpha, sum_log):
    """Size of the terms summed into each log-likelihood.

    Near-degenerate fits have huge ``lgamma`` terms that cancel, so the
    rounding error of the result follows this scale, not the result itself.
    """
    k = alpha.shape[-1]
    lg = np.abs(_k.log_gamma(np.ascontiguousarray(alpha.reshape(-1)))).reshape(-1, k).sum(axis=1)
    lg += np.abs(_k.log_gamma(np.ascontiguousarray(alpha.sum(axis=1))))
    return n * lg + np.abs((alpha - 1.0) * sum_log).sum(axis=1)


def _argmax_first(values, scale=1.0):
    """Index of the first entry tied with the maximum (NaNs ignored)."""
    best = np.nanmax(values)
    thresh = best - TIE_RTOL * max(1.0, abs(best), scale)
    return int(np.flatnonzero(values >= thresh)[0]), best


def _whole_fit(fitter, x):
    c_log, c_x, c_sq = _prefix_stats(x)
    t = x.shape[0]
    alpha, ll, ok = fitter(np.array([float(t)]), c_log[-1:], c_x[-1:], c_sq[-1:])
    if not ok[0]:
        raise NonConvergenceError("single-segment MLE did not converge", alpha=alpha[0])
    return alpha[0], float(ll[0])


def _prepare_window(window, cfg):
    x = as_matrix(window)
    if np.any(x <= 0):
        x = clamp_rows(x, cfg.eps)
    cfg = cfg.resolved(x.shape[1])
    t = x.shape[0]
    if t < 2 * cfg.min_segment:
        raise InsufficientDataError(f"window of {t} samples is shorter than 2*min_segment={2 * cfg.min_segment}")
    return x, cfg


def scan_window(window, cfg: DetectorConfig | None = None) -> ScanResult:
    """Most likely single change point inside ``window``.

    Every split ``tau`` in ``[min_segment, t - min_segment]`` is scored by the
    sum of the left and right maximized log-likelihoods; ``z_star`` is the
    best score minus the single-segment log-likelihood. Ties go to the
    smallest ``tau``. Splits whose fit fails to converge are skipped.
    """
    x, cfg = _prepare_window(window, cfg or DetectorConfig())
    return _scan(x, cfg, _Fitter(cfg))


def _scan(x, cfg, fitter, ll0=None, alpha0=None):
    t = x.shape[0]
    m = cfg.min_segment
    taus = np.arange(m, t - m + 1)
    c_log, c_x, c_sq = _prefix_stats(x)
    ll, ok, a_left, a_right = _split_profiles(fitter, c_log, c_x, c_sq, taus, t)
    if ll0 is None:
        alpha0, ll0 = _whole_fit(fitter, x)
    skipped = taus[~ok].tolist()
    if skipped:
        _log.warning("skipping %d split(s) whose MLE did not converge", len(skipped))
    if not ok.any():
        raise NonConvergenceError("no split of the window produced a converged fit")
    profile = np.where(ok, ll, np.nan)
    left_log = c_log[taus]
    scale = _ll_scale(taus.astype(float), a_left, left_log) + _ll_scale(
        (t - taus).astype(float), a_right, c_log[t] - left_log
    )
    j, best = _argmax_first(profile, float(np.max(scale[ok])))
    return ScanResult(
        tau_star=int(taus[j]),
        z_star=max(float(best) - ll0, 0.0),
        ll_profile=profile,
        taus=taus,
        ll0=ll0,
        left_params=DirichletParams(a_left[j]),
        right_params=DirichletParams(a_right[j]),
        skipped=skipped,
    )


def _replicate_rng(cfg, key, i, attempt):
    return np.random.default_rng([cfg.seed, _SALT[cfg.test], *key, i, attempt])


def _subset_stats(x, fitter, rngs, m, ll0):
    """Replicate statistics for nested random subsets (one ordering each)."""
    t = x.shape[0]
    taus = np.arange(m, t - m + 1)
    perms = np.stack([r.permutation(t) for r in rngs])
    c_log, c_x, c_sq = _prefix_stats(x[perms])
    ll, ok, _, _ = _split_profiles(fitter, c_log, c_x, c_sq, taus, t)
    z = np.where(ok, ll, -np.inf).max(axis=1) - ll0
    return np.where(ok.any(axis=1), z, np.nan)


def _single_stats(x, fitter, rngs, m, ll0):
    """Replicate statistics for one random subset of random size each."""
    t, k = x.shape
    logx = np.log(x)
    rows = []
    for r in rngs:
        size = int(r.integers(m, t - m + 1))
        mask = np.zeros(t, dtype=bool)
        mask[r.choice(t, size=size, replace=False)] = True
        rows.append(mask)
    masks = np.array(rows, dtype=float)
    inv = 1.0 - masks
    n = np.concatenate([masks.sum(axis=1), inv.sum(axis=1)])
    s_log = np.concatenate([masks @ logx, inv @ logx])
    s_x = np.concatenate([masks @ x, inv @ x])
    sq = x[:, 0] ** 2
    s_sq = np.concatenate([masks @ sq, inv @ sq])
    _, ll, ok = fitter(n, s_log, s_x, s_sq)
    c = len(rngs)
    z = ll[:c] + ll[c:] - ll0
    return np.where(ok[:c] & ok[c:], z, np.nan)


def _permutation_stats(x, cfg, fitter, rngs, ll0):
    out = []
    for r in rngs:
        xp = x[r.permutation(x.shape[0])]
        try:
            out.append(_scan(xp, cfg, fitter, ll0=ll0).z_star)
        except NonConvergenceError:
            out.append(np.nan)
    return np.array(out)


def significance(window, z_star: float, cfg: DetectorConfig | None = None, key=(0,), ll0: float | None = None) -> SignificanceResult:
    """Resampling p-value of ``z_star`` for ``window``.

    ``p = (1 + #{replicates >= z_star}) / (M + 1)``; the change is significant
    iff ``p <= alpha``. Replicate ``i`` draws from its own random stream
    seeded by ``(seed, test, *key, i, attempt)``, so results do not depend on
    evaluation order or thread count. A replicate whose fits fail is redrawn
    (at most ``3 * M`` redraws in total).
    """
    x, cfg = _prepare_window(window, cfg or DetectorConfig())
    fitter = _Fitter(cfg)
    if ll0 is None:
        _, ll0 = _whole_fit(fitter, x)
    return _significance(x, z_star, cfg, fitter, tuple(int(v) for v in key), ll0)


def _significance(x, z_star, cfg, fitter, key, ll0):
    M = cfg.replicates
    m = cfg.min_segment
    # smallest exceedance count for which p > alpha
    stop_at = int(np.floor(cfg.alpha * (M + 1) + 1e-9))
    attempts = np.zeros(M, dtype=int)
    count = 0
    done = 0
    failures = 0
    early = False
    while done < M:
        idx = np.arange(done, min(done + _CHUNK, M))
        pending = idx
        while pending.size:
            rngs = [_replicate_rng(cfg, key, int(i), int(attempts[i])) for i in pending]
            if cfg.test == "subset":
                z = _subset_stats(x, fitter, rngs, m, ll0)
            elif cfg.test == "single":
                z = _single_stats(x, fitter, rngs, m, ll0)
            else:
                z = _permutation_stats(x, cfg, fitter, rngs, ll0)
            bad = np.isnan(z)
            count += int(np.sum(z[~bad] >= z_star))
            failures += int(bad.sum())
            if failures > 3 * M:
                raise SignificanceFailureError(f"{failures} replicate failures exceed the retry budget of {3 * M}")
            attempts[pending[bad]] += 1
            pending = pending[bad]
        done = int(idx[-1]) + 1
        if cfg.early_stop and count >= stop_at and done < M:
            early = True
            break
    p = (1 + count) / (M + 1)
    significant = (1 + count) <= cfg.alpha * (M + 1) + 1e-9
    return SignificanceResult(
        p_value=p,
        exceed_count=count,
        n_replicates=done,
        significant=bool(significant and not early),
        early_stopped=early,
        failures=failures,
    )


# ---------------------------------------------------------------------------
# multiple change points


class _WindowTester:
    """Scan plus significance for one window; shared by batch and online paths."""

    def __init__(self, cfg: DetectorConfig):
        self.cfg = cfg
        self.fitter = _Fitter(cfg)
        self.tests = 0
        self.rejections = 0

    def __call__(self, x, start, end):
        """Test global window ``[start, end)`` held in ``x``; return a report or None."""
        cfg = self.cfg
        try:
            alpha0, ll0 = _whole_fit(self.fitter, x)
            scan = _scan(x, cfg, self.fitter, ll0=ll0, alpha0=alpha0)
        except NonConvergenceError as exc:
            _log.warning("window [%d, %d) not testable: %s", start, end, exc)
            return None
        sig = _significance(x, scan.z_star, cfg, self.fitter, (start, end), ll0)
        self.tests += 1
        _log.debug("window [%d, %d): tau*=%d z*=%.4f p=%.4f", start, end, start + scan.tau_star, scan.z_star, sig.p_value)
        if not sig.significant:
            return None
        self.rejections += 1
        return ChangePointReport(
            global_index=start + scan.tau_star,
            z_star=scan.z_star,
            p_value=sig.p_value,
            window_span=(start, end),
            left_params=scan.left_params,
            right_params=scan.right_params,
        )


def _prepare_series(series, cfg):
    if isinstance(series, Series):
        if series.kind != "compositional":
            raise ValueError("detect expects a compositional series; map general data with odcp.transform first")
        x = series.samples
    else:
        x = as_matrix(series)
    x = clamp_rows(x, cfg.eps)
    return x, cfg.resolved(x.shape[1])


def detect(series, cfg: DetectorConfig | None = None, stats: dict | None = None) -> list:
    """All significant change points of a compositional series.

    The active window starts as the first ``initial_window`` samples. A
    significant change at ``g`` restarts the window at ``[g, g + I)``;
    otherwise the next ``batch`` samples are appended. When the series ends
    mid-window, the remaining samples are tested once if there are at least
    ``2 * min_segment`` of them and they extend past the last tested window.

    ``stats``, if given, receives ``tests`` and ``rejections`` counters.
    """
    x, cfg = _prepare_series(series, cfg or DetectorConfig())
    T = x.shape[0]
    m, I, b = cfg.min_segment, cfg.initial_window, cfg.batch
    if T < 2 * m:
        raise InsufficientDataError(f"series of {T} samples is shorter than 2*min_segment={2 * m}")
    tester = _WindowTester(cfg)
    reports = []
    start, end, tested_end = 0, I, 0
    while True:
        stop = min(end, T)
        if end > T and (T - start < 2 * m or T <= tested_end):
            break
        rep = tester(x[start:stop], start, stop)
        tested_end = stop
        if rep is not None:
            reports.append(rep)
            start = rep.global_index
            end, tested_end = start + I, start
        elif end >= T:
            break
        else:
            end += b
    if stats is not None:
        stats.update(tests=tester.tests, rejections=tester.rejections)
    return reports


class OnlineDetector:
    """Incremental detector: same reports as :func:`detect` for any chunking.

    Call :meth:`feed` with new samples as they arrive and :meth:`finish` once
    the stream ends, which tests the trailing partial window exactly as
    :func:`detect` does.  Only samples from the current window start onward
    are retained.
    """

    def __init__(self, cfg: DetectorConfig | None = None):
        self.cfg = cfg or DetectorConfig()
        self._resolved = None
        self._tester = None
        self._buf = None  # samples [start, start + len(buf))
        self.start = 0
        self.end = None
        self.tested_end = 0
        self.n_seen = 0
        self.finished = False

    @property
    def tests(self) -> int:
        return 0 if self._tester is None else self._tester.tests

    @property
    def rejections(self) -> int:
        return 0 if self._tester is None else self._tester.rejections

    @property
    def buffered(self) -> int:
        return 0 if self._buf is None else self._buf.shape[0]

    def _init(self, k):
        self._resolved = self.cfg.resolved(k)
        self._tester = _WindowTester(self._resolved)
        self._buf = np.empty((0, k))
        self.end = self._resolved.initial_window

    def _window(self, stop):
        return self._buf[: stop - self.start]

    def _on_report(self, rep):
        drop = rep.global_index - self.start
        self._buf = self._buf[drop:]
        self.start = rep.global_index
        self.end = self.start + self._resolved.initial_window
        self.tested_end = self.start

    def feed(self, batch) -> list:
        """Append samples; return reports completed by them."""
        if self.finished:
            raise RuntimeError("detector already finished")
        x = as_matrix(batch)
        if self._buf is None:
            self._init(x.shape[1])
        elif x.shape[1] != self._buf.shape[1]:
            raise DimensionError(f"batch has dimension {x.shape[1]}, detector expects {self._buf.shape[1]}")
        x = clamp_rows(x, self._resolved.eps)
        self._buf = np.concatenate([self._buf, x])
        self.n_seen += x.shape[0]
        reports = []
        while self.n_seen >= self.end:
            rep = self._tester(self._window(self.end), self.start, self.end)
            self.tested_end = self.end
            if rep is None:
                self.end += self._resolved.batch
            else:
                reports.append(rep)
                self._on_report(rep)
        return reports

    def finish(self) -> list:
        """Test the trailing partial window(s) at end of stream."""
        if self.finished or self._buf is None:
            self.finished = True
            return []
        m = self._resolved.min_segment
        reports = []
        T = self.n_seen
        while T - self.start >= 2 * m and T > self.tested_end:
            rep = self._tester(self._window(T), self.start, T)
            self.tested_end = T
            if rep is None:
                break
            reports.append(rep)
            self._on_report(rep)
        self.finished = True
        return reports


class GeneralOnlineDetector:
    """Streaming detection for real-valued (general) data.

    Samples are held back until ``initial_window`` of them have arrived.
    The standardization is fitted on those first samples and then frozen,
    so every sample passes through the same map to the simplex before it
    reaches an inner :class:`OnlineDetector`. Passing ``std`` skips the
    warm-up and uses that map from the first sample.

    Reports match :func:`detect` on the whole series mapped with the same
    standardization.
    """

    def __init__(self, cfg: DetectorConfig | None = None, std: Standardization | None = None):
        self.cfg = cfg or DetectorConfig()
        self.std = std
        self._inner = OnlineDetector(self.cfg)
        self._pending = []

    @property
    def detector(self) -> OnlineDetector:
        return self._inner

    def _forward(self, y) -> list:
        return self._inner.feed(to_compositional(y, self.std).samples)

    def feed(self, batch) -> list:
        y = as_matrix(batch)
        if self.std is not None:
            return self._forward(y)
        self._pending.append(y)
        held = np.concatenate(self._pending)
        if held.shape[0] < self.cfg.initial_window:
            self._pending = [held]
            return []
        self._pending = []
        self.std = fit_standardization(held[: self.cfg.initial_window])
        return self._forward(held)

    def finish(self) -> list:
        """Flush held samples (fitting on all of them if the stream was short) and finish."""
        reports = []
        if self._pending:
            held = np.concatenate(self._pending)
            self._pending = []
            if held.shape[0] >= 2:
                self.std = fit_standardization(held)
                reports = self._forward(held)
        return reports + self._inner.finish()


def feed(state: OnlineDetector | None, batch, cfg: DetectorConfig | None = None):
    """Functional wrapper: ``(state, batch) -> (state, reports)``.

    Pass ``state=None`` to start a new detector configured by ``cfg``.
    """
    if state is None:
        state = OnlineDetector(cfg)
    return state, state.feed(batch)
