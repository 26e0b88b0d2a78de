"""Pure-numpy kernels, vectorized across fits instead of looping.

Same contracts as ``_numba.py``.  Iterations run on the still-active rows
only, so every row follows exactly the sequence of updates the compiled
path would apply to it.
"""

import numpy as np
from scipy.special import gammaln

from ._common import (
    ALPHA_MAX,
    ALPHA_MIN,
    EULER_GAMMA,
    FLAG_CLAMPED,
    FLAG_NONCONVERGED,
    MAX_HALVINGS,
    METHOD_NEWTON,
)

BACKEND = "numpy"

_DIGAMMA_SERIES = (-1.0 / 12, 1.0 / 120, -1.0 / 252, 1.0 / 240, -1.0 / 132, 691.0 / 32760, -1.0 / 12)
_TRIGAMMA_SERIES = (1.0 / 6, -1.0 / 30, 1.0 / 42, -1.0 / 30, 5.0 / 66, -691.0 / 2730, 7.0 / 6)


def _horner(f, coeffs):
    acc = np.full_like(f, coeffs[-1])
    for c in coeffs[-2::-1]:
        acc = c + f * acc
    return acc


def _shift_up(x, term):
    x = np.array(x, dtype=float, copy=True)
    r = np.zeros_like(x)
    small = x < 6.0
    while small.any():
        r[small] += term(x[small])
        x[small] += 1.0
        small = x < 6.0
    return x, r


def digamma(x):
    x, r = _shift_up(x, lambda v: -1.0 / v)
    f = 1.0 / (x * x)
    return r + np.log(x) - 0.5 / x + f * _horner(f, _DIGAMMA_SERIES)


def trigamma(x):
    x, r = _shift_up(x, lambda v: 1.0 / (v * v))
    f = 1.0 / (x * x)
    return r + 1.0 / x + 0.5 * f + (f / x) * _horner(f, _TRIGAMMA_SERIES)


def inv_digamma(y):
    y = np.asarray(y, dtype=float)
    with np.errstate(over="ignore", divide="ignore"):
        x = np.where(y >= -2.22, np.exp(np.minimum(y, 700.0)) + 0.5, -1.0 / (y + EULER_GAMMA))
    for _ in range(5):
        x = x - (digamma(x) - y) / trigamma(x)
    return x


def log_gamma(x):
    return gammaln(np.asarray(x, dtype=float))


def _moment_init(mean, mean_sq1):
    m1 = mean[:, 0]
    v1 = mean_sq1 - m1 * m1
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (m1 - m1 * m1) / v1 - 1.0
    s = np.where((v1 > 0.0) & (s > 0.0), s, 1.0)
    return np.clip(mean * s[:, None], ALPHA_MIN, ALPHA_MAX)


def _residual(alpha, mean_log):
    psi_s = digamma(alpha.sum(axis=1))
    return np.abs(digamma(alpha) - psi_s[:, None] - mean_log).max(axis=1)


def _objective(alpha, mean_log):
    return ((alpha - 1.0) * mean_log - gammaln(alpha)).sum(axis=1) + gammaln(alpha.sum(axis=1))


def _backtrack(alpha, direction, mean_log):
    """Halve each row's Newton step until it stays positive and does not
    lose objective; rows that never qualify come back as NaN."""
    out = np.full_like(alpha, np.nan)
    f0 = _objective(alpha, mean_log)
    pending = np.arange(alpha.shape[0])
    step = 1.0
    for _ in range(MAX_HALVINGS):
        if pending.size == 0:
            break
        cand = alpha[pending] - step * direction[pending]
        ok = (cand > 0.0).all(axis=1)
        with np.errstate(invalid="ignore"):
            f1 = _objective(np.where(ok[:, None], cand, 1.0), mean_log[pending])
        ok &= f1 >= f0[pending]
        out[pending[ok]] = cand[ok]
        pending = pending[~ok]
        step *= 0.5
    return out


def fit_batch(mean_log, mean, mean_sq1, tol, max_iter, method):
    nfit, k = mean_log.shape
    alpha = _moment_init(mean, mean_sq1)
    flags = np.zeros(nfit, dtype=np.int64)
    iters = np.zeros(nfit, dtype=np.int64)
    active = np.arange(nfit)
    converged = np.zeros(nfit, dtype=bool)

    for _ in range(max_iter):
        if active.size == 0:
            break
        a = alpha[active]
        ml = mean_log[active]
        iters[active] += 1
        s = a.sum(axis=1)
        psi_s = digamma(s)
        fp_target = psi_s[:, None] + ml
        if method == METHOD_NEWTON:
            q = -trigamma(a)
            g = psi_s[:, None] - digamma(a) + ml
            b = (g / q).sum(axis=1) / (1.0 / trigamma(s) + (1.0 / q).sum(axis=1))
            direction = (g - b[:, None]) / q
            new = _backtrack(a, direction, ml)
            bad = np.isnan(new[:, 0])
            if bad.any():
                new[bad] = inv_digamma(fp_target[bad])
        else:
            new = inv_digamma(fp_target)

        top = new.max(axis=1)
        capped = top > ALPHA_MAX
        if capped.any():
            ml_cap = ml[capped]
            scaled = ALPHA_MAX * np.exp(ml_cap - ml_cap.max(axis=1, keepdims=True))
            rows = active[capped]
            alpha[rows] = np.maximum(scaled, ALPHA_MIN)
            flags[rows] |= FLAG_CLAMPED
            converged[rows] = True

        keep = ~capped
        new = new[keep]
        a = a[keep]
        rows = active[keep]
        low = new < ALPHA_MIN
        new = np.where(low, ALPHA_MIN, new)
        flags[rows[low.any(axis=1)]] |= FLAG_CLAMPED
        delta = (np.abs(new - a) / a).max(axis=1)
        alpha[rows] = new
        done = delta <= tol
        converged[rows[done]] = True
        active = rows[~done]

    unfinished = np.flatnonzero(~converged & ((flags & FLAG_CLAMPED) == 0))
    if unfinished.size:
        res = _residual(alpha[unfinished], mean_log[unfinished])
        flags[unfinished[res > 100.0 * tol]] |= FLAG_NONCONVERGED
    return alpha, flags, iters


def loglik_batch(n, sum_log, alpha):
    s = alpha.sum(axis=1)
    return ((alpha - 1.0) * sum_log).sum(axis=1) - n * (gammaln(alpha).sum(axis=1) - gammaln(s))
