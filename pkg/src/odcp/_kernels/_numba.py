"""Compiled kernels: scalar special functions and the batched Dirichlet fit.

Every function here mirrors one in ``_numpy.py``; the two must agree to
rounding.  Inputs are assumed validated by the public wrappers.
"""

import math

import numpy as np
from numba import njit

from ._common import (
    ALPHA_MAX,
    ALPHA_MIN,
    EULER_GAMMA,
    FLAG_CLAMPED,
    FLAG_NONCONVERGED,
    MAX_HALVINGS,
    METHOD_NEWTON,
)

BACKEND = "numba"

_jit = njit(cache=True, nogil=True)


@_jit
def _digamma(x):
    r = 0.0
    while x < 6.0:
        r -= 1.0 / x
        x += 1.0
    f = 1.0 / (x * x)
    t = f * (
        -1.0 / 12
        + f
        * (
            1.0 / 120
            + f
            * (
                -1.0 / 252
                + f * (1.0 / 240 + f * (-1.0 / 132 + f * (691.0 / 32760 + f * (-1.0 / 12))))
            )
        )
    )
    return r + math.log(x) - 0.5 / x + t


@_jit
def _trigamma(x):
    r = 0.0
    while x < 6.0:
        r += 1.0 / (x * x)
        x += 1.0
    f = 1.0 / (x * x)
    t = (
        1.0 / x
        + 0.5 * f
        + (f / x)
        * (
            1.0 / 6
            + f
            * (
                -1.0 / 30
                + f
                * (
                    1.0 / 42
                    + f * (-1.0 / 30 + f * (5.0 / 66 + f * (-691.0 / 2730 + f * (7.0 / 6))))
                )
            )
        )
    )
    return r + t


@_jit
def _inv_digamma(y):
    if y >= -2.22:
        x = math.exp(y) + 0.5
    else:
        x = -1.0 / (y + EULER_GAMMA)
    for _ in range(5):
        x -= (_digamma(x) - y) / _trigamma(x)
    return x


@_jit
def digamma(x):
    out = np.empty(x.shape[0])
    for i in range(x.shape[0]):
        out[i] = _digamma(x[i])
    return out


@_jit
def trigamma(x):
    out = np.empty(x.shape[0])
    for i in range(x.shape[0]):
        out[i] = _trigamma(x[i])
    return out


@_jit
def inv_digamma(y):
    out = np.empty(y.shape[0])
    for i in range(y.shape[0]):
        out[i] = _inv_digamma(y[i])
    return out


@_jit
def log_gamma(x):
    out = np.empty(x.shape[0])
    for i in range(x.shape[0]):
        out[i] = math.lgamma(x[i])
    return out


@_jit
def _moment_init(mean, mean_sq1, alpha):
    m1 = mean[0]
    v1 = mean_sq1 - m1 * m1
    s = 1.0
    if v1 > 0.0:
        s = (m1 - m1 * m1) / v1 - 1.0
        if not s > 0.0:
            s = 1.0
    for i in range(alpha.shape[0]):
        a = mean[i] * s
        if a < ALPHA_MIN:
            a = ALPHA_MIN
        elif a > ALPHA_MAX:
            a = ALPHA_MAX
        alpha[i] = a


@_jit
def _residual(alpha, mean_log):
    s = 0.0
    for i in range(alpha.shape[0]):
        s += alpha[i]
    psi_s = _digamma(s)
    worst = 0.0
    for i in range(alpha.shape[0]):
        r = abs(_digamma(alpha[i]) - psi_s - mean_log[i])
        if r > worst:
            worst = r
    return worst


@_jit
def _objective(alpha, mean_log):
    s = 0.0
    acc = 0.0
    for i in range(alpha.shape[0]):
        s += alpha[i]
        acc += (alpha[i] - 1.0) * mean_log[i] - math.lgamma(alpha[i])
    return acc + math.lgamma(s)


@_jit
def _fit_one(mean_log, mean, mean_sq1, tol, max_iter, method, alpha, work):
    """Fit one Dirichlet in place; returns (flags, iterations)."""
    k = alpha.shape[0]
    _moment_init(mean, mean_sq1, alpha)
    flags = 0
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        s = 0.0
        for i in range(k):
            s += alpha[i]
        psi_s = _digamma(s)
        use_fixed = True
        if method == METHOD_NEWTON:
            # Hessian is diag(-trigamma(a)) + trigamma(s) * 11^T; solve via
            # Sherman-Morrison in O(k).
            sum_gq = 0.0
            sum_1q = 0.0
            for i in range(k):
                q = -_trigamma(alpha[i])
                g = psi_s - _digamma(alpha[i]) + mean_log[i]
                work[i] = g
                work[k + i] = q
                sum_gq += g / q
                sum_1q += 1.0 / q
            b = sum_gq / (1.0 / _trigamma(s) + sum_1q)
            for i in range(k):
                work[k + i] = (work[i] - b) / work[k + i]
            # the objective is concave, so halving the Newton step until it
            # stays positive and does not lose ground always terminates
            f0 = _objective(alpha, mean_log)
            step = 1.0
            for _ in range(MAX_HALVINGS):
                ok = True
                for i in range(k):
                    cand = alpha[i] - step * work[k + i]
                    if not cand > 0.0:
                        ok = False
                        break
                    work[2 * k + i] = cand
                if ok and _objective(work[2 * k :], mean_log) >= f0:
                    use_fixed = False
                    break
                step *= 0.5
        if use_fixed:
            for i in range(k):
                work[2 * k + i] = _inv_digamma(psi_s + mean_log[i])

        top = 0.0
        for i in range(k):
            if work[2 * k + i] > top:
                top = work[2 * k + i]
        if top > ALPHA_MAX:
            # precision diverging (near-constant data): the MLE mean tends to
            # the normalized geometric mean, so use it with the scale capped
            top_log = mean_log[0]
            for i in range(k):
                if mean_log[i] > top_log:
                    top_log = mean_log[i]
            for i in range(k):
                a = ALPHA_MAX * math.exp(mean_log[i] - top_log)
                alpha[i] = a if a > ALPHA_MIN else ALPHA_MIN
            flags |= FLAG_CLAMPED
            converged = True
            break

        delta = 0.0
        for i in range(k):
            new = work[2 * k + i]
            if new < ALPHA_MIN:
                new = ALPHA_MIN
                flags |= FLAG_CLAMPED
            d = abs(new - alpha[i]) / alpha[i]
            if d > delta:
                delta = d
            alpha[i] = new
        if delta <= tol:
            converged = True
            break
    if not converged and not flags & FLAG_CLAMPED:
        if _residual(alpha, mean_log) > 100.0 * tol:
            flags |= FLAG_NONCONVERGED
    return flags, it


@_jit
def fit_batch(mean_log, mean, mean_sq1, tol, max_iter, method):
    """Fit one Dirichlet per row of the sufficient-statistic arrays."""
    nfit, k = mean_log.shape
    alpha = np.empty((nfit, k))
    flags = np.zeros(nfit, dtype=np.int64)
    iters = np.zeros(nfit, dtype=np.int64)
    work = np.empty(3 * k)
    for f in range(nfit):
        fl, it = _fit_one(
            mean_log[f], mean[f], mean_sq1[f], tol, max_iter, method, alpha[f], work
        )
        flags[f] = fl
        iters[f] = it
    return alpha, flags, iters


@_jit
def loglik_batch(n, sum_log, alpha):
    """Dirichlet log-likelihood of each row's data from its sufficient statistics."""
    nfit, k = alpha.shape
    out = np.empty(nfit)
    for f in range(nfit):
        s = 0.0
        acc = 0.0
        for i in range(k):
            a = alpha[f, i]
            s += a
            acc += (a - 1.0) * sum_log[f, i] - n[f] * math.lgamma(a)
        out[f] = acc + n[f] * math.lgamma(s)
    return out
