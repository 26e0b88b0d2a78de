import math

import numpy as np
import pytest
import scipy.stats as ss
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from oracles import fd_loglik_gradient

from odcp.dirichlet import (
    DegenerateFitWarning,
    DirichletParams,
    SufficientStats,
    fit_mle,
    kl_dirichlet,
    log_beta,
    log_likelihood,
    log_pdf,
    moment_match_init,
    stationarity_residual,
    symmetric_kl,
)
from odcp.errors import DimensionError, EmptySegmentError, InsufficientDataError, InvalidSampleError


@pytest.mark.parametrize(
    "alpha, expected",
    [((1, 1), 0.0), ((2, 2), math.log(1 / 6)), ((0.5, 0.5), math.log(math.pi))],
)
def test_log_beta(alpha, expected):
    assert log_beta(alpha) == pytest.approx(expected, abs=1e-10)


@pytest.mark.parametrize(
    "x, alpha, expected",
    [
        ((0.2, 0.3, 0.5), (1, 1, 1), math.log(2)),
        ((0.2, 0.3, 0.5), (2, 1, 1), math.log(6 * 0.2)),
        ((0.5, 0.5), (2, 2), math.log(6 * 0.25)),
    ],
)
def test_log_pdf(x, alpha, expected):
    assert log_pdf(x, alpha) == pytest.approx(expected, abs=1e-12)


def test_log_pdf_matches_scipy(rng):
    for _ in range(20):
        a = rng.uniform(0.3, 20, 5)
        x = rng.dirichlet(a)
        assert log_pdf(x, a) == pytest.approx(ss.dirichlet.logpdf(x, a), rel=1e-10, abs=1e-10)


def test_log_pdf_dimension_mismatch():
    with pytest.raises(DimensionError):
        log_pdf((0.5, 0.5), (1, 1, 1))


def test_log_likelihood_examples(rng):
    x = [(0.2, 0.3, 0.5)] * 2
    assert log_likelihood(x, (1, 1, 1)) == pytest.approx(2 * math.log(2), abs=1e-12)
    assert log_likelihood(x[:1], (3, 2, 1)) == pytest.approx(log_pdf(x[0], (3, 2, 1)), abs=1e-12)
    y = rng.dirichlet(np.ones(4), 5)
    assert log_likelihood(y, (1, 1, 1, 1)) == pytest.approx(5 * math.log(6), abs=1e-12)


def test_log_likelihood_errors():
    with pytest.raises(EmptySegmentError):
        log_likelihood([], (1, 1))
    with pytest.raises(DimensionError):
        log_likelihood([(0.5, 0.5)], (1, 1, 1))


def test_log_likelihood_from_stats_matches_samples(rng):
    x = rng.dirichlet([2, 3, 4], 30)
    st_ = SufficientStats.from_samples(x)
    assert log_likelihood(st_, (1.5, 2, 5)) == pytest.approx(log_likelihood(x, (1.5, 2, 5)), rel=1e-13)


def test_sufficient_stats_are_additive(rng):
    x = rng.dirichlet([2, 3, 4], 30)
    a, b = SufficientStats.from_samples(x[:12]), SufficientStats.from_samples(x[12:])
    whole = SufficientStats.from_samples(x)
    np.testing.assert_allclose((a + b).sum_log, whole.sum_log, rtol=1e-13)
    np.testing.assert_allclose((whole - a).sum_log, b.sum_log, rtol=1e-12)
    assert (a + b).n == 30


@pytest.mark.parametrize("bad", [(1.0, 0.0), (1.0, -2.0), (1.0, np.nan), (3.0,)])
def test_params_validation(bad):
    with pytest.raises(InvalidSampleError):
        DirichletParams(bad)


# -- moment matching ---------------------------------------------------------


def test_moment_match_zero_variance_falls_back():
    a = moment_match_init([(0.5, 0.5)] * 4)
    np.testing.assert_allclose(a.alpha, [0.5, 0.5])


def test_moment_match_formula():
    sd = math.sqrt(0.01875)
    x = [(0.25 - sd, 0.75 + sd), (0.25 + sd, 0.75 - sd)]
    a = moment_match_init(x)
    np.testing.assert_allclose(a.alpha, [2.25, 6.75], rtol=1e-12)


def test_moment_match_large_sample(rng):
    a = moment_match_init(rng.dirichlet([2, 6], 5000)).alpha
    assert np.all(a / np.array([2, 6]) < 2) and np.all(a / np.array([2, 6]) > 0.5)


def test_moment_match_needs_two_samples():
    with pytest.raises(InsufficientDataError):
        moment_match_init([(0.3, 0.7)])


# -- MLE -----------------------------------------------------------------------


@pytest.mark.parametrize("method", ["newton", "fixed_point"])
def test_mle_large_sample_consistency(method):
    x = np.random.default_rng(42).dirichlet([5, 5], 10_000)
    a = fit_mle(x, method=method).alpha
    np.testing.assert_allclose(a, [5, 5], rtol=0.05)


def _grid_argmax(x):
    """Coordinate-free brute force: log grid, then successive local refinement."""
    logpdf = lambda a1, a2: ss.dirichlet.logpdf(x.T, [a1, a2]).sum()  # noqa: E731
    grid = np.geomspace(0.01, 200, 120)
    vals = np.array([[logpdf(a, b) for b in grid] for a in grid])
    i, j = np.unravel_index(np.argmax(vals), vals.shape)
    best = np.array([grid[i], grid[j]])
    span = grid[1] / grid[0]
    while span > 1 + 1e-4:
        cand = [best * np.array([span**u, span**v]) for u in np.linspace(-1, 1, 9) for v in np.linspace(-1, 1, 9)]
        best = max(cand, key=lambda c: logpdf(*c))
        span = span ** 0.25
    return best


def test_mle_matches_grid_search():
    x = np.array([(0.2, 0.8), (0.3, 0.7), (0.25, 0.75)])
    ref = _grid_argmax(x)
    got = fit_mle(x).alpha
    np.testing.assert_allclose(got, ref, rtol=1e-2)


def test_mle_agrees_across_methods(rng):
    for _ in range(10):
        x = rng.dirichlet(rng.uniform(0.5, 20, 6), 80)
        np.testing.assert_allclose(fit_mle(x).alpha, fit_mle(x, method="fixed_point").alpha, rtol=2e-5)


def test_mle_unknown_method():
    with pytest.raises(ValueError):
        fit_mle([(0.2, 0.8), (0.3, 0.7)], method="bfgs")


def test_mle_needs_two_samples():
    with pytest.raises(InsufficientDataError):
        fit_mle([(0.3, 0.7)])


def test_mle_stationarity_by_finite_differences(rng):
    for _ in range(50):
        k = int(rng.integers(2, 11))
        n = int(rng.integers(50, 400))
        x = rng.dirichlet(rng.uniform(0.3, 30, k), n)
        a = fit_mle(x).alpha
        assert np.max(np.abs(fd_loglik_gradient(x, a))) <= 1e-3
        assert stationarity_residual(a, x) <= 1e-6


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(2, 8), n=st.integers(5, 200))
def test_mle_dominates_perturbations_and_init(seed, k, n):
    rng = np.random.default_rng(seed)
    x = rng.dirichlet(rng.uniform(0.3, 30, k), n)
    a = fit_mle(x).alpha
    best = log_likelihood(x, a)
    slack = 1e-9 * (1 + abs(best))
    assert best >= log_likelihood(x, moment_match_init(x)) - slack
    for _ in range(20):
        assert best >= log_likelihood(x, a * np.exp(rng.uniform(-0.3, 0.3, k))) - slack


def test_mle_is_permutation_invariant(rng):
    x = rng.dirichlet([1.5, 4, 9, 0.7], 300)
    a = fit_mle(x).alpha
    for _ in range(5):
        b = fit_mle(x[rng.permutation(len(x))]).alpha
        np.testing.assert_array_equal(a, b)


def test_mle_degenerate_data_is_clamped_with_warning():
    x = np.tile([0.3, 0.3, 0.4], (20, 1))
    x[::2] += [1e-9, -1e-9, 0.0]
    with pytest.warns(DegenerateFitWarning):
        p = fit_mle(x)
    assert p.clamped
    assert p.alpha.max() <= 1e6 * (1 + 1e-12)
    np.testing.assert_allclose(p.mean, [0.3, 0.3, 0.4], rtol=1e-6)


# -- KL --------------------------------------------------------------------------


def test_kl_identity():
    assert kl_dirichlet((2, 3, 4), (2, 3, 4)) == 0.0
    assert symmetric_kl((1, 1), (1, 1)) == 0.0


def test_kl_monte_carlo():
    a, b = np.array([1.0, 1.0]), np.array([2.0, 2.0])
    x = np.random.default_rng(2024).dirichlet(a, 1_000_000)
    terms = ss.dirichlet.logpdf(x.T, a) - ss.dirichlet.logpdf(x.T, b)
    se = terms.std(ddof=1) / math.sqrt(terms.size)
    assert abs(kl_dirichlet(a, b) - terms.mean()) <= 3 * se


def test_kl_non_negative_and_positive_off_diagonal(rng):
    for _ in range(10_000):
        k = int(rng.integers(2, 8))
        a = np.exp(rng.uniform(-2, 4, k))
        b = np.exp(rng.uniform(-2, 4, k))
        kl = kl_dirichlet(a, b)
        assert kl >= 0.0
        if np.max(np.abs(a - b)) > 1e-3:
            assert kl > 0.0


def test_kl_dimension_mismatch():
    with pytest.raises(DimensionError):
        kl_dirichlet((1, 1), (1, 1, 1))


# -- normalization ---------------------------------------------------------------


def test_density_integrates_to_one_k2(rng):
    for _ in range(5):
        a = rng.uniform(0.5, 10, 2)
        val, _ = integrate.quad(lambda t: math.exp(log_pdf((t, 1 - t), a)), 0, 1, limit=200)
        assert val == pytest.approx(1.0, abs=1e-3)


def test_density_integrates_to_one_k3(rng):
    for _ in range(3):
        a = rng.uniform(0.5, 10, 3)
        val, _ = integrate.dblquad(
            lambda x2, x1: math.exp(log_pdf((x1, x2, max(1 - x1 - x2, 1e-300)), a)),
            0,
            1,
            0,
            lambda x1: 1 - x1,
            epsabs=1e-6,
        )
        assert val == pytest.approx(1.0, abs=1e-3)
