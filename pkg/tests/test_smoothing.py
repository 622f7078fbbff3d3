import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from fpca_predict.data import Grid
from fpca_predict.errors import EstimationError
from fpca_predict.harness.simulate import SimConfig, simulate_dataset
from fpca_predict.kernels import Kernel, kernel_values, local_linear_1d, local_linear_2d
from fpca_predict.smoothing import (
    Bandwidths,
    SmoothingWarning,
    default_bandwidths,
    estimate_covariance,
    estimate_cross_covariance,
    estimate_mean,
    select_bandwidth_cv,
    smooth_1d,
)

from .conftest import dataset_from_arrays


@pytest.mark.parametrize("kernel", list(Kernel))
def test_kernel_is_symmetric_density(kernel):
    total, _ = integrate.quad(lambda u: float(kernel_values(u, kernel)), -1, 1)
    assert total == pytest.approx(1.0, abs=1e-8)
    u = np.linspace(-1.5, 1.5, 31)
    np.testing.assert_array_equal(kernel_values(u, kernel), kernel_values(-u, kernel))
    assert kernel_values(1.2, kernel) == 0


def _random_sparse(seed, n=60, domain=(0.0, 1.0), f=lambda t: 0 * t):
    rng = np.random.default_rng(seed)
    times = [np.sort(rng.uniform(*domain, rng.integers(1, 5))) for _ in range(n)]
    return dataset_from_arrays(times, [f(t) for t in times], domain)


def test_constant_reproduction(backend):
    ds = _random_sparse(1, f=lambda t: np.full_like(t, 3.7))
    mu = estimate_mean(ds, 0.15)
    np.testing.assert_allclose(mu.values, 3.7, atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0.05, 0.5), st.integers(0, 10_000))
def test_linear_reproduction(a, b, h, seed):
    ds = _random_sparse(seed, f=lambda t: a + b * t)
    mu = estimate_mean(ds, h)
    np.testing.assert_allclose(mu.values, a + b * mu.grid.points, atol=1e-10 * max(1, abs(a), abs(b)))


def test_mean_reproduces_line_for_any_kernel(backend):
    ds = _random_sparse(2, f=lambda t: 2 * t)
    for k in Kernel:
        mu = estimate_mean(ds, 0.2, k)
        np.testing.assert_allclose(mu.values, 2 * mu.grid.points, atol=1e-10)


def test_backends_agree():
    from fpca_predict import _accel

    rng = np.random.default_rng(3)
    x = np.sort(rng.uniform(0, 1, 200))
    y = np.sin(6 * x) + rng.normal(0, 0.1, 200)
    w = rng.uniform(0.5, 2, 200)
    xo = np.linspace(0, 1, 41)
    s = np.sort(rng.uniform(0, 1, 300))
    t = rng.uniform(0, 1, 300)
    z = s * t + rng.normal(0, 0.1, 300)
    out = {}
    for flag in (True, False):
        prev = _accel.use_numba(flag)
        try:
            out[flag] = (
                local_linear_1d(x, y, w, xo, 0.02, Kernel.EPANECHNIKOV),
                local_linear_2d(s, t, np.ones(300), z, xo, xo, 0.05, Kernel.GAUSSIAN_TRUNCATED),
            )
        finally:
            _accel.use_numba(prev)
    for a, b in zip(out[True], out[False]):
        np.testing.assert_allclose(a[0], b[0], rtol=1e-6, atol=1e-10, equal_nan=True)
        np.testing.assert_array_equal(a[1], b[1])


def test_tiny_bandwidth_widens_instead_of_nan(backend):
    rng = np.random.default_rng(4)
    pts = np.linspace(0, 1, 101)
    times = [np.sort(rng.choice(pts, 3, replace=False)) for _ in range(200)]
    ds = dataset_from_arrays(times, [np.cos(t) for t in times], (0.0, 1.0))
    with pytest.warns(SmoothingWarning, match="widened"):
        mu = estimate_mean(ds, 0.004)
    assert np.all(np.isfinite(mu.values))


def test_hopeless_window_raises():
    with pytest.raises(EstimationError, match="t="):
        smooth_1d([0.0, 0.01, 0.02], [1, 2, 3], np.array([0.0, 1.0]), 0.01)


def test_mean_recovery_dense():
    cfg = SimConfig(n=2000, m0=20)
    ds, _ = simulate_dataset(cfg, np.random.default_rng(11))
    mu = estimate_mean(ds, default_bandwidths(ds).h_mu, grid=cfg.estimation_grid())
    assert np.max(np.abs(mu.values - cfg.mu(mu.grid.points))) < 0.05


def test_constant_covariance_and_symmetry():
    # noiseless rank-1 process with a flat eigenfunction
    rng = np.random.default_rng(5)
    xi = rng.normal(size=2000)
    times = [np.sort(rng.uniform(0, 1, 10)) for _ in xi]
    ds = dataset_from_arrays(times, [np.full(10, v) for v in xi], (0.0, 1.0))
    mu = estimate_mean(ds, 0.2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SmoothingWarning)
        cov = estimate_covariance(ds, mu, 0.2)
    np.testing.assert_array_equal(cov.values, cov.values.T)
    assert np.abs(cov.values - 1.0).max() < 0.15
    assert 0 <= cov.sigma2 < 0.01


def test_exact_constant_raw_covariances():
    # values +/-1 alternating per subject make every off-diagonal product equal 1
    rng = np.random.default_rng(6)
    times, values = [], []
    for i in range(200):
        t = np.sort(rng.uniform(0, 1, 3))
        times.append(t)
        values.append(np.full(3, 1.0 if i % 2 else -1.0))
    ds = dataset_from_arrays(times, values, (0.0, 1.0))
    from fpca_predict.smoothing import MeanFunction

    zero = MeanFunction(Grid.uniform(0, 1, 21), np.zeros(21))
    cov = estimate_covariance(ds, zero, 0.3)
    np.testing.assert_allclose(cov.values, 1.0, atol=1e-10)


def test_noise_variance_recovery():
    cfg = SimConfig(n=2000, m0=8, sigma=0.5)
    ds, _ = simulate_dataset(cfg, np.random.default_rng(12))
    bw = default_bandwidths(ds)
    mu = estimate_mean(ds, bw.h_mu, grid=cfg.estimation_grid())
    cov = estimate_covariance(ds, mu, bw.h_G)
    assert cov.sigma2 == pytest.approx(0.25, rel=0.2)


@pytest.mark.filterwarnings("ignore::fpca_predict.smoothing.SmoothingWarning")
def test_covariance_needs_pairs():
    ds = dataset_from_arrays([[0.1], [0.5], [0.9]], [[1], [2], [3]], (0.0, 1.0))
    mu = estimate_mean(ds, 0.6)
    with pytest.raises(EstimationError):
        estimate_covariance(ds, mu, 0.3)


def test_cross_covariance_zero_response():
    ds = _random_sparse(7, f=lambda t: np.sin(t))
    mu = estimate_mean(ds, 0.2)
    c = estimate_cross_covariance(ds, np.zeros(len(ds)), mu, 0.2)
    np.testing.assert_allclose(c.values, 0, atol=1e-12)


def test_cross_covariance_recovers_first_eigenfunction():
    cfg = SimConfig(n=2000, m0=8, beta=(1, 0, 0, 0), beta0=0, sigma_y=0.0, eigenvalues=(1, 0.444, 0.25, 0.16))
    ds, truth = simulate_dataset(cfg, np.random.default_rng(13))
    bw = default_bandwidths(ds)
    mu = estimate_mean(ds, bw.h_mu, grid=cfg.estimation_grid())
    c = estimate_cross_covariance(ds, truth.scores[:, 0], mu, bw.h)
    assert np.max(np.abs(c.values - cfg.phi(c.grid.points)[:, 0])) < 0.1


def test_cross_covariance_matches_model():
    cfg = SimConfig(n=2000, m0=20)
    ds, _ = simulate_dataset(cfg, np.random.default_rng(14))
    bw = default_bandwidths(ds)
    mu = estimate_mean(ds, bw.h_mu, grid=cfg.estimation_grid())
    c = estimate_cross_covariance(ds, None, mu, bw.h)
    target = cfg.phi(c.grid.points) @ (np.asarray(cfg.eigenvalues) * np.asarray(cfg.beta))
    assert np.max(np.abs(c.values - target)) < 0.15


def test_missing_responses_excluded_with_warning():
    ds = _random_sparse(8, f=lambda t: t)
    y = np.ones(len(ds))
    y[:3] = np.nan
    mu = estimate_mean(ds, 0.2)
    with pytest.warns(SmoothingWarning, match="excluded"):
        estimate_cross_covariance(ds, y, mu, 0.2)
    with pytest.raises(EstimationError):
        estimate_cross_covariance(ds, np.full(len(ds), np.nan), mu, 0.2)


def test_cv_single_candidate_and_tie():
    ds = _random_sparse(9, f=lambda t: np.full_like(t, 2.0))
    assert select_bandwidth_cv(ds, [0.3]) == 0.3
    # constant data: every candidate predicts perfectly
    assert select_bandwidth_cv(ds, [0.5, 0.3, 0.4]) == 0.3


def test_cv_prefers_interior_bandwidth():
    rng = np.random.default_rng(10)
    times = [np.sort(rng.uniform(0, 1, 10)) for _ in range(40)]
    values = [np.sin(2 * np.pi * t) + rng.normal(0, 0.2, t.size) for t in times]
    ds = dataset_from_arrays(times, values, (0.0, 1.0))
    best, scores = select_bandwidth_cv(ds, [0.01, 0.15, 0.5], return_scores=True)
    assert best == 0.15
    assert scores[1] < min(scores[0], scores[2])


def test_cv_errors():
    ds = _random_sparse(11, n=5)
    with pytest.raises(ValueError):
        select_bandwidth_cv(ds, [0.1, 0.2])
    big = _random_sparse(12, n=30)
    with pytest.raises(EstimationError):
        select_bandwidth_cv(big, [1e-6, 2e-6])


def test_bandwidth_validation():
    with pytest.raises(ValueError):
        Bandwidths(0.1, -1, 0.1)
    with pytest.raises(ValueError):
        Bandwidths(0.1, 0.6, 0.1).check_domain((0, 1))
    ds = _random_sparse(13)
    bw = default_bandwidths(ds)
    assert bw.check_domain(ds.domain) is bw
