import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fpca_predict.data import Grid
from fpca_predict.errors import DomainError, EstimationError
from fpca_predict.harness.simulate import SimConfig, simulate_dataset
from fpca_predict.smoothing import CovarianceSurface
from fpca_predict.spectral import (
    EigenSystem,
    eigendecompose,
    eigengaps,
    evaluate_eigenfunction,
    fit_fpca,
    interpolation_matrix,
    select_k_fve,
)

PAPER_LAMBDA = [4 / (1 + k) ** 2 for k in range(1, 5)]


def _orthonormality_residual(eigen):
    phi = eigen.eigenfunctions
    gram = phi.T @ (eigen.grid.weights[:, None] * phi)
    return np.abs(gram - np.eye(phi.shape[1])).max()


def test_rank_one_flat_kernel():
    g = Grid.uniform(0, 1, 51)
    eig = eigendecompose(np.ones((51, 51)), g)
    assert eig.eigenvalues[0] == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(eig.eigenfunctions[:, 0], 1.0, atol=1e-10)
    assert eig.n_components == 1


def test_rank_two_paper_kernel():
    cfg = SimConfig(K_true=2, eigenvalues=(1.0, 4 / 9))
    g = Grid.uniform(0, 10, 101)
    phi = cfg.phi(g.points)
    cov = (phi * np.array([1.0, 4 / 9])) @ phi.T
    eig = eigendecompose(cov, g)
    np.testing.assert_allclose(eig.eigenvalues[:2], [1.0, 4 / 9], atol=1e-3)
    assert _orthonormality_residual(eig) < 1e-8


def test_brownian_leading_eigenvalue():
    g = Grid.uniform(0, 1, 201)
    eig = eigendecompose(np.minimum.outer(g.points, g.points), g)
    assert eig.eigenvalues[0] == pytest.approx(4 / np.pi**2, abs=1e-2)
    assert _orthonormality_residual(eig) < 1e-8


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6))
def test_random_psd_kernel_properties(seed, rank):
    rng = np.random.default_rng(seed)
    g = Grid.uniform(0, 2, 31)
    B = rng.normal(size=(31, rank))
    cov = B @ B.T
    eig = eigendecompose(cov, g)
    lam = eig.eigenvalues
    assert np.all(np.diff(lam) <= 0) and lam.min() >= 0
    assert _orthonormality_residual(eig) < 1e-8
    recon = eig.covariance()
    assert np.linalg.norm(recon - cov) <= 1e-6 * np.linalg.norm(cov)
    assert np.all(np.diff(eig.fve) >= -1e-15) and eig.fve[-1] == pytest.approx(1.0)
    for k in range(eig.n_components):
        big = np.flatnonzero(np.abs(eig.eigenfunctions[:, k]) > 1e-8)
        assert eig.eigenfunctions[big[0], k] > 0
    again = eigendecompose(cov, g)
    np.testing.assert_array_equal(np.sign(again.eigenfunctions), np.sign(eig.eigenfunctions))


def test_eigendecompose_errors():
    g = Grid.uniform(0, 1, 5)
    m = np.eye(5)
    m[0, 1] = 1
    with pytest.raises(EstimationError):
        eigendecompose(m, g)
    with pytest.raises(EstimationError):
        eigendecompose(-np.eye(5), g)
    with pytest.raises(ValueError):
        eigendecompose(np.eye(4), g)


def test_max_components():
    g = Grid.uniform(0, 1, 21)
    eig = eigendecompose(np.minimum.outer(g.points, g.points) + 0.0, g, max_components=3)
    assert eig.n_components == 3


def test_eigengaps():
    np.testing.assert_allclose(eigengaps([3.0, 2.0, 0.5]), [1.0, 1.0, 0.5])
    np.testing.assert_allclose(eigengaps([1.0, 1.0]), [0.0, 0.0])


@pytest.mark.parametrize("threshold,K", [(0.90, 3), (0.95, 4), (0.5, 1)])
def test_fve_selection(threshold, K):
    assert select_k_fve(PAPER_LAMBDA, threshold) == K


def test_fve_single_and_errors():
    assert select_k_fve([2.0], 0.99) == 1
    with pytest.raises(ValueError):
        select_k_fve(PAPER_LAMBDA, 0)
    with pytest.raises(ValueError):
        select_k_fve(PAPER_LAMBDA, 1.5)
    with pytest.raises(EstimationError):
        select_k_fve([0.0, -1.0])


def test_evaluate_eigenfunction():
    g = Grid.uniform(0, 1, 201)
    phi = np.sqrt(2) * np.sin(np.pi * g.points)
    eig = EigenSystem(g, [1.0], phi[:, None])
    assert evaluate_eigenfunction(eig, 0, g.points[17]) == phi[17]
    mid = 0.5 * (g.points[10] + g.points[11])
    assert evaluate_eigenfunction(eig, 0, mid) == pytest.approx(0.5 * (phi[10] + phi[11]), abs=1e-15)
    t = np.random.default_rng(0).uniform(0, 1, 50)
    assert np.abs(evaluate_eigenfunction(eig, 0, t) - np.sqrt(2) * np.sin(np.pi * t)).max() < 1e-3
    with pytest.raises(DomainError):
        evaluate_eigenfunction(eig, 0, 1.5)
    with pytest.raises(IndexError):
        evaluate_eigenfunction(eig, 1, 0.5)


def test_interpolation_rows_sum_to_one():
    g = Grid.uniform(-1, 3, 9)
    L = interpolation_matrix(g, np.linspace(-1, 3, 40))
    np.testing.assert_allclose(L.sum(axis=1), 1.0)


def test_fit_fpca_pipeline():
    cfg = SimConfig(n=1000, m0=8)
    ds, _ = simulate_dataset(cfg, np.random.default_rng(21))
    model = fit_fpca(ds, grid=cfg.estimation_grid())
    assert 1 <= model.K <= model.eigen.n_components
    assert isinstance(model.cov, CovarianceSurface)
    assert model.eigen.eigenvalues[0] == pytest.approx(1.0, rel=0.25)
    # leading eigenfunction matches the truth up to sign
    ip = model.grid.inner(model.eigen.eigenfunctions[:, 0], cfg.phi(model.grid.points)[:, 0])
    assert abs(ip) > 0.95
    with pytest.raises(EstimationError):
        fit_fpca(ds, grid=cfg.estimation_grid(), K=999)
