import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fpca_predict.data import Grid
from fpca_predict.predictive import FunctionalGaussian
from fpca_predict.wasserstein import (
    Gaussian1D,
    QuantileFunction,
    gaussian_cdf,
    uniformity_statistic,
    w2_gaussian_1d,
    w2_gaussian_hilbert,
    w2_gaussian_to_atom,
    w2_univariate,
)


def test_univariate_examples():
    n01 = QuantileFunction.normal(0, 1)
    assert w2_univariate(n01, n01) == 0.0
    assert w2_univariate(n01, QuantileFunction.normal(3, 2), 256) == pytest.approx(10, abs=1e-3)
    assert w2_univariate(QuantileFunction.atom(0.5), QuantileFunction.uniform()) == pytest.approx(1 / 12, abs=1e-6)
    with pytest.raises(ValueError):
        w2_univariate(n01, n01, n_quad=8)
    with pytest.raises(ValueError):
        w2_univariate(QuantileFunction(lambda p: -p), n01)


def test_gaussian_1d_examples():
    assert w2_gaussian_1d(Gaussian1D(0, 1), Gaussian1D(0, 1)) == 0
    assert w2_gaussian_1d(Gaussian1D(0, 1), Gaussian1D(3, 4)) == pytest.approx(10)
    assert w2_gaussian_1d(Gaussian1D(1, 0), Gaussian1D(0, 0)) == 1
    with pytest.raises(ValueError):
        Gaussian1D(0, -1)


def test_quantile_and_closed_form_agree():
    rng = np.random.default_rng(0)
    for _ in range(100):
        m1, m2 = rng.normal(0, 3, 2)
        s1, s2 = rng.uniform(0.1, 3, 2)
        g1, g2 = Gaussian1D(m1, s1**2), Gaussian1D(m2, s2**2)
        assert abs(w2_univariate(g1.quantile(), g2.quantile(), 256) - w2_gaussian_1d(g1, g2)) < 1e-3


def test_gelbrich_examples():
    g = Grid.uniform(0, 1, 401)
    # orthonormalize under the quadrature weights so the spectra commute exactly
    sw = np.sqrt(g.weights)
    q, _ = np.linalg.qr(sw[:, None] * np.column_stack([np.ones(len(g)), np.cos(np.pi * g.points)]))
    phi = q / sw[:, None]
    k1 = (phi * [1.0, 0.25]) @ phi.T
    k2 = (phi * [4.0, 1.0]) @ phi.T
    z = np.zeros(len(g))
    assert w2_gaussian_hilbert(FunctionalGaussian(g, z, k1), FunctionalGaussian(g, z, k2)) == pytest.approx(1.25, abs=1e-6)
    c = 0.7
    shifted = FunctionalGaussian(g, z + c, k1)
    assert w2_gaussian_hilbert(FunctionalGaussian(g, z, k1), shifted) == pytest.approx(c * c, abs=1e-8)


def test_gelbrich_mismatched_grids():
    g1, g2 = Grid.uniform(0, 1, 11), Grid.uniform(0, 1, 12)
    with pytest.raises(ValueError):
        w2_gaussian_hilbert(FunctionalGaussian(g1, np.zeros(11), np.eye(11)), FunctionalGaussian(g2, np.zeros(12), np.eye(12)))


def test_gelbrich_rejects_indefinite_kernel():
    g = Grid.uniform(0, 1, 5)
    bad = FunctionalGaussian(g, np.zeros(5), -np.eye(5))
    with pytest.raises(ValueError):
        w2_gaussian_hilbert(bad, bad)


def test_rank_one_reduces_to_univariate():
    g = Grid.uniform(0, 2, 101)
    phi = np.sin(np.pi * g.points / 2)
    phi /= np.sqrt(np.sum(g.weights * phi * phi))
    a = FunctionalGaussian(g, 1.5 * phi, 2.0 * np.outer(phi, phi))
    b = FunctionalGaussian(g, -0.5 * phi, 0.3 * np.outer(phi, phi))
    assert w2_gaussian_hilbert(a, b) == pytest.approx(w2_gaussian_1d(Gaussian1D(1.5, 2.0), Gaussian1D(-0.5, 0.3)), abs=1e-8)


def _random_gaussian(rng, g, rank=3):
    B = rng.normal(size=(len(g), rank))
    return FunctionalGaussian(g, rng.normal(size=len(g)), B @ B.T / len(g))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000))
def test_metric_axioms(seed):
    rng = np.random.default_rng(seed)
    g = Grid.uniform(0, 1, 21)
    a, b, c = (_random_gaussian(rng, g) for _ in range(3))
    dab = np.sqrt(w2_gaussian_hilbert(a, b))
    dba = np.sqrt(w2_gaussian_hilbert(b, a))
    dbc = np.sqrt(w2_gaussian_hilbert(b, c))
    dac = np.sqrt(w2_gaussian_hilbert(a, c))
    assert dab >= 0
    assert dab == pytest.approx(dba, abs=1e-6)
    assert dac <= dab + dbc + 1e-8
    assert w2_gaussian_hilbert(a, a) < 1e-8


def test_gaussian_to_atom():
    g = Grid.uniform(0, 1, 51)
    G = len(g)
    assert w2_gaussian_to_atom(FunctionalGaussian(g, np.ones(G), np.zeros((G, G))), np.ones(G)) == 0
    toy = FunctionalGaussian(g, np.full(G, 2.0), np.full((G, G), 2 / 3))
    assert w2_gaussian_to_atom(toy, np.zeros(G)) == pytest.approx(4 + 2 / 3, abs=1e-8)
    with pytest.raises(ValueError):
        w2_gaussian_to_atom(toy, np.zeros(G + 1))
    # 1-D analog: N(1, 0.25) against the atom at 0
    assert w2_univariate(Gaussian1D(1, 0.25).quantile(), QuantileFunction.atom(0)) == pytest.approx(1.25, abs=1e-3)


def test_uniformity_examples():
    assert uniformity_statistic([0.5]) == pytest.approx(1 / 12, abs=1e-12)
    n = 100
    assert uniformity_statistic((2 * np.arange(1, n + 1) - 1) / (2 * n)) < 1e-4
    assert uniformity_statistic(np.zeros(50)) == pytest.approx(1 / 3, abs=1e-12)
    with pytest.raises(ValueError):
        uniformity_statistic([1.2])
    with pytest.raises(ValueError):
        uniformity_statistic([])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=40))
def test_uniformity_equals_quantile_integral(values):
    closed = uniformity_statistic(values)
    integral = w2_univariate(QuantileFunction.empirical(values), QuantileFunction.uniform(), 64)
    assert closed == pytest.approx(integral, abs=1e-10)


def test_gaussian_cdf_saturation():
    np.testing.assert_array_equal(gaussian_cdf([1.0, -1.0, 0.0], 0.0, 0.0), [1.0, 0.0, 0.5])
    assert gaussian_cdf(0.0, 0.0, 1.0) == pytest.approx(0.5)
