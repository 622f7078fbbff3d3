"""Squared 2-Wasserstein distances for univariate laws, Gaussians on a
function grid, and the uniformity statistic of probability transforms.

Every function returns the *squared* distance.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import stats

from .predictive import FunctionalGaussian

_MONOTONE_TOL = 1e-12


@dataclass(frozen=True)
class Gaussian1D:
    mean: float
    variance: float

    def __post_init__(self):
        if not self.variance >= 0:
            raise ValueError("variance must be nonnegative")

    @property
    def sd(self) -> float:
        return float(np.sqrt(self.variance))

    def cdf(self, x):
        return gaussian_cdf(x, self.mean, self.variance)

    def quantile(self) -> "QuantileFunction":
        return QuantileFunction.normal(self.mean, self.sd)


@dataclass(frozen=True)
class QuantileFunction:
    """A nondecreasing map p -> Q(p) on (0, 1).

    ``breakpoints`` lists interior p values where Q may jump; quadrature is
    split there so step functions integrate exactly.
    """

    func: Callable[[np.ndarray], np.ndarray]
    breakpoints: tuple = ()

    def __call__(self, p):
        return self.func(np.asarray(p, dtype=float))

    @classmethod
    def normal(cls, mean=0.0, sd=1.0):
        if sd < 0:
            raise ValueError("sd must be nonnegative")
        return cls(lambda p: mean + sd * stats.norm.ppf(p))

    @classmethod
    def atom(cls, value):
        return cls(lambda p: np.full_like(p, float(value)))

    @classmethod
    def uniform(cls, a=0.0, b=1.0):
        return cls(lambda p: a + (b - a) * p)

    @classmethod
    def empirical(cls, sample):
        """Generalized inverse of the empirical CDF: ``z_(ceil(n p))``."""
        z = np.sort(np.asarray(sample, dtype=float).ravel())
        n = z.size
        if n == 0:
            raise ValueError("empty sample")

        def q(p):
            idx = np.clip(np.ceil(n * p).astype(int) - 1, 0, n - 1)
            return z[idx]

        return cls(q, tuple(np.arange(1, n) / n))


def w2_univariate(q1: QuantileFunction, q2: QuantileFunction, n_quad: int = 256) -> float:
    """``int_0^1 (Q1(p) - Q2(p))^2 dp`` by Gauss-Legendre quadrature.

    The unit interval is split at the union of both breakpoint sets and each
    piece gets ``n_quad`` nodes.
    """
    if n_quad < 16:
        raise ValueError("n_quad must be at least 16")
    edges = np.unique(np.concatenate([[0.0, 1.0], q1.breakpoints, q2.breakpoints]))
    x, w = np.polynomial.legendre.leggauss(n_quad)
    lo, hi = edges[:-1, None], edges[1:, None]
    p = (lo + (hi - lo) * (x[None, :] + 1) / 2).ravel()
    wp = ((hi - lo) / 2 * w[None, :]).ravel()
    a, b = q1(p), q2(p)
    for vals in (a, b):
        if np.any(np.diff(vals) < -_MONOTONE_TOL * max(1.0, np.abs(vals).max())):
            raise ValueError("quantile function is not monotone")
    return float(np.sum(wp * (a - b) ** 2))


def w2_gaussian_1d(g1: Gaussian1D, g2: Gaussian1D) -> float:
    return float((g1.mean - g2.mean) ** 2 + (g1.sd - g2.sd) ** 2)


def _psd_sqrt(M, tol):
    w, v = np.linalg.eigh(0.5 * (M + M.T))
    top = max(w.max(initial=0.0), 0.0)
    if w.min(initial=0.0) < -tol * max(top, 1e-300):
        raise ValueError(f"covariance kernel has eigenvalue {w.min():.3g} below tolerance")
    w = np.where(w > _roundoff_floor(w), w, 0.0)
    return (v * np.sqrt(w)) @ v.T, w


def _roundoff_floor(w):
    # eigenvalues this small are rounding noise; their square roots would
    # otherwise add up to about sqrt(eps) per grid point
    return w.size * np.finfo(float).eps * max(np.abs(w).max(initial=0.0), 1e-300)


def _weighted_operator(fg: FunctionalGaussian):
    sw = np.sqrt(fg.grid.weights)
    return sw[:, None] * fg.cov_kernel * sw[None, :]


def w2_gaussian_hilbert(g1: FunctionalGaussian, g2: FunctionalGaussian, tol: float = 1e-6) -> float:
    """Gelbrich distance between two Gaussian measures on the same grid.

    Operators are discretized as ``W^1/2 K W^1/2`` with trapezoid weights
    ``W`` so traces and square roots match their integral counterparts.
    """
    if not g1.grid.same_as(g2.grid):
        raise ValueError("Gaussian measures live on different grids")
    d = g1.mean_curve - g2.mean_curve
    mean_term = float(np.sum(g1.grid.weights * d * d))
    A = _weighted_operator(g1)
    B = _weighted_operator(g2)
    A_half, a_eig = _psd_sqrt(A, tol)
    _, b_eig = _psd_sqrt(B, tol)
    C = A_half @ B @ A_half
    c_eig = np.linalg.eigvalsh(0.5 * (C + C.T))
    cross = np.sqrt(np.where(c_eig > _roundoff_floor(c_eig), c_eig, 0.0)).sum()
    return max(0.0, mean_term + float(a_eig.sum() + b_eig.sum() - 2 * cross))


def w2_gaussian_to_atom(g: FunctionalGaussian, atom) -> float:
    """Expected squared L2 distance between a Gaussian measure and a point."""
    atom = np.asarray(atom, dtype=float)
    if atom.shape != g.mean_curve.shape:
        raise ValueError("atom does not live on the Gaussian's grid")
    d = g.mean_curve - atom
    return float(np.sum(g.grid.weights * d * d) + max(g.trace(), 0.0))


def uniformity_statistic(values) -> float:
    """Squared W2 distance between the empirical law of ``values`` and U(0, 1).

    Closed form: sum_i z_i^2/n - z_i (i^2 - (i-1)^2)/n^2 + (i^3 - (i-1)^3)/(3 n^3)
    over the order statistics ``z_i``.
    """
    z = np.sort(np.asarray(values, dtype=float).ravel())
    if z.size == 0:
        raise ValueError("need at least one value")
    if np.any(z < 0) or np.any(z > 1) or not np.all(np.isfinite(z)):
        raise ValueError("values must lie in [0, 1]")
    n = z.size
    i = np.arange(1, n + 1, dtype=float)
    terms = z * z / n - z * (i * i - (i - 1) ** 2) / n**2 + (i**3 - (i - 1) ** 3) / (3 * n**3)
    return float(max(terms.sum(), 0.0))


def gaussian_cdf(x, mean, variance, saturate_equal: Optional[float] = 0.5):
    """Normal CDF that saturates to 0, 1 (or ``saturate_equal`` at the
    mean) when the variance is zero."""
    x = np.asarray(x, dtype=float)
    mean = np.asarray(mean, dtype=float)
    variance = np.asarray(variance, dtype=float)
    sd = np.sqrt(np.clip(variance, 0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (x - mean) / sd
    out = stats.norm.cdf(z)
    degenerate = sd <= 0
    if np.any(degenerate):
        step = np.where(x > mean, 1.0, np.where(x < mean, 0.0, saturate_equal))
        out = np.where(degenerate, step, out)
    return out
