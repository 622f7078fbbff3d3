"""Eigenanalysis of a discretized covariance operator and truncation choice."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import Grid, SparseFunctionalDataset
from .errors import DomainError, EstimationError
from .kernels import Kernel
from .smoothing import (
    Bandwidths,
    CovarianceSurface,
    MeanFunction,
    default_bandwidths,
    estimate_covariance,
    estimate_mean,
)

EIGEN_FLOOR = 1e-10
_DOMAIN_TOL = 1e-9


def interpolation_matrix(grid: Grid, t) -> np.ndarray:
    """Rows of linear-interpolation weights mapping grid values to ``t``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    pts = grid.points
    a, b = grid.domain
    tol = _DOMAIN_TOL * (b - a)
    if np.any(t < a - tol) or np.any(t > b + tol):
        bad = t[(t < a - tol) | (t > b + tol)][0]
        raise DomainError(f"t={bad} outside the grid domain [{a}, {b}]")
    t = np.clip(t, a, b)
    hi = np.clip(np.searchsorted(pts, t, side="right"), 1, pts.size - 1)
    lo = hi - 1
    frac = (t - pts[lo]) / (pts[hi] - pts[lo])
    L = np.zeros((t.size, pts.size))
    rows = np.arange(t.size)
    L[rows, lo] = 1.0 - frac
    L[rows, hi] += frac
    return L


@dataclass(frozen=True)
class EigenSystem:
    grid: Grid
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray  # grid x components
    eigengaps: np.ndarray = field(default=None)
    fve: np.ndarray = field(default=None)

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float).ravel()
        phi = np.asarray(self.eigenfunctions, dtype=float).reshape(len(self.grid), -1)
        if phi.shape[1] != lam.size:
            raise ValueError("one eigenfunction per eigenvalue required")
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "eigenfunctions", phi)
        if self.eigengaps is None:
            object.__setattr__(self, "eigengaps", eigengaps(lam))
        if self.fve is None:
            total = lam[lam > 0].sum()
            fve = np.cumsum(np.clip(lam, 0, None)) / total if total > 0 else np.zeros_like(lam)
            object.__setattr__(self, "fve", fve)

    @property
    def n_components(self) -> int:
        return self.eigenvalues.size

    def evaluate(self, t, k: Optional[int] = None) -> np.ndarray:
        """Eigenfunction values at arbitrary times (``len(t) x K`` or one column)."""
        L = interpolation_matrix(self.grid, t)
        phi = self.eigenfunctions if k is None else self.eigenfunctions[:, [k]]
        out = L @ phi
        return out if k is None else out[:, 0]

    def covariance(self, n_components: Optional[int] = None) -> np.ndarray:
        k = self.n_components if n_components is None else n_components
        phi = self.eigenfunctions[:, :k]
        return (phi * self.eigenvalues[:k]) @ phi.T


def eigengaps(lam) -> np.ndarray:
    """``min(lam[k-1] - lam[k], lam[k] - lam[k+1])`` with open ends treated as
    ``+inf`` above and ``0`` below."""
    lam = np.asarray(lam, dtype=float)
    if lam.size == 0:
        return lam.copy()
    above = np.concatenate([[np.inf], lam[:-1]]) - lam
    below = lam - np.concatenate([lam[1:], [0.0]])
    return np.minimum(above, below)


def _apply_sign_convention(phi, tol=1e-8):
    phi = phi.copy()
    for k in range(phi.shape[1]):
        big = np.flatnonzero(np.abs(phi[:, k]) > tol)
        if big.size and phi[big[0], k] < 0:
            phi[:, k] = -phi[:, k]
    return phi


def eigendecompose(cov, grid: Optional[Grid] = None, max_components: Optional[int] = None) -> EigenSystem:
    """Weighted symmetric eigenproblem of a covariance surface on a grid.

    Parameters
    ----------
    cov : CovarianceSurface or ndarray
        Symmetric kernel values on ``grid x grid``.
    grid : Grid, optional
        Required when ``cov`` is a bare array.
    max_components : int, optional
        Keep at most this many leading components.
    """
    if isinstance(cov, CovarianceSurface):
        grid = grid or cov.grid
        values = cov.values
    else:
        values = np.asarray(cov, dtype=float)
    if grid is None:
        raise ValueError("a grid is required")
    scale = max(np.abs(values).max(), 1e-300)
    if values.shape != (len(grid), len(grid)):
        raise ValueError("covariance shape does not match the grid")
    if np.abs(values - values.T).max() > 1e-8 * scale:
        raise EstimationError("covariance surface is not symmetric")
    sw = np.sqrt(grid.weights)
    lam, u = np.linalg.eigh(sw[:, None] * (0.5 * (values + values.T)) * sw[None, :])
    lam, u = lam[::-1], u[:, ::-1]
    if lam.size == 0 or lam[0] <= 0:
        raise EstimationError("covariance operator has no positive eigenvalue")
    keep = lam > EIGEN_FLOOR * lam[0]
    fve_all = np.cumsum(lam[keep]) / lam[keep].sum()
    lam, u = lam[keep], u[:, keep]
    if max_components is not None:
        lam, u, fve_all = lam[:max_components], u[:, :max_components], fve_all[:max_components]
    phi = _apply_sign_convention(u / sw[:, None])
    return EigenSystem(grid, lam, phi, eigengaps(lam), fve_all)


def select_k_fve(eigen, threshold: float = 0.95) -> int:
    """Smallest K whose cumulative variance share reaches ``threshold``."""
    if not 0 < threshold <= 1:
        raise ValueError("FVE threshold must lie in (0, 1]")
    lam = eigen.eigenvalues if isinstance(eigen, EigenSystem) else np.asarray(eigen, dtype=float)
    lam = np.clip(lam, 0, None)
    if not (lam > 0).any():
        raise EstimationError("no positive eigenvalue")
    fve = np.cumsum(lam) / lam.sum()
    # guard against round-off just below the threshold
    return int(np.argmax(fve >= threshold - 1e-12) + 1)


def evaluate_eigenfunction(eigen: EigenSystem, k: int, t) -> np.ndarray:
    """Linearly interpolated value of the ``k``-th (0-based) eigenfunction."""
    if not 0 <= k < eigen.n_components:
        raise IndexError(f"component {k} out of range")
    out = eigen.evaluate(t, k)
    return out[0] if np.ndim(t) == 0 else out


@dataclass(frozen=True)
class FittedFpcaModel:
    mean: MeanFunction
    cov: CovarianceSurface
    eigen: EigenSystem
    K: int

    def __post_init__(self):
        if not 1 <= self.K <= self.eigen.n_components:
            raise ValueError(f"K={self.K} outside 1..{self.eigen.n_components}")

    @property
    def grid(self) -> Grid:
        return self.mean.grid

    @property
    def sigma2(self) -> float:
        return self.cov.sigma2

    def with_K(self, K: int) -> "FittedFpcaModel":
        return FittedFpcaModel(self.mean, self.cov, self.eigen, int(K))


def fit_fpca(
    dataset: SparseFunctionalDataset,
    bandwidths: Optional[Bandwidths] = None,
    kernel=Kernel.EPANECHNIKOV,
    grid: Optional[Grid] = None,
    K: Optional[int] = None,
    fve_threshold: float = 0.95,
    max_components: Optional[int] = None,
) -> FittedFpcaModel:
    """Mean, covariance, noise variance and eigenpairs from sparse data."""
    bw = bandwidths or default_bandwidths(dataset)
    grid = grid or Grid.uniform(*dataset.domain)
    mean = estimate_mean(dataset, bw.h_mu, kernel, grid)
    cov = estimate_covariance(dataset, mean, bw.h_G, kernel)
    eigen = eigendecompose(cov, grid, max_components)
    if K is None:
        K = select_k_fve(eigen, fve_threshold)
    if K > eigen.n_components:
        raise EstimationError(f"requested K={K} but only {eigen.n_components} positive components")
    return FittedFpcaModel(mean, cov, eigen, int(K))
