"""Conditional score distributions and Gaussian predictive laws for latent
trajectories, computed from a fitted (or true) FPCA model."""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg, stats

from .data import Grid, SubjectRecord, SparseFunctionalDataset
from .errors import EstimationError, SingularCovarianceError
from .spectral import FittedFpcaModel, interpolation_matrix

PSD_RTOL = 1e-8
JITTER = 1e-10


@dataclass(frozen=True)
class ScorePredictive:
    """Gaussian law ``N(mean, covariance)`` of the first K scores of one subject."""

    mean: np.ndarray
    covariance: np.ndarray
    subject_id: str = ""

    @property
    def K(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class FunctionalGaussian:
    grid: Grid
    mean_curve: np.ndarray
    cov_kernel: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.cov_kernel, dtype=float)
        if k.shape != (len(self.grid), len(self.grid)):
            raise ValueError("covariance kernel must be grid x grid")
        if np.abs(k - k.T).max(initial=0.0) > 1e-10 * max(1.0, np.abs(k).max(initial=0.0)):
            raise ValueError("covariance kernel is not symmetric")

    def trace(self) -> float:
        return float(np.sum(self.grid.weights * np.diag(self.cov_kernel)))


def _check_K(model, K):
    if K is None:
        return model.K
    K = int(K)
    if K < 1:
        raise ValueError("K must be at least 1")
    if K > model.eigen.n_components:
        raise EstimationError(f"K={K} exceeds the {model.eigen.n_components} retained components")
    return K


def _cho_solve(S, B, sigma2):
    """Solve ``S X = B`` for SPD ``S``; one jittered retry, never inverts."""
    try:
        return linalg.cho_solve(linalg.cho_factor(S, lower=True, check_finite=False), B, check_finite=False)
    except linalg.LinAlgError:
        pass
    if sigma2 > 0:
        Sj = S + JITTER * sigma2 * np.eye(S.shape[0])
        try:
            return linalg.cho_solve(linalg.cho_factor(Sj, lower=True, check_finite=False), B, check_finite=False)
        except linalg.LinAlgError:
            pass
    raise SingularCovarianceError("observation covariance is singular (zero noise with coincident times?)")


def _clip_psd(S, scale):
    S = 0.5 * (S + S.T)
    if S.size == 0:
        return S
    w, v = np.linalg.eigh(S)
    if w.min() < -PSD_RTOL * max(scale, 1e-300):
        raise EstimationError(f"conditional covariance has eigenvalue {w.min():.3g}; model misfit")
    if w.min() < 0:
        S = (v * np.clip(w, 0, None)) @ v.T
        S = 0.5 * (S + S.T)
    return S


def _subject_terms(model: FittedFpcaModel, subject: SubjectRecord, K: int):
    lam = model.eigen.eigenvalues
    phi = model.eigen.evaluate(subject.times)
    Sigma = (phi * lam) @ phi.T + model.sigma2 * np.eye(subject.n_obs)
    resid = subject.values - model.mean(subject.times)
    A = phi[:, :K] * lam[:K]
    return Sigma, resid, A


def blup_scores(model: FittedFpcaModel, subject: SubjectRecord, K: Optional[int] = None) -> ScorePredictive:
    """Best linear unbiased predictor of the first K scores and its
    conditional covariance ``Lambda_K - Lambda_K Phi^T Sigma^-1 Phi Lambda_K``."""
    K = _check_K(model, K)
    Sigma, resid, A = _subject_terms(model, subject, K)
    sol = _cho_solve(Sigma, np.column_stack([resid, A]), model.sigma2)
    xi = A.T @ sol[:, 0]
    lam_k = model.eigen.eigenvalues[:K]
    cov = np.diag(lam_k) - A.T @ sol[:, 1:]
    cov = _clip_psd(cov, float(model.eigen.eigenvalues.max(initial=0.0)))
    return ScorePredictive(xi, cov, subject.id)


score_predictive_distribution = blup_scores


def blup_scores_batch(model: FittedFpcaModel, dataset: SparseFunctionalDataset, K: Optional[int] = None):
    """Vectorized :func:`blup_scores` for every subject of ``dataset``.

    Subjects sharing an observation count are solved as one stacked batch.

    Returns
    -------
    means : ndarray, shape (n, K)
    covs : ndarray, shape (n, K, K)
    """
    K = _check_K(model, K)
    n = len(dataset)
    lam = model.eigen.eigenvalues
    scale = float(lam.max(initial=0.0))
    means = np.empty((n, K))
    covs = np.empty((n, K, K))
    groups = {}
    for i, s in enumerate(dataset.subjects):
        groups.setdefault(s.n_obs, []).append(i)
    for m, idx in groups.items():
        T = np.stack([dataset.subjects[i].times for i in idx])
        X = np.stack([dataset.subjects[i].values for i in idx])
        phi = model.eigen.evaluate(T.ravel()).reshape(len(idx), m, -1)
        Sigma = np.einsum("bik,k,bjk->bij", phi, lam, phi) + model.sigma2 * np.eye(m)
        A = phi[:, :, :K] * lam[:K]
        rhs = np.concatenate([(X - model.mean(T))[:, :, None], A], axis=2)
        try:
            L = np.linalg.cholesky(Sigma)
            z = np.linalg.solve(L, rhs)
            sol = np.linalg.solve(np.swapaxes(L, 1, 2), z)
        except np.linalg.LinAlgError:
            for i in idx:
                sp = blup_scores(model, dataset.subjects[i], K)
                means[i], covs[i] = sp.mean, sp.covariance
            continue
        means[idx] = np.einsum("bik,bi->bk", A, sol[:, :, 0])
        c = np.diag(lam[:K])[None] - np.einsum("bik,bil->bkl", A, sol[:, :, 1:])
        c = 0.5 * (c + np.swapaxes(c, 1, 2))
        w = np.linalg.eigvalsh(c)
        if w.min() < -PSD_RTOL * scale:
            raise EstimationError(f"conditional covariance has eigenvalue {w.min():.3g}; model misfit")
        if w.min() < 0:
            c = np.stack([_clip_psd(ci, scale) for ci in c])
        covs[idx] = c
    return means, covs


def functional_predictive_distribution(model: FittedFpcaModel, subject: SubjectRecord, K: Optional[int] = None) -> FunctionalGaussian:
    """K-truncated predictive law of the centered trajectory on the model grid."""
    sp = blup_scores(model, subject, K)
    phi = model.eigen.eigenfunctions[:, : sp.K]
    kern = phi @ sp.covariance @ phi.T
    return FunctionalGaussian(model.grid, phi @ sp.mean, 0.5 * (kern + kern.T))


def infinite_predictive_distribution(model: FittedFpcaModel, subject: SubjectRecord) -> FunctionalGaussian:
    """Untruncated predictive law computed from the covariance surface itself."""
    L = interpolation_matrix(model.grid, subject.times)
    G = model.cov.values
    GT = G @ L.T  # grid x n_i
    Sigma = L @ GT + model.sigma2 * np.eye(subject.n_obs)
    Sigma = 0.5 * (Sigma + Sigma.T)
    resid = subject.values - model.mean(subject.times)
    sol = _cho_solve(Sigma, np.column_stack([resid, GT.T]), model.sigma2)
    mean_curve = GT @ sol[:, 0]
    kern = G - GT @ sol[:, 1:]
    return FunctionalGaussian(model.grid, mean_curve, 0.5 * (kern + kern.T))


def reconstruct_trajectory(model: FittedFpcaModel, subject: SubjectRecord, K: Optional[int] = None) -> np.ndarray:
    sp = blup_scores(model, subject, K)
    return model.mean.values + model.eigen.eigenfunctions[:, : sp.K] @ sp.mean


def pointwise_band(fg: FunctionalGaussian, level: float = 0.95, offset=None):
    """Pointwise normal band ``mean +/- z * sd``; ``offset`` (e.g. the mean
    function) shifts both curves."""
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    var = np.diag(fg.cov_kernel).copy()
    scale = max(1.0, np.abs(var).max(initial=0.0))
    if var.min(initial=0.0) < -1e-8 * scale:
        raise EstimationError("negative pointwise variance")
    half = stats.norm.ppf(0.5 + level / 2) * np.sqrt(np.clip(var, 0, None))
    center = fg.mean_curve if offset is None else fg.mean_curve + offset
    return center - half, center + half


def contour_ellipse(sp: ScorePredictive, level: float = 0.95, n_points: int = 100) -> np.ndarray:
    """Points on the ``level`` probability contour of a bivariate score law."""
    if sp.K != 2:
        raise ValueError("contours need exactly two components")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    w, v = np.linalg.eigh(sp.covariance)
    if w.min() <= 1e-14 * max(w.max(), 1e-300):
        raise EstimationError("degenerate ellipse: singular covariance")
    r = np.sqrt(stats.chi2.ppf(level, df=2))
    theta = np.linspace(0.0, 2 * np.pi, n_points, endpoint=False)
    circle = np.stack([np.cos(theta), np.sin(theta)])
    return sp.mean[None, :] + (r * (v * np.sqrt(w)) @ circle).T


def ellipse_area(sp: ScorePredictive, level: float = 0.95) -> float:
    return float(np.pi * stats.chi2.ppf(level, df=2) * np.sqrt(max(np.linalg.det(sp.covariance), 0.0)))
