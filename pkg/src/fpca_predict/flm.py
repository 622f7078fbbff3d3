"""Scalar-on-function linear regression with sparsely observed predictors.

The slope is expanded in the estimated eigenbasis with coefficients
``sigma_k / lambda_k`` where ``sigma_k`` projects the smoothed
predictor/response cross-covariance onto the k-th eigenfunction.
"""

import logging
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import Grid, SparseFunctionalDataset, SubjectRecord
from .errors import EstimationError
from .kernels import Kernel
from .predictive import blup_scores, blup_scores_batch
from .smoothing import _response_array, default_bandwidths, estimate_cross_covariance
from .spectral import FittedFpcaModel
from .wasserstein import Gaussian1D, gaussian_cdf, uniformity_statistic

log = logging.getLogger(__name__)

VANISHING_EIGENVALUE = 1e-12


class NegativeVarianceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class FlmModel:
    beta0: float
    sigma_k: np.ndarray
    beta_k: np.ndarray
    eigenvalues: np.ndarray
    beta_curve: np.ndarray
    grid: Grid
    cross_covariance: Optional[np.ndarray] = None

    @property
    def M(self) -> int:
        return self.beta_k.size


def flm_from_cross_covariance(model: FittedFpcaModel, cross, beta0: float, M: Optional[int] = None) -> FlmModel:
    """Slope coefficients from a cross-covariance curve given on the model grid."""
    M = model.K if M is None else int(M)
    lam = model.eigen.eigenvalues
    if not 1 <= M <= lam.size:
        raise ValueError(f"M={M} outside 1..{lam.size}")
    if np.any(lam[:M] <= VANISHING_EIGENVALUE * lam[0]):
        raise EstimationError("division by vanishing eigenvalue")
    cross = np.asarray(cross, dtype=float)
    phi = model.eigen.eigenfunctions[:, :M]
    sigma_k = model.grid.integrate(cross[:, None] * phi, axis=0)
    beta_k = sigma_k / lam[:M]
    return FlmModel(float(beta0), sigma_k, beta_k, lam[:M].copy(), phi @ beta_k, model.grid, cross)


def fit_flm(
    model: FittedFpcaModel,
    dataset: SparseFunctionalDataset,
    responses=None,
    M: Optional[int] = None,
    h: Optional[float] = None,
    kernel=Kernel.EPANECHNIKOV,
) -> FlmModel:
    """Fit intercept and slope of the functional linear model.

    Parameters
    ----------
    model : FittedFpcaModel
        Mean and eigenbasis of the predictor process.
    responses : dict, array or None
        Scalar responses; taken from ``dataset`` when omitted.
    M : int, optional
        Number of eigen components in the slope (default ``model.K``).
    h : float, optional
        Cross-covariance bandwidth (rate-based default when omitted).
    """
    y = _response_array(dataset, responses)
    if h is None:
        h = default_bandwidths(dataset).h
    cross = estimate_cross_covariance(dataset, y, model.mean, h, kernel)
    return flm_from_cross_covariance(model, cross.values, float(np.nanmean(y)), M)


def _check_K(flm, model, K):
    K = min(flm.M, model.K) if K is None else int(K)
    if not 1 <= K <= min(flm.M, model.eigen.n_components):
        raise ValueError(f"K={K} must not exceed M={flm.M} or the retained components")
    return K


def response_predictive_distribution(flm: FlmModel, model: FittedFpcaModel, subject: SubjectRecord, K: Optional[int] = None) -> Gaussian1D:
    """Projection of the subject's score predictive law onto the slope."""
    K = _check_K(flm, model, K)
    sp = blup_scores(model, subject, K)
    b = flm.beta_k[:K]
    return Gaussian1D(float(flm.beta0 + b @ sp.mean), float(max(b @ sp.covariance @ b, 0.0)))


def response_predictive_batch(flm: FlmModel, model: FittedFpcaModel, dataset: SparseFunctionalDataset, K: Optional[int] = None):
    """Means and variances of every subject's response predictive law."""
    K = _check_K(flm, model, K)
    xi, cov = blup_scores_batch(model, dataset, K)
    b = flm.beta_k[:K]
    means = flm.beta0 + xi @ b
    var = np.clip(np.einsum("k,nkl,l->n", b, cov, b), 0, None)
    if cov.size:
        log.debug("min eigenvalue of conditional score covariances: %.3g", np.linalg.eigvalsh(cov).min())
    return means, var


def discrepancy_terms(y, means, variances):
    """The two averages making up the discrepancy: squared prediction error
    and predictive variance."""
    y = np.asarray(y, dtype=float)
    return float(np.mean((y - means) ** 2)), float(np.mean(variances))


def wasserstein_discrepancy(
    flm: FlmModel,
    model: FittedFpcaModel,
    dataset: SparseFunctionalDataset,
    responses=None,
    K: Optional[int] = None,
    return_terms: bool = False,
):
    """Average squared W2 distance between each response atom and its
    predictive law, ``mean((Y - eta)^2) + mean(b' Sigma b)``."""
    y = _response_array(dataset, responses)
    if not np.all(np.isfinite(y)):
        raise ValueError("every subject needs a response")
    means, var = response_predictive_batch(flm, model, dataset, K)
    err, spread = discrepancy_terms(y, means, var)
    total = err + spread
    return (total, err, spread) if return_terms else total


def sigma_y_estimate(flm: FlmModel, responses) -> float:
    """Response noise variance: sample variance of Y (divisor n) minus the
    variance explained by the fitted slope components.

    Small samples can make this negative; the value is returned unchanged
    and a :class:`NegativeVarianceWarning` is emitted.
    """
    y = np.asarray(list(responses.values()) if isinstance(responses, dict) else responses, dtype=float)
    y = y[np.isfinite(y)]
    if y.size < 2:
        raise ValueError("need at least two responses")
    est = float(np.mean((y - y.mean()) ** 2) - np.sum(flm.eigenvalues * flm.beta_k**2))
    if est < 0:
        warnings.warn(f"negative response noise variance estimate {est:.3g}", NegativeVarianceWarning, stacklevel=2)
    return est


def predictive_probabilities(means, variances, targets, noise_var: float = 0.0):
    """Predictive CDF of each subject evaluated at its target."""
    var = np.asarray(variances, dtype=float) + noise_var
    targets = np.asarray(targets, dtype=float)
    degenerate = (var <= 0) & (targets != means)
    if np.any(degenerate):
        warnings.warn(
            f"{int(degenerate.sum())} zero-variance predictive laws saturated to 0/1", UserWarning, stacklevel=3
        )
    return gaussian_cdf(targets, means, var)


def uniformity_diagnostic(
    flm: FlmModel,
    model: FittedFpcaModel,
    dataset: SparseFunctionalDataset,
    targets=None,
    K: Optional[int] = None,
    responses=None,
) -> float:
    """Uniformity statistic of predictive CDFs evaluated at per-subject targets.

    With ``targets`` (e.g. the true linear predictors in simulation) the
    probabilities are ``F_iK(target_i)``. Without them the observed
    responses are used and each predictive law is widened by the estimated
    response noise variance, so the transform stays uniform under the model.
    """
    means, var = response_predictive_batch(flm, model, dataset, K)
    if targets is not None:
        probs = predictive_probabilities(means, var, targets)
    else:
        y = _response_array(dataset, responses)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NegativeVarianceWarning)
            s2 = max(sigma_y_estimate(flm, y), 0.0)
        probs = predictive_probabilities(means, var, y, s2)
    return uniformity_statistic(probs)


def population_discrepancy_oracle(truth, K: int, n_mc: int = 1000, rng=None, return_se: bool = False):
    """Monte Carlo value of the population discrepancy under a known model.

    ``truth`` supplies ``eigenvalues``, ``beta``, ``sigma``, ``sigma_y``,
    ``phi(t)`` (times -> len(t) x K_true) and ``sample_times(rng)``.
    Each draw evaluates

        2 b' Sigma_K b + sigma_y^2 + sum_{k>K} lam_k beta_k^2
          - 2 b' Lambda_K Phi_K' Sigma^-1 Phi_tail (lam * beta)_tail

    at one design; the result is the draw average.
    """
    if n_mc < 100:
        raise ValueError("n_mc must be at least 100")
    rng = np.random.default_rng(rng)
    lam = np.asarray(truth.eigenvalues, dtype=float)
    beta = np.asarray(truth.beta, dtype=float)
    if not 1 <= K <= lam.size:
        raise ValueError("K outside the true rank")
    bK = beta[:K]
    tail = float(np.sum(lam[K:] * beta[K:] ** 2))
    draws = np.empty(n_mc)
    for r in range(n_mc):
        T = truth.sample_times(rng)
        phi = truth.phi(T)
        S = (phi * lam) @ phi.T + truth.sigma**2 * np.eye(T.size)
        A = phi[:, :K] * lam[:K]
        rhs = np.column_stack([A, phi[:, K:] @ (lam[K:] * beta[K:])])
        sol = np.linalg.solve(S, rhs)
        Sigma_K = np.diag(lam[:K]) - A.T @ sol[:, :K]
        cross = bK @ (A.T @ sol[:, K])
        draws[r] = 2 * bK @ Sigma_K @ bK + truth.sigma_y**2 + tail - 2 * cross
    est = float(draws.mean())
    se = float(draws.std(ddof=1) / np.sqrt(n_mc))
    return (est, se) if return_se else est
