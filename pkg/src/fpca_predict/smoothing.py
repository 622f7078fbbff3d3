"""Local-linear estimators of the mean, covariance surface, noise variance
and predictor/response cross-covariance for sparse functional data.

All pooled estimators use equal subject weights, which for these
estimators reduce to one common weight per observation (or per raw
covariance pair) and therefore drop out of the local fits.
"""

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .data import Grid, SparseFunctionalDataset
from .errors import EstimationError
from .kernels import Kernel, local_linear_1d, local_linear_2d

MAX_DOUBLINGS = 3
SIGMA2_INTERIOR = 0.25


class SmoothingWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Bandwidths:
    h_mu: float
    h_G: float
    h: float

    def __post_init__(self):
        for name in ("h_mu", "h_G", "h"):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v <= 0:
                raise ValueError(f"bandwidth {name} must be positive, got {v}")
            object.__setattr__(self, name, v)

    def check_domain(self, domain):
        half = (domain[1] - domain[0]) / 2
        for name in ("h_mu", "h_G", "h"):
            if getattr(self, name) >= half:
                raise ValueError(f"bandwidth {name}={getattr(self, name)} is not below half the domain width")
        return self


# Multipliers on the rate-based defaults; the rates alone fix only the order.
RATE_CONSTANTS = (0.3, 0.9, 0.2)
RATE_EXPONENTS = (1 / 5, 1 / 4, 1 / 3)


def effective_sizes(dataset: SparseFunctionalDataset):
    """Subject-equivalent sample sizes for the 1-D and 2-D smoothers.

    A subject with two observations counts once in both, so for the
    sparsest designs these reduce to the number of subjects. Denser designs
    contribute more pooled points and raw covariance pairs.
    """
    counts = dataset.counts().astype(float)
    n_1d = max(counts.sum() / 2, 2.0)
    n_2d = max((counts * (counts - 1)).sum() / 2, 2.0)
    return n_1d, n_2d


def resolution_floor(dataset: SparseFunctionalDataset) -> float:
    """Smallest bandwidth whose windows reach three distinct design times:
    twice the largest gap between consecutive pooled times."""
    t = np.unique(dataset.pooled()[0])
    return 2.0 * float(np.diff(t).max()) * (1 + 1e-9) if t.size > 1 else 0.0


def default_bandwidths(dataset: SparseFunctionalDataset, constants: Sequence[float] = RATE_CONSTANTS) -> Bandwidths:
    """Rate-based bandwidths ``c * (b - a) * N**-r``.

    Rates are r = 1/5 (mean), 1/4 (covariance) and 1/3 (cross-covariance),
    with ``N`` from :func:`effective_sizes`. Each is raised to
    :func:`resolution_floor` so windows never fall between design points.
    """
    a, b = dataset.domain
    n_1d, n_2d = effective_sizes(dataset)
    c_mu, c_g, c_h = constants
    r_mu, r_g, r_h = RATE_EXPONENTS
    floor = resolution_floor(dataset)
    return Bandwidths(
        h_mu=max(c_mu * (b - a) * n_1d ** (-r_mu), floor),
        h_G=max(c_g * (b - a) * n_2d ** (-r_g), floor),
        h=max(c_h * (b - a) * n_1d ** (-r_h), floor),
    )


@dataclass(frozen=True)
class MeanFunction:
    grid: Grid
    values: np.ndarray

    def __call__(self, t):
        return np.interp(t, self.grid.points, self.values)


@dataclass(frozen=True)
class CovarianceSurface:
    grid: Grid
    values: np.ndarray
    sigma2: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(self.grid), len(self.grid)):
            raise ValueError("covariance surface must be grid x grid")
        if not np.allclose(v, v.T, rtol=0, atol=1e-10 * max(1.0, np.abs(v).max())):
            raise ValueError("covariance surface is not symmetric")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be nonnegative")


@dataclass(frozen=True)
class CrossCovariance:
    grid: Grid
    values: np.ndarray


def _collapse_1d(x, y):
    """Unique sorted locations, their counts and mean responses."""
    loc, inv = np.unique(x, return_inverse=True)
    w = np.bincount(inv, minlength=loc.size).astype(float)
    ybar = np.bincount(inv, weights=y, minlength=loc.size) / w
    return loc, w, ybar


def _collapse_2d(s, t, y, levels=None):
    """Collapse pairs to unique ``(s, t)`` locations; ``levels`` may supply
    the sorted set of distinct coordinate values."""
    if levels is None:
        su, si = np.unique(s, return_inverse=True)
        tu, ti = np.unique(t, return_inverse=True)
    else:
        su = tu = levels
        si, ti = np.searchsorted(levels, s), np.searchsorted(levels, t)
    code = si.astype(np.int64) * tu.size + ti
    if su.size * tu.size <= 4 * code.size + 1_000_000:
        w = np.bincount(code, minlength=su.size * tu.size).astype(float)
        codes = np.flatnonzero(w)
        w = w[codes]
        ybar = np.bincount(code, weights=y, minlength=su.size * tu.size)[codes] / w
    else:
        codes, inv = np.unique(code, return_inverse=True)
        w = np.bincount(inv, minlength=codes.size).astype(float)
        ybar = np.bincount(inv, weights=y, minlength=codes.size) / w
    # codes ascend, hence sorted by s first
    return su[codes // tu.size], tu[codes % tu.size], w, ybar


def _check_fit(est, used, h, where, label):
    bad = ~np.isfinite(est)
    if bad.any():
        first = np.asarray(where)[tuple(np.argwhere(bad)[0])]
        raise EstimationError(
            f"{label}: local-linear fit singular at t={tuple(np.round(first, 6))} even after widening h={h:g}"
        )
    widened = used > h * (1 + 1e-12)
    if widened.any():
        warnings.warn(
            f"{label}: bandwidth widened at {int(widened.sum())} of {widened.size} points",
            SmoothingWarning,
            stacklevel=3,
        )


def smooth_1d(x, y, xout, h, kernel=Kernel.EPANECHNIKOV, label="smoother", max_doublings=MAX_DOUBLINGS):
    loc, w, ybar = _collapse_1d(np.asarray(x, float), np.asarray(y, float))
    if loc.size < 2:
        raise EstimationError(f"{label}: fewer than 2 distinct observation times")
    est, used = local_linear_1d(loc, ybar, w, xout, h, kernel, max_doublings)
    _check_fit(est, used, h, np.asarray(xout)[:, None], label)
    return est


def estimate_mean(dataset: SparseFunctionalDataset, h_mu: float, kernel=Kernel.EPANECHNIKOV, grid: Optional[Grid] = None) -> MeanFunction:
    """Pooled local-linear mean function evaluated on ``grid``."""
    if h_mu <= 0:
        raise ValueError("h_mu must be positive")
    grid = grid or Grid.uniform(*dataset.domain)
    t, x, _ = dataset.pooled()
    return MeanFunction(grid, smooth_1d(t, x, grid.points, h_mu, kernel, label="mean"))


def raw_covariances(dataset: SparseFunctionalDataset, mean: MeanFunction, min_obs: int = 2):
    """Off-diagonal residual products and diagonal squared residuals.

    Returns ``(s, t, c)`` over ordered pairs ``j != l`` of subjects with at
    least ``min_obs`` observations, and ``(t, r2)`` over all observations.
    """
    ss, ts, cs = [], [], []
    dt, dr = [], []
    by_count = {}
    for subj in dataset.subjects:
        by_count.setdefault(subj.n_obs, []).append(subj)
    for m, group in by_count.items():
        T = np.stack([g.times for g in group])
        R = np.stack([g.values for g in group]) - mean(T)
        dt.append(T.ravel())
        dr.append((R * R).ravel())
        if m < min_obs or m < 2:
            continue
        j, l = np.nonzero(~np.eye(m, dtype=bool))
        ss.append(T[:, j].ravel())
        ts.append(T[:, l].ravel())
        cs.append((R[:, j] * R[:, l]).ravel())
    if not ss:
        raise EstimationError("covariance estimation needs at least one subject with 2 or more observations")
    return (np.concatenate(ss), np.concatenate(ts), np.concatenate(cs)), (np.concatenate(dt), np.concatenate(dr))


def estimate_covariance(dataset: SparseFunctionalDataset, mean: MeanFunction, h_G: float, kernel=Kernel.EPANECHNIKOV) -> CovarianceSurface:
    """Smoothed covariance surface and measurement-error variance.

    The surface is fitted to off-diagonal raw covariances only. The noise
    variance is the average, over the middle half of the domain, of the
    smoothed diagonal raw products minus the surface diagonal, clipped at 0.
    """
    if h_G <= 0:
        raise ValueError("h_G must be positive")
    grid = mean.grid
    (s, t, c), (td, r2) = raw_covariances(dataset, mean)
    su, tu, w, cbar = _collapse_2d(s, t, c, levels=np.unique(td))
    g = grid.points
    est, used = local_linear_2d(su, tu, w, cbar, g, g, h_G, kernel, MAX_DOUBLINGS)
    where = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1)
    _check_fit(est, used, h_G, where, "covariance")
    gamma = 0.5 * (est + est.T)

    diag_var = smooth_1d(td, r2, g, h_G, kernel, label="variance")
    a, b = grid.domain
    lo, hi = a + SIGMA2_INTERIOR * (b - a), b - SIGMA2_INTERIOR * (b - a)
    inner = (g >= lo) & (g <= hi)
    sigma2 = float(np.mean(diag_var[inner] - np.diag(gamma)[inner]))
    if sigma2 < 0:
        warnings.warn(f"noise variance estimate {sigma2:.3g} clipped at 0", SmoothingWarning, stacklevel=2)
        sigma2 = 0.0
    return CovarianceSurface(grid, gamma, sigma2)


def _response_array(dataset, responses):
    if responses is None:
        return dataset.response_vector()
    if isinstance(responses, dict):
        return np.array([responses.get(i, np.nan) for i in dataset.ids], dtype=float)
    y = np.asarray(responses, dtype=float).ravel()
    if y.size != len(dataset):
        raise ValueError("responses must have one entry per subject")
    return y


def raw_cross_products(dataset: SparseFunctionalDataset, y: np.ndarray, mean: MeanFunction):
    keep = np.isfinite(y)
    if not keep.any():
        raise EstimationError("no subject has a response")
    if not keep.all():
        warnings.warn(f"{int((~keep).sum())} subjects without responses excluded", SmoothingWarning, stacklevel=3)
    t, x, idx = dataset.pooled()
    sel = keep[idx]
    t, x, idx = t[sel], x[sel], idx[sel]
    return t, (x - mean(t)) * y[idx]


def estimate_cross_covariance(dataset: SparseFunctionalDataset, responses, mean: MeanFunction, h: float, kernel=Kernel.EPANECHNIKOV) -> CrossCovariance:
    """Local-linear smooth of ``(X_ij - mean(T_ij)) * Y_i`` over pooled times."""
    if h <= 0:
        raise ValueError("h must be positive")
    y = _response_array(dataset, responses)
    t, c = raw_cross_products(dataset, y, mean)
    return CrossCovariance(mean.grid, smooth_1d(t, c, mean.grid.points, h, kernel, label="cross-covariance"))


def _loo_1d(t, v, idx, h, kernel):
    """Subject-wise leave-one-out squared error of a 1-D smoother."""
    loc, inv = np.unique(t, return_inverse=True)
    w_all = np.bincount(inv, minlength=loc.size).astype(float)
    wy_all = np.bincount(inv, weights=v, minlength=loc.size)
    err = 0.0
    count = 0
    for i in np.unique(idx):
        mine = idx == i
        w = w_all - np.bincount(inv[mine], minlength=loc.size)
        wy = wy_all - np.bincount(inv[mine], weights=v[mine], minlength=loc.size)
        keep = w > 0.5
        pred, _ = local_linear_1d(loc[keep], wy[keep] / w[keep], w[keep], t[mine], h, kernel, 0)
        if not np.all(np.isfinite(pred)):
            return np.inf
        err += float(np.sum((v[mine] - pred) ** 2))
        count += int(mine.sum())
    return err / count


def _loo_2d(s, t, c, idx, h, kernel):
    su, si = np.unique(s, return_inverse=True)
    tu, ti = np.unique(t, return_inverse=True)
    code = si.astype(np.int64) * tu.size + ti
    codes, inv = np.unique(code, return_inverse=True)
    ps, pt = su[codes // tu.size], tu[codes % tu.size]
    w_all = np.bincount(inv, minlength=codes.size).astype(float)
    wy_all = np.bincount(inv, weights=c, minlength=codes.size)
    err = 0.0
    count = 0
    for i in np.unique(idx):
        mine = idx == i
        w = w_all - np.bincount(inv[mine], minlength=codes.size)
        wy = wy_all - np.bincount(inv[mine], weights=c[mine], minlength=codes.size)
        keep = w > 0.5
        for a, b, target in zip(s[mine], t[mine], c[mine]):
            pred, _ = local_linear_2d(ps[keep], pt[keep], w[keep], wy[keep] / w[keep], [a], [b], h, kernel, 0)
            if not np.isfinite(pred[0, 0]):
                return np.inf
            err += (target - pred[0, 0]) ** 2
            count += 1
    return err / count


def select_bandwidth_cv(
    dataset: SparseFunctionalDataset,
    candidates: Sequence[float],
    target: str = "mean",
    kernel=Kernel.EPANECHNIKOV,
    mean: Optional[MeanFunction] = None,
    responses=None,
    return_scores: bool = False,
):
    """Pick the bandwidth with the lowest subject-wise leave-one-out error.

    ``target`` is one of ``"mean"``, ``"covariance"`` or ``"cross"``; the
    latter two need a fitted ``mean``. No window widening is applied while
    scoring, so a candidate leaving any held-out point without support is
    treated as degenerate. Ties go to the smaller bandwidth.
    """
    cands = [float(h) for h in candidates]
    if not cands or any(h <= 0 for h in cands):
        raise ValueError("candidates must be positive bandwidths")
    if len(cands) == 1:
        return (cands[0], [np.nan]) if return_scores else cands[0]
    if len(dataset) < 10:
        raise ValueError("cross-validation needs at least 10 subjects")
    if target not in ("mean", "covariance", "cross"):
        raise ValueError(f"unknown target {target!r}")
    if target != "mean" and mean is None:
        raise ValueError(f"target {target!r} requires a fitted mean")

    if target == "mean":
        t, x, idx = dataset.pooled()
        score = lambda h: _loo_1d(t, x, idx, h, kernel)  # noqa: E731
    elif target == "cross":
        y = _response_array(dataset, responses)
        keep = np.isfinite(y)
        t_all, x_all, idx_all = dataset.pooled()
        sel = keep[idx_all]
        t, idx = t_all[sel], idx_all[sel]
        v = (x_all[sel] - mean(t)) * y[idx]
        score = lambda h: _loo_1d(t, v, idx, h, kernel)  # noqa: E731
    else:
        ss, ts, cs, ids = [], [], [], []
        for i, subj in enumerate(dataset.subjects):
            m = subj.n_obs
            if m < 2:
                continue
            r = subj.values - mean(subj.times)
            j, l = np.nonzero(~np.eye(m, dtype=bool))
            ss.append(subj.times[j])
            ts.append(subj.times[l])
            cs.append(r[j] * r[l])
            ids.append(np.full(j.size, i))
        s, t, c, idx = map(np.concatenate, (ss, ts, cs, ids))
        score = lambda h: _loo_2d(s, t, c, idx, h, kernel)  # noqa: E731

    scores = np.array([score(h) for h in cands])
    if not np.isfinite(scores).any():
        raise EstimationError("every bandwidth candidate is degenerate")
    order = sorted(range(len(cands)), key=lambda k: (scores[k], cands[k]))
    best = cands[order[0]]
    return (best, scores) if return_scores else best
