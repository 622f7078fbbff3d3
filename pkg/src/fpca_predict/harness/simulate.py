"""Finite-rank Gaussian process simulator with a known generative truth."""

import json
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional

import numpy as np

from ..data import Grid, SparseFunctionalDataset, SubjectRecord
from ..errors import FpcaError
from ..smoothing import CovarianceSurface, MeanFunction
from ..spectral import EigenSystem, FittedFpcaModel

BASES = ("paper5", "paper_fig1", "brownian")
MEANS = ("half_t", "t_plus_sin", "zero")
DESIGNS = ("fixed", "random", "continuous")


def paper_eigenvalues(k):
    return [4.0 / (1 + j) ** 2 for j in range(1, k + 1)]


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings; JSON keys mirror the field names.

    ``design`` is ``fixed`` (m0 distinct points drawn without replacement
    from ``time_grid_size`` equispaced points), ``random`` (a uniform count
    in 2..m0, same grid draw) or ``continuous`` (m0 uniform times).
    """

    basis: str = "paper5"
    K_true: int = 4
    eigenvalues: Optional[tuple] = None
    mean: str = "half_t"
    sigma: float = 0.5
    sigma_y: float = 0.5
    beta0: float = 0.5
    beta: tuple = (1.0, -1.0, 0.5, -0.5)
    n: int = 500
    design: str = "fixed"
    m0: int = 2
    time_grid_size: int = 100
    grid_size: int = 51
    domain: Optional[tuple] = None
    seed: int = 0
    replicates: int = 200

    def __post_init__(self):
        if self.basis not in BASES:
            raise FpcaError(f"unknown basis {self.basis!r}")
        if self.mean not in MEANS:
            raise FpcaError(f"unknown mean {self.mean!r}")
        if self.design not in DESIGNS:
            raise FpcaError(f"unknown design {self.design!r}")
        if self.basis == "paper_fig1" and self.K_true > 2:
            # the cosine/sine pair stops being orthogonal beyond two terms
            raise FpcaError("the paper_fig1 basis has at most two components")
        lam = self.eigenvalues
        if lam is None:
            if self.basis == "brownian":
                lam = [4 / (np.pi**2 * (2 * m - 1) ** 2) for m in range(1, self.K_true + 1)]
            else:
                lam = paper_eigenvalues(self.K_true)
        lam = tuple(float(v) for v in lam)
        if len(lam) != self.K_true or any(v <= 0 for v in lam) or any(np.diff(lam) >= 0):
            raise FpcaError("eigenvalues must be K_true positive strictly decreasing values")
        beta = tuple(float(v) for v in self.beta)
        if len(beta) < self.K_true:
            beta = beta + (0.0,) * (self.K_true - len(beta))
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "beta", beta[: self.K_true])
        if self.domain is None:
            object.__setattr__(self, "domain", (0.0, 1.0) if self.basis == "brownian" else (0.0, 10.0))
        else:
            object.__setattr__(self, "domain", tuple(float(v) for v in self.domain))
        if self.m0 < 1:
            raise FpcaError("m0 must be at least 1")
        if self.design != "continuous" and self.m0 > self.time_grid_size:
            raise FpcaError(f"m0={self.m0} exceeds the {self.time_grid_size}-point sampling grid")
        if self.replicates < 1 or self.n < 1:
            raise FpcaError("n and replicates must be positive")
        if self.sigma < 0 or self.sigma_y < 0:
            raise FpcaError("noise levels must be nonnegative")

    # generative truth

    def phi(self, t) -> np.ndarray:
        """True eigenfunctions at times ``t`` (``len(t) x K_true``)."""
        t = np.asarray(t, dtype=float).ravel()
        a, b = self.domain
        length = b - a
        u = t - a
        cols = []
        for k in range(1, self.K_true + 1):
            if self.basis == "brownian":
                cols.append(np.sqrt(2 / length) * np.sin((2 * k - 1) * np.pi * u / (2 * length)))
            elif k == 1:
                cols.append(-np.cos(np.pi * u / length) * np.sqrt(2 / length))
            elif self.basis == "paper5":
                cols.append(np.sin((2 * k - 3) * np.pi * u / length) * np.sqrt(2 / length))
            else:
                cols.append(np.sin((k - 1) * np.pi * u / length) * np.sqrt(2 / length))
        return np.column_stack(cols)

    def mu(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.mean == "half_t":
            return t / 2
        if self.mean == "t_plus_sin":
            return t + np.sin(t)
        return np.zeros_like(t)

    def sample_times(self, rng, m=None) -> np.ndarray:
        m = self.m0 if m is None else int(m)
        a, b = self.domain
        if self.design == "continuous":
            return np.sort(rng.uniform(a, b, size=m))
        if self.design == "random":
            m = int(rng.integers(2 if self.m0 >= 2 else 1, self.m0 + 1))
        if m > self.time_grid_size:
            raise FpcaError(f"cannot draw {m} distinct points from a {self.time_grid_size}-point grid")
        pts = np.linspace(a, b, self.time_grid_size)
        return np.sort(rng.choice(pts, size=m, replace=False))

    def sample_times_batch(self, rng, n: int) -> np.ndarray:
        """``n x m0`` sorted design times for the fixed and continuous designs."""
        a, b = self.domain
        if self.design == "continuous":
            return np.sort(rng.uniform(a, b, size=(n, self.m0)), axis=1)
        if self.design != "fixed":
            raise FpcaError("batch sampling needs a fixed-size design")
        pts = np.linspace(a, b, self.time_grid_size)
        pick = np.argsort(rng.random((n, self.time_grid_size)), axis=1)[:, : self.m0]
        return pts[np.sort(pick, axis=1)]

    @property
    def total_response_variance(self) -> float:
        lam = np.asarray(self.eigenvalues)
        return float(np.sum(lam * np.asarray(self.beta) ** 2) + self.sigma_y**2)

    def estimation_grid(self) -> Grid:
        return Grid.uniform(*self.domain, self.grid_size)

    def oracle_model(self, grid: Optional[Grid] = None) -> FittedFpcaModel:
        """FPCA model holding the true mean, covariance and eigenpairs."""
        grid = grid or self.estimation_grid()
        phi = self.phi(grid.points)
        lam = np.asarray(self.eigenvalues)
        cov = CovarianceSurface(grid, (phi * lam) @ phi.T, self.sigma**2)
        eigen = EigenSystem(grid, lam, phi)
        return FittedFpcaModel(MeanFunction(grid, self.mu(grid.points)), cov, eigen, self.K_true)

    # serialization

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise FpcaError(f"unknown config keys: {sorted(unknown)}")
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})

    @classmethod
    def from_json(cls, path) -> "SimConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def with_(self, **changes) -> "SimConfig":
        return replace(self, **changes)


PAPER_TABLE_CONFIG = SimConfig()
FIGURE1_CONFIG = SimConfig(basis="paper_fig1", K_true=2, mean="t_plus_sin", sigma=0.5, design="continuous", beta=(1.0, -1.0))


def _group_by_length(arrays):
    groups = {}
    for i, a in enumerate(arrays):
        groups.setdefault(len(a), []).append(i)
    return groups


@dataclass(frozen=True)
class Truth:
    scores: np.ndarray  # n x K_true
    eta: np.ndarray  # noiseless linear predictor
    responses: np.ndarray
    grid: Grid
    paths: Optional[np.ndarray] = field(default=None, repr=False)  # n x grid, centered


def simulate_dataset(config: SimConfig, rng, keep_paths: bool = False):
    """Draw one dataset together with the latent truth.

    Returns
    -------
    dataset : SparseFunctionalDataset
        Noisy sparse observations with responses attached.
    truth : Truth
        Scores, linear predictors, responses and (optionally) centered paths
        on the estimation grid.
    """
    rng = np.random.default_rng(rng)
    lam = np.asarray(config.eigenvalues)
    beta = np.asarray(config.beta)
    n = config.n
    scores = rng.standard_normal((n, config.K_true)) * np.sqrt(lam)
    if config.design == "random":
        times = [config.sample_times(rng) for _ in range(n)]
    else:
        times = config.sample_times_batch(rng, n)
    subjects = []
    for m, idx in _group_by_length(times).items():
        T = np.stack([times[i] for i in idx])
        phi = config.phi(T.ravel()).reshape(len(idx), m, -1)
        X = config.mu(T) + np.einsum("imk,ik->im", phi, scores[idx])
        X += config.sigma * rng.standard_normal(X.shape)
        for row, i in enumerate(idx):
            subjects.append((i, SubjectRecord(str(i), T[row], X[row])))
    subjects = [s for _, s in sorted(subjects, key=lambda p: p[0])]
    eta = config.beta0 + scores @ beta
    y = eta + config.sigma_y * rng.standard_normal(n)
    ids = [s.id for s in subjects]
    dataset = SparseFunctionalDataset(subjects, config.domain, dict(zip(ids, y)))
    grid = config.estimation_grid()
    paths = scores @ config.phi(grid.points).T if keep_paths else None
    return dataset, Truth(scores, eta, y, grid, paths)
