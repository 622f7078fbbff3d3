"""Monte Carlo drivers for the discrepancy tables, the contour-shrinkage
figure and the oracle rate studies.

Every replicate draws from its own stream ``SeedSequence([seed, cell, rep])``
so results do not depend on how replicates are scheduled across workers.
"""

import logging
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..data import Grid, SubjectRecord
from ..errors import FpcaError
from ..flm import fit_flm, predictive_probabilities, response_predictive_batch
from ..predictive import blup_scores, contour_ellipse, ellipse_area, functional_predictive_distribution
from ..smoothing import default_bandwidths
from ..spectral import fit_fpca
from ..wasserstein import uniformity_statistic, w2_gaussian_to_atom
from .simulate import FIGURE1_CONFIG, PAPER_TABLE_CONFIG, SimConfig, simulate_dataset

log = logging.getLogger(__name__)

DESIGNS = (("very_sparse", 2), ("medium", 8), ("dense", 20))
NOISE_LEVELS = ((0.5, 0.5), (0.5, 1.0), (1.0, 0.5))
SAMPLE_SIZES = (500, 2000)
DEFAULT_REPLICATES = 200
FULL_SCALE_REPLICATES = 2000
MAX_FAIL_FRACTION = 0.05
THREADS_ENV = "FPCA_PREDICT_THREADS"


def replicate_rng(seed: int, cell: int, rep: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(cell), int(rep)]))


def worker_count(threads: Optional[int] = None) -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        threads = int(env)
    return max(1, int(threads or 1))


def _fmt(x: float) -> str:
    return "nan" if not np.isfinite(x) else format(float(x), ".10g")


@dataclass
class ExperimentResult:
    """Per-cell replicate means with Monte Carlo standard errors."""

    cells: list = field(default_factory=list)
    means: list = field(default_factory=list)
    ses: list = field(default_factory=list)
    n_reps: list = field(default_factory=list)
    fail_counts: list = field(default_factory=list)

    def add(self, label: str, values: Sequence[float], n_failed: int) -> None:
        vals = np.asarray(values, dtype=float)
        total = vals.size + n_failed
        ok = total > 0 and n_failed <= MAX_FAIL_FRACTION * total and vals.size > 0
        self.cells.append(label)
        self.means.append(float(vals.mean()) if ok else float("nan"))
        self.ses.append(float(vals.std(ddof=1) / np.sqrt(vals.size)) if ok and vals.size > 1 else float("nan"))
        self.n_reps.append(int(vals.size))
        self.fail_counts.append(int(n_failed))

    def __getitem__(self, label: str) -> float:
        return self.means[self.cells.index(label)]

    def se(self, label: str) -> float:
        return self.ses[self.cells.index(label)]

    def to_csv(self, path, scale: float = 1.0) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("cell,mean,se,n_rep,fail_count\n")
            for c, m, s, n, f in zip(self.cells, self.means, self.ses, self.n_reps, self.fail_counts):
                fh.write(f"{c},{_fmt(m * scale)},{_fmt(s * scale)},{n},{f}\n")


def cell_label(sigma: float, sigma_y: float, m0: int, n: int) -> str:
    name = dict((m, d) for d, m in DESIGNS).get(m0, f"m0={m0}")
    return f"sigma={sigma:g}|sigma_y={sigma_y:g}|{name}|n={n}"


def table_cells(base: SimConfig = PAPER_TABLE_CONFIG, noise=NOISE_LEVELS, designs=DESIGNS, sizes=SAMPLE_SIZES):
    """Ordered ``(label, config)`` pairs spanning the table grid."""
    out = []
    for sigma, sigma_y in noise:
        for _, m0 in designs:
            for n in sizes:
                cfg = base.with_(sigma=sigma, sigma_y=sigma_y, m0=m0, n=n, design="fixed")
                out.append((cell_label(sigma, sigma_y, m0, n), cfg))
    return out


def table_replicate(config: SimConfig, rng, K: int = 4):
    """One full pipeline pass: returns (discrepancy, uniformity statistic)."""
    ds, truth = simulate_dataset(config, rng)
    bw = default_bandwidths(ds)
    model = fit_fpca(ds, bw, grid=config.estimation_grid(), K=K)
    flm = fit_flm(model, ds, M=K, h=bw.h)
    means, var = response_predictive_batch(flm, model, ds, K)
    disc = float(np.mean((truth.responses - means) ** 2) + np.mean(var))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        probs = predictive_probabilities(means, var, truth.eta)
    return disc, uniformity_statistic(probs)


def _run_task(task):
    cfg_dict, seed, cell, rep, K = task
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            return table_replicate(SimConfig.from_dict(cfg_dict), replicate_rng(seed, cell, rep), K)
        except (FpcaError, np.linalg.LinAlgError, ValueError) as exc:
            log.debug("cell %d replicate %d failed: %s", cell, rep, exc)
            return None


def run_tables(
    replicates: int = DEFAULT_REPLICATES,
    seed: int = 0,
    base: SimConfig = PAPER_TABLE_CONFIG,
    threads: Optional[int] = None,
    noise=NOISE_LEVELS,
    K: int = 4,
    designs=DESIGNS,
    sizes=SAMPLE_SIZES,
):
    """Discrepancy and uniformity tables from a single fit per replicate.

    Returns
    -------
    (ExperimentResult, ExperimentResult)
        Replicate means of the discrepancy and of the (unscaled) uniformity
        statistic.
    """
    if replicates < 1:
        raise ValueError("replicates must be positive")
    cells = table_cells(base, noise, designs, sizes)
    tasks = [(cfg.to_dict(), seed, c, r, K) for c, (_, cfg) in enumerate(cells) for r in range(replicates)]
    workers = worker_count(threads)
    if workers == 1:
        outputs = [_run_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    disc, unif = ExperimentResult(), ExperimentResult()
    for c, (label, _) in enumerate(cells):
        chunk = outputs[c * replicates : (c + 1) * replicates]
        ok = [o for o in chunk if o is not None]
        failed = len(chunk) - len(ok)
        disc.add(label, [o[0] for o in ok], failed)
        unif.add(label, [o[1] for o in ok], failed)
        log.info("%s: D=%.4f U=%.3g (%d failed)", label, disc.means[-1], unif.means[-1], failed)
    return disc, unif


def run_table1(replicates: int = DEFAULT_REPLICATES, seed: int = 0, **kwargs) -> ExperimentResult:
    return run_tables(replicates, seed, **kwargs)[0]


def run_table2(replicates: int = DEFAULT_REPLICATES, seed: int = 0, **kwargs) -> ExperimentResult:
    return run_tables(replicates, seed, **kwargs)[1]


# contour shrinkage


@dataclass
class ShrinkageResult:
    true_scores: np.ndarray
    densities: tuple
    contours: dict  # density -> list of (n_points x 2) arrays
    centers: dict  # density -> draws x 2
    areas: dict  # density -> draws

    def mean_area(self, density: int) -> float:
        return float(np.mean(self.areas[density]))

    def rows(self):
        """Plot-data rows ``(density, draw, kind, x, y)``."""
        yield from ((0, 0, "truth", *self.true_scores),)
        for d in self.densities:
            for j, (pts, c) in enumerate(zip(self.contours[d], self.centers[d])):
                yield (d, j, "center", c[0], c[1])
                for x, y in pts:
                    yield (d, j, "contour", x, y)


def run_shrinkage_figure(
    config: SimConfig = FIGURE1_CONFIG,
    densities=(2, 10, 50),
    draws: int = 10,
    seed: int = 0,
    level: float = 0.95,
    n_points: int = 100,
    model=None,
) -> ShrinkageResult:
    """Score contours for one latent subject under repeated designs.

    The subject's scores are drawn once; each draw then samples fresh
    observation times and noise at every density. ``model`` defaults to the
    true (oracle) model of ``config``.
    """
    if config.K_true != 2:
        raise ValueError("the shrinkage figure needs a rank-2 truth")
    model = model or config.oracle_model(Grid.uniform(*config.domain, 201))
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0]))
    xi = rng.standard_normal(2) * np.sqrt(np.asarray(config.eigenvalues))
    contours, centers, areas = {}, {}, {}
    for d in densities:
        contours[d], cs, ar = [], [], []
        for j in range(draws):
            r = np.random.default_rng(np.random.SeedSequence([int(seed), int(d), j + 1]))
            t = config.with_(design="continuous", m0=int(d)).sample_times(r)
            x = config.mu(t) + config.phi(t) @ xi + config.sigma * r.standard_normal(t.size)
            sp = blup_scores(model, SubjectRecord("fig", t, x), 2)
            contours[d].append(contour_ellipse(sp, level, n_points))
            cs.append(sp.mean)
            ar.append(ellipse_area(sp, level))
        centers[d], areas[d] = np.array(cs), np.array(ar)
    return ShrinkageResult(xi, tuple(densities), contours, centers, areas)


# oracle rate studies

RATE_QUANTITIES = ("score_error", "sigma_norm", "w2_to_atom")


@dataclass
class RateResult:
    quantity: str
    m: np.ndarray
    medians: np.ndarray
    slope: float
    intercept: float

    def to_dict(self) -> dict:
        return {
            "quantity": self.quantity,
            "m": [int(v) for v in self.m],
            "medians": [float(v) for v in self.medians],
            "slope": float(self.slope),
            "intercept": float(self.intercept),
        }


def loglog_slope(m, values):
    """OLS slope and intercept of ``log(values)`` on ``log(m)``."""
    slope, intercept = np.polyfit(np.log(np.asarray(m, float)), np.log(np.asarray(values, float)), 1)
    return float(slope), float(intercept)


def run_rate_study(
    quantity: str,
    m_list=(10, 20, 40, 80, 160),
    replicates: int = 200,
    seed: int = 0,
    config: Optional[SimConfig] = None,
    K: Optional[int] = None,
    grid_size: int = 401,
) -> RateResult:
    """Per-m medians of an oracle-model quantity and their log-log slope.

    Each replicate draws one subject with ``m`` uniform times and predicts
    with the true mean, eigenpairs and noise variance.
    """
    if quantity not in RATE_QUANTITIES:
        raise ValueError(f"quantity must be one of {RATE_QUANTITIES}")
    m_list = sorted(int(m) for m in m_list)
    if len(m_list) < 4:
        raise ValueError("need at least 4 values of m")
    if m_list[-1] < 10 * m_list[0]:
        raise ValueError("m values must span at least one decade")
    config = (config or PAPER_TABLE_CONFIG).with_(design="continuous")
    K = config.K_true if K is None else int(K)
    model = config.oracle_model(Grid.uniform(*config.domain, grid_size)).with_K(K)
    lam = np.sqrt(np.asarray(config.eigenvalues))
    phi_grid = config.phi(model.grid.points)
    medians = []
    for m in m_list:
        vals = np.empty(replicates)
        for r in range(replicates):
            rng = replicate_rng(seed, m, r)
            xi = rng.standard_normal(config.K_true) * lam
            t = config.sample_times(rng, m)
            x = config.mu(t) + config.phi(t) @ xi + config.sigma * rng.standard_normal(m)
            subj = SubjectRecord(str(r), t, x)
            if quantity == "score_error":
                vals[r] = abs(blup_scores(model, subj, K).mean[0] - xi[0])
            elif quantity == "sigma_norm":
                vals[r] = np.linalg.eigvalsh(blup_scores(model, subj, K).covariance)[-1]
            else:
                fg = functional_predictive_distribution(model, subj, K)
                vals[r] = w2_gaussian_to_atom(fg, phi_grid @ xi)
        medians.append(float(np.median(vals)))
    slope, intercept = loglog_slope(m_list, medians)
    return RateResult(quantity, np.array(m_list), np.array(medians), slope, intercept)
