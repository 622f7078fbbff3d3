"""Command line entry point: ``fpca-predict <subcommand> ...``."""

import argparse
import csv
import json
import logging
import sys
import warnings

import numpy as np

from ..artifact import load_model, save_model
from ..data import Grid, load_csv, write_csv
from ..errors import FpcaError
from ..flm import fit_flm, response_predictive_batch, sigma_y_estimate, uniformity_diagnostic, wasserstein_discrepancy
from ..kernels import Kernel
from ..predictive import blup_scores_batch, pointwise_band
from ..predictive import FunctionalGaussian
from ..smoothing import Bandwidths, default_bandwidths
from ..spectral import fit_fpca
from . import experiments as ex
from .simulate import FIGURE1_CONFIG, PAPER_TABLE_CONFIG, SimConfig, simulate_dataset

log = logging.getLogger("fpca_predict")

FIT_KEYS = {"bandwidths", "kernel", "K", "fve_threshold", "grid_size", "max_components", "schema"}


def _read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _sim_config(args, default):
    cfg = SimConfig.from_json(args.config) if args.config else default
    if args.seed is not None:
        cfg = cfg.with_(seed=args.seed)
    if getattr(args, "replicates", None) is not None:
        cfg = cfg.with_(replicates=args.replicates)
    return cfg


def _fit_options(path):
    opts = _read_json(path) if path else {}
    unknown = set(opts) - FIT_KEYS
    if unknown:
        raise FpcaError(f"unknown fit config keys: {sorted(unknown)}")
    return opts


def _fit(dataset, opts):
    kernel = Kernel.from_name(opts.get("kernel", "epanechnikov"))
    bw = Bandwidths(**opts["bandwidths"]) if opts.get("bandwidths") else default_bandwidths(dataset)
    grid = Grid.uniform(*dataset.domain, int(opts.get("grid_size", 51)))
    model = fit_fpca(
        dataset, bw, kernel, grid, K=opts.get("K"), fve_threshold=float(opts.get("fve_threshold", 0.95)),
        max_components=opts.get("max_components"),
    )
    return model, bw, kernel


def cmd_simulate(args):
    cfg = _sim_config(args, PAPER_TABLE_CONFIG)
    ds, _ = simulate_dataset(cfg, np.random.default_rng(cfg.seed))
    write_csv(ds, args.out)
    print(f"wrote {len(ds)} subjects to {args.out}")


def cmd_fit(args):
    opts = _fit_options(args.config)
    ds = load_csv(args.data, opts.get("schema"))
    model, bw, kernel = _fit(ds, opts)
    save_model(model, args.out, bw, kernel)
    print(f"K={model.K} sigma2={model.sigma2:.6g} eigenvalues={np.round(model.eigen.eigenvalues[:model.K], 6).tolist()}")


def cmd_predict(args):
    model = load_model(args.model)
    ds = load_csv(args.data, {"domain": list(model.grid.domain)})
    K = args.K or model.K
    means, covs = blup_scores_batch(model, ds, K)
    phi = model.eigen.eigenfunctions[:, :K]
    tg = [format(t, ".6g") for t in model.grid.points]
    header = (["id"] + [f"score_{k + 1}" for k in range(K)] + [f"var_{k + 1}{k + 1}" for k in range(K)]
              + [f"band_lo_{t}" for t in tg] + [f"band_hi_{t}" for t in tg])
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for sid, m, c in zip(ds.ids, means, covs):
            kern = phi @ c @ phi.T
            fg = FunctionalGaussian(model.grid, phi @ m, 0.5 * (kern + kern.T))
            lo, hi = pointwise_band(fg, args.level, model.mean.values)
            w.writerow([sid] + [repr(float(v)) for v in np.concatenate([m, np.diag(c), lo, hi])])
    print(f"wrote predictions for {len(ds)} subjects to {args.out}")


def cmd_flm(args):
    opts = _fit_options(args.config)
    if args.model:
        model = load_model(args.model)
        ds = load_csv(args.data, {**opts.get("schema", {}), "domain": list(model.grid.domain)})
        h = default_bandwidths(ds).h
    else:
        ds = load_csv(args.data, opts.get("schema"))
        model, bw, _ = _fit(ds, opts)
        h = bw.h
    if ds.responses is None:
        raise FpcaError("the data file has no response column")
    K = args.K or model.K
    flm = fit_flm(model, ds, M=K, h=h)
    with warnings.catch_warnings(record=True):
        warnings.simplefilter("always")
        s2 = sigma_y_estimate(flm, ds.response_vector())
        total, err, spread = wasserstein_discrepancy(flm, model, ds, K=K, return_terms=True)
        uw = uniformity_diagnostic(flm, model, ds, K=K)
    summary = {
        "K": K,
        "beta0": flm.beta0,
        "beta_k": flm.beta_k.tolist(),
        "sigma_k": flm.sigma_k.tolist(),
        "sigma_y2": s2,
        "discrepancy": total,
        "discrepancy_error_term": err,
        "discrepancy_variance_term": spread,
        "uniformity_observed_y": uw,
        "grid": model.grid.points.tolist(),
        "beta_curve": flm.beta_curve.tolist(),
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
    if args.predictions:
        means, var = response_predictive_batch(flm, model, ds, K)
        from scipy import stats

        z = stats.norm.ppf(0.5 + args.level / 2)
        half = z * np.sqrt(var + max(s2, 0.0))
        with open(args.predictions, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id", "mean", "var", "lo", "hi"])
            for row in zip(ds.ids, means, var, means - half, means + half):
                w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
    print(f"D={total:.6g} sigma_y2={s2:.6g}")


def _replicates(args):
    if args.full_scale:
        return ex.FULL_SCALE_REPLICATES
    return args.replicates or ex.DEFAULT_REPLICATES


def cmd_table(args, which):
    base = SimConfig.from_json(args.config) if args.config else PAPER_TABLE_CONFIG
    seed = base.seed if args.seed is None else args.seed
    disc, unif = ex.run_tables(_replicates(args), seed, base, threads=args.threads)
    res = disc if which == 1 else unif
    res.to_csv(args.out, scale=1000.0 if (which == 2 and args.scaled) else 1.0)
    print(f"wrote {len(res.cells)} cells to {args.out}")


def cmd_shrinkage(args):
    cfg = _sim_config(args, FIGURE1_CONFIG)
    model = None
    if not args.oracle:
        fit_cfg = cfg.with_(design="continuous", m0=10)
        ds, _ = simulate_dataset(fit_cfg, np.random.default_rng([cfg.seed, 99]))
        model = fit_fpca(ds, grid=Grid.uniform(*cfg.domain, 101), K=2)
    res = ex.run_shrinkage_figure(cfg, seed=cfg.seed, model=model)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["density", "draw", "kind", "x", "y"])
        for d, j, kind, x, y in res.rows():
            w.writerow([d, j, kind, repr(float(x)), repr(float(y))])
    print(" ".join(f"area[n_i={d}]={res.mean_area(d):.4g}" for d in res.densities))


def cmd_rates(args):
    cfg = SimConfig.from_json(args.config) if args.config else None
    m_list = [int(v) for v in args.m_list.split(",")]
    res = ex.run_rate_study(args.quantity, m_list, args.replicates or 200, args.seed or 0, cfg)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(res.to_dict(), fh, indent=2)
    print(f"{args.quantity}: slope {res.slope:.4f}")


def build_parser():
    p = argparse.ArgumentParser(prog="fpca-predict", description="Predictive distributions for sparse functional data.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_, *flags):
        sp = sub.add_parser(name, help=help_)
        for f in flags:
            if f == "config":
                sp.add_argument("--config", help="JSON configuration file")
            elif f == "data":
                sp.add_argument("--data", required=True, help="CSV with id,time,value[,y]")
            elif f == "out":
                sp.add_argument("--out", required=True)
            elif f == "seed":
                sp.add_argument("--seed", type=int)
            elif f == "replicates":
                sp.add_argument("--replicates", type=int)
            elif f == "threads":
                sp.add_argument("--threads", type=int, help=f"worker processes (overridden by {ex.THREADS_ENV})")
            elif f == "full-scale":
                sp.add_argument("--full-scale", action="store_true", help=f"{ex.FULL_SCALE_REPLICATES} replicates")
            elif f == "oracle":
                sp.add_argument("--oracle", action="store_true", help="use the true model instead of an estimate")
            elif f == "K":
                sp.add_argument("--K", type=int)
            elif f == "level":
                sp.add_argument("--level", type=float, default=0.95)
        return sp

    add("simulate", "simulate a sparse dataset", "config", "out", "seed")
    add("fit", "fit an FPCA model", "config", "data", "out")
    sp = add("predict", "per-subject score laws and bands", "data", "out", "K", "level")
    sp.add_argument("--model", required=True)
    sp = add("flm", "functional linear model and discrepancy", "config", "data", "out", "K", "level")
    sp.add_argument("--model")
    sp.add_argument("--predictions", help="optional per-subject response interval CSV")
    add("table1", "discrepancy table", "config", "out", "seed", "replicates", "threads", "full-scale")
    sp = add("table2", "uniformity table", "config", "out", "seed", "replicates", "threads", "full-scale")
    sp.add_argument("--scaled", action="store_true", help="report values times 1000")
    add("shrinkage", "score contour data", "config", "out", "seed", "oracle")
    sp = add("rates", "oracle rate study", "config", "out", "seed", "replicates", "oracle")
    sp.add_argument("--quantity", required=True, choices=ex.RATE_QUANTITIES)
    sp.add_argument("--m-list", default="10,20,40,80,160")
    return p


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "flm": cmd_flm,
    "table1": lambda a: cmd_table(a, 1),
    "table2": lambda a: cmd_table(a, 2),
    "shrinkage": cmd_shrinkage,
    "rates": cmd_rates,
}


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        COMMANDS[args.command](args)
    except (FpcaError, ValueError, OSError, json.JSONDecodeError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(cli_main())
