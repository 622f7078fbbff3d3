"""Time the local-linear smoothers under the numba and numpy backends.

Usage::

    python benchmarks/bench_kernels.py [--repeat 3] [--n 2000] [--m0 8]

Each backend fits the mean and covariance surfaces of one simulated
dataset; the numba timings exclude the first (compiling) call.
"""

import argparse
import time
import warnings

import numpy as np

from fpca_predict import _accel
from fpca_predict.harness.simulate import SimConfig, simulate_dataset
from fpca_predict.smoothing import default_bandwidths, estimate_covariance, estimate_mean


def run_once(ds, grid, bw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        mu = estimate_mean(ds, bw.h_mu, grid=grid)
        cov = estimate_covariance(ds, mu, bw.h_G)
    return mu.values, cov.values


def best_time(ds, grid, bw, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = run_once(ds, grid, bw)
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--m0", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    cfg = SimConfig(n=args.n, m0=args.m0)
    ds, _ = simulate_dataset(cfg, np.random.default_rng(args.seed))
    grid = cfg.estimation_grid()
    bw = default_bandwidths(ds)

    results = {}
    for name, flag in (("numba", True), ("numpy", False)):
        previous = _accel.use_numba(flag)
        try:
            if flag:
                run_once(ds, grid, bw)  # compile
            results[name] = best_time(ds, grid, bw, args.repeat)
        finally:
            _accel.use_numba(previous)

    (t_nb, (mu_nb, cov_nb)), (t_np, (mu_np, cov_np)) = results["numba"], results["numpy"]
    print(f"dataset: n={args.n} m0={args.m0} grid={len(grid)} bandwidths={bw}")
    print(f"numba  {t_nb:8.3f} s")
    print(f"numpy  {t_np:8.3f} s  ({t_np / t_nb:.1f}x slower)")
    print(f"max |difference|: mean {np.abs(mu_nb - mu_np).max():.2e}, covariance {np.abs(cov_nb - cov_np).max():.2e}")


if __name__ == "__main__":
    main()
