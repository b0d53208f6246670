"""Compare the compiled and pure-Python coordinate-descent kernels.

Usage: python benchmarks/bench_cd.py [--repeat 3]

Each case solves a warm-started lasso path on a random Gram problem with
both kernels, checks that they agree, and reports the best wall time.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from stvar import _cd_py

try:
    from stvar import _cd
except ImportError:  # extension not built
    _cd = None

CASES = [(40, 30), (40, 120), (100, 200), (60, 400)]


def make_problem(n_obs, n_cols, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n_obs, n_cols))
    beta = np.zeros(n_cols)
    beta[: max(1, n_cols // 10)] = rng.uniform(0.5, 1.5, max(1, n_cols // 10))
    y = x @ beta + 0.5 * rng.standard_normal(n_obs)
    gram = np.ascontiguousarray(x.T @ x / n_obs)
    xty = np.ascontiguousarray(x.T @ y / n_obs)
    lmax = 2 * np.abs(xty).max()
    return gram, xty, lmax * np.geomspace(1, 1e-2, 20)


def run_path(kernel, gram, xty, lams):
    beta = np.zeros(xty.size)
    sweeps = 0
    for lam in lams:
        s, _ = kernel(gram, xty, float(lam), beta, 1e-7, 100_000)
        sweeps += s
    return beta, sweeps


def best_time(kernel, problem, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = run_path(kernel, *problem)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _cd is None:
        print("compiled kernel not built; run `pip install -e . --no-build-isolation` first")
        return 1
    print(f"{'N':>5} {'cols':>5} {'sweeps':>8} {'python s':>10} {'cython s':>10} {'speed-up':>9} {'max diff':>10}")
    for k, (n_obs, n_cols) in enumerate(CASES):
        problem = make_problem(n_obs, n_cols, k)
        t_py, (b_py, sw_py) = best_time(_cd_py.cd_gram, problem, args.repeat)
        t_c, (b_c, sw_c) = best_time(_cd.cd_gram, problem, args.repeat)
        diff = float(np.abs(b_py - b_c).max())
        print(f"{n_obs:5d} {n_cols:5d} {sw_c:8d} {t_py:10.4f} {t_c:10.4f} {t_py / t_c:9.1f} {diff:10.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
