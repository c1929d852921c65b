#!/usr/bin/env python3
"""Fixed-point census over the default 8x8 multiplier grid.

Prints a lambda2 x lambda3 table of stable-point counts and, with
``--oracle``, checks every cell against the dense grid search.
"""
from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass

import numpy as np

from kernelcal.fixedpoints import bifurcation_scan, default_config, default_lambda_grid, grid_search_stationary


@dataclass(frozen=True)
class ScanConfig:
    n_grid: int = 16
    env_lengthscale: float = 0.3
    noise_var: float = 0.1
    n_lambda: int = 8


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-lambda", type=int, default=ScanConfig.n_lambda)
    ap.add_argument("--oracle", action="store_true", help="compare each cell with the 1e-3 grid search")
    args = ap.parse_args(argv)
    sc = ScanConfig(n_lambda=args.n_lambda)
    cfg = default_config(n_grid=sc.n_grid, env_lengthscale=sc.env_lengthscale, noise_var=sc.noise_var)
    grid = default_lambda_grid(sc.n_lambda)

    t0 = time.perf_counter()
    cells = bifurcation_scan(cfg, grid, grid)
    print(f"scan of {len(cells)} cells in {time.perf_counter() - t0:.1f} s")
    table = np.zeros((len(grid), len(grid)), dtype=int)
    for c in cells:
        table[list(grid).index(c.lambda2), list(grid).index(c.lambda3)] = c.n_stable
    print("stable points (rows lambda2, columns lambda3)")
    print("        " + " ".join(f"{l3:7.3g}" for l3 in grid))
    for l2, row in zip(grid, table):
        print(f"{l2:7.3g} " + " ".join(f"{n:7d}" for n in row))
    sep = all(c.stable_separated(cfg.merge_tol) for c in cells)
    print(f"all stable sets separated by >= {cfg.merge_tol:g}: {sep}")

    if args.oracle:
        bad = 0
        for c in cells:
            oracle = grid_search_stationary(cfg.with_multipliers(c.lambda2, c.lambda3))
            found = sorted((float(r.theta_star[0]), r.stability) for r in c.records)
            ok = len(found) == len(oracle) and all(
                abs(a - b) <= 2e-3 and s == t for (a, s), (b, t) in zip(found, sorted(oracle))
            )
            bad += not ok
        print(f"oracle mismatches: {bad}/{len(cells)}")
        return 0 if bad == 0 else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
