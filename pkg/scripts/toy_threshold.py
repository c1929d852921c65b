#!/usr/bin/env python3
"""Sweep lambda_G * dI - lambda_C for the two-kernel toy model.

Prints (and optionally writes as CSV) the final-step conditional switching
probability next to the one-step logistic prediction, and locates the
p = 1/2 crossing by root finding.
"""
from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from kernelcal.pathengine import PathMeasureSpec, switch_probability, transfer_solve, transition_odds


@dataclass(frozen=True)
class ThresholdConfig:
    T: int = 4
    delta_info: float = 1.0
    lambda_G: float = 1.0
    x_min: float = -2.0
    x_max: float = 2.0
    x_step: float = 0.1

    def spec(self, x: float) -> PathMeasureSpec:
        """Uniform two-state reference with lambda_G * dI - lambda_C = x."""
        lambda_C = self.lambda_G * self.delta_info - x
        return PathMeasureSpec(
            2, self.T, [0.5, 0.5], [[0.5, 0.5], [0.5, 0.5]], [0.0, self.delta_info], lambda_C, self.lambda_G
        )


def final_step_probability(cfg: ThresholdConfig, x: float) -> float:
    pm = transfer_solve(cfg.spec(x)).pair_marginals[cfg.T - 1, 0]
    return float(pm[1] / pm.sum())


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--T", type=int, default=ThresholdConfig.T)
    ap.add_argument("--out", help="CSV file for the sweep")
    args = ap.parse_args(argv)
    cfg = ThresholdConfig(T=args.T)

    xs = np.round(np.arange(cfg.x_min, cfg.x_max + 1e-12, cfg.x_step), 10)
    rows = []
    for x in xs:
        p = final_step_probability(cfg, x)
        one_step = switch_probability(transition_odds(cfg.spec(x), 0, 0, 1).one_step_odds)
        rows.append((float(x), p, one_step))
    root = brentq(lambda x: final_step_probability(cfg, x) - 0.5, cfg.x_min, cfg.x_max, xtol=1e-14)

    print(f"{'x':>6} {'p_final':>10} {'p_one_step':>10}")
    for x, p, q in rows:
        print(f"{x:6.2f} {p:10.6f} {q:10.6f}")
    print(f"p = 1/2 crossing at x = {root:.3e}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "p_final", "p_one_step"])
            w.writerows([(repr(a), repr(b), repr(c)) for a, b, c in rows])
    return 0


if __name__ == "__main__":
    sys.exit(main())
