#!/usr/bin/env python3
"""Adaptive vs fixed-kernel bloom sampling on paired seeds.

Runs the moving (high-advection) and static-control experiments through
the harness and prints the sign-test summaries for subsurface forecast
RMSE.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

from kernelcal.harness import ExperimentConfig, run_experiment

HERE = Path(__file__).resolve().parent


@dataclass(frozen=True)
class ComparisonRun:
    seeds: str = "0..49"
    out: str = "runs"
    parallelism: int = 1
    fixed_policy: str = "fixed_a"


def _load(name: str, run: ComparisonRun) -> ExperimentConfig:
    obj = json.loads((HERE / "configs" / name).read_text())
    obj["payload"]["policies"] = ["adaptive", run.fixed_policy]
    obj.update(seeds=run.seeds, parallelism=run.parallelism, output_dir=str(Path(run.out) / Path(name).stem))
    return ExperimentConfig.from_json(obj)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", default=ComparisonRun.seeds)
    ap.add_argument("--out", default=ComparisonRun.out)
    ap.add_argument("--parallelism", type=int, default=ComparisonRun.parallelism)
    ap.add_argument("--fixed-policy", default=ComparisonRun.fixed_policy, choices=["fixed_a", "fixed_b"])
    args = ap.parse_args(argv)
    run = ComparisonRun(args.seeds, args.out, args.parallelism, args.fixed_policy)

    code = 0
    for name, subset in (("bloom_high_advection.json", "high_advection"), ("bloom_static.json", "metrics")):
        t0 = time.perf_counter()
        res = run_experiment(_load(name, run))
        comp = res.comparison[run.fixed_policy]
        if "refused" in comp:
            print(f"{name}: comparison refused ({comp['refused']})")
            code = 4
            continue
        c = (comp[subset] or comp["metrics"])["rmse_subsurface"]
        print(
            f"{name}: adaptive vs {run.fixed_policy} subsurface RMSE: wins {c['wins']} losses {c['losses']} "
            f"ties {c['ties']} win_fraction {c['win_fraction']:.2f} median diff {c['median_diff']:.4f} "
            f"p {c['p_value']:.3g} ({time.perf_counter() - t0:.0f} s, outputs in {res.output_dir})"
        )
        code = max(code, res.exit_code)
    return code


if __name__ == "__main__":
    sys.exit(main())
