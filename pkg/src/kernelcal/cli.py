"""``kernelcal`` command line.

Exit codes: 0 success, 2 config error, 3 partial failure, 4 comparison refused.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .harness import (
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_REFUSED,
    ComparisonRefused,
    ConfigError,
    ExperimentConfig,
    OutputDirError,
    compare_policies,
    read_csv,
    run_experiment,
    write_json,
)


def _load_config(path: str | None, kind: str) -> dict:
    """Return an experiment-config dict; bare module payloads are wrapped."""
    if path is None:
        return {"kind": kind, "payload": {}}
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from None
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object")
    if "kind" in obj and "payload" in obj:
        if obj["kind"] != kind:
            raise ConfigError(f"config is for {obj['kind']!r}, not {kind!r}", "$.kind")
        return obj
    return {"kind": kind, "payload": obj}


def _experiment(args, kind: str, payload_updates: dict | None = None) -> ExperimentConfig:
    obj = _load_config(getattr(args, "config", None), kind)
    obj = dict(obj, payload=dict(obj["payload"], **(payload_updates or {})))
    if getattr(args, "seeds", None):
        obj["seeds"] = args.seeds
    if getattr(args, "out", None):
        obj["output_dir"] = args.out
    if getattr(args, "parallelism", None):
        obj["parallelism"] = args.parallelism
    return ExperimentConfig.from_json(obj)


def _report(res) -> int:
    print(f"wrote {res.output_dir} ({res.manifest['status']})")
    if res.comparison:
        for pol, summ in res.comparison.items():
            if "refused" in summ:
                print(f"adaptive vs {pol}: refused ({summ['refused']})")
                continue
            for m, c in summ["metrics"].items():
                print(
                    f"adaptive vs {pol} {m}: wins {c['wins']} losses {c['losses']} ties {c['ties']} "
                    f"win_fraction {c['win_fraction']:.3f} p {c['p_value']:.3g}"
                )
    return res.exit_code


def cmd_toy(args) -> int:
    return _report(run_experiment(_experiment(args, "toy")))


def cmd_thermo(args) -> int:
    upd = {}
    if args.trace:
        upd["trace"] = args.trace
    if args.kbt is not None:
        upd["kbt"] = args.kbt
    return _report(run_experiment(_experiment(args, "thermo", upd)))


def cmd_fixedpoints(args) -> int:
    return _report(run_experiment(_experiment(args, "fixedpoints")))


def cmd_bloom(args) -> int:
    upd = {}
    if args.policy:
        upd["policies"] = list(dict.fromkeys(args.policy))
    return _report(run_experiment(_experiment(args, "bloom", upd)))


def cmd_compare(args) -> int:
    rows_a = [r for r in read_csv(args.adaptive) if r.get("policy", "adaptive") == "adaptive"]
    rows_f = [r for r in read_csv(args.fixed) if r.get("policy", args.fixed_policy) == args.fixed_policy]
    try:
        summ = compare_policies(rows_a, rows_f, v_threshold=args.v_threshold)
    except ComparisonRefused as exc:
        print(f"comparison refused: {exc}", file=sys.stderr)
        return EXIT_REFUSED
    if args.out:
        write_json(args.out, summ.to_json())
    for m, c in summ.metrics.items():
        print(f"{m}: wins {c.wins} losses {c.losses} ties {c.ties} median_diff {c.median_diff:.4g} p {c.p_value:.3g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kernelcal", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config_required=False):
        p.add_argument("--config", required=config_required, help="experiment config or bare module payload (JSON)")
        p.add_argument("--seeds", help="inclusive seed range a..b")
        p.add_argument("--out", help="output directory")
        p.add_argument("--parallelism", type=int, help="worker processes")

    p = sub.add_parser("toy", help="solve a finite-family path measure")
    common(p, config_required=True)
    p.set_defaults(func=cmd_toy)

    p = sub.add_parser("thermo", help="Landauer ledger for an information trace")
    common(p)
    p.add_argument("--trace", help="trace file (.jsonl or .csv with an 'info' column)")
    p.add_argument("--kbt", type=float, help="kBT in the trace's energy units")
    p.set_defaults(func=cmd_thermo)

    p = sub.add_parser("fixedpoints", help="fixed-point census over a multiplier grid")
    common(p)
    p.set_defaults(func=cmd_fixedpoints)

    p = sub.add_parser("bloom", help="run bloom-sampling episodes")
    common(p)
    p.add_argument("--policy", action="append", choices=["adaptive", "fixed_a", "fixed_b"],
                   help="repeat to run several policies and compare them")
    p.set_defaults(func=cmd_bloom)

    p = sub.add_parser("compare", help="paired sign test between two metrics.csv files")
    p.add_argument("--adaptive", required=True)
    p.add_argument("--fixed", required=True)
    p.add_argument("--fixed-policy", default="fixed_a")
    p.add_argument("--v-threshold", type=float, default=0.05)
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OutputDirError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, KeyError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
