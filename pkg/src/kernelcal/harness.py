"""Experiment orchestration: config ingestion, seeded replicates, persistence, comparisons.

Every run writes ``manifest.json`` (config echo, tool version, per-seed
status and files) next to its outputs.  Seeds are the only source of
randomness, so outputs do not depend on the number of worker processes.
"""
from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources
from multiprocessing import get_context
from pathlib import Path
from statistics import median
from typing import Sequence

import jsonschema
import numpy as np
from scipy.stats import binomtest

from . import __version__
from .infogeom import INFO_MODEL

KINDS = ("toy", "thermo", "fixedpoints", "bloom")
V_THRESHOLD = 0.05

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PARTIAL = 3
EXIT_REFUSED = 4


class ConfigError(ValueError):
    """Payload does not validate; ``path`` locates the offending field."""

    def __init__(self, msg: str, path: str = "$"):
        super().__init__(f"{path}: {msg}")
        self.path = path


class OutputDirError(OSError):
    pass


class ComparisonRefused(ValueError):
    pass


@lru_cache(maxsize=1)
def load_schema() -> dict:
    return json.loads(resources.files("kernelcal").joinpath("schema.json").read_text())


def _validate(instance, schema: dict, root: str) -> None:
    full = dict(schema)
    full["$defs"] = load_schema()["$defs"]
    err = jsonschema.exceptions.best_match(jsonschema.Draft202012Validator(full).iter_errors(instance))
    if err is not None:
        path = root + "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path)
        raise ConfigError(err.message, path)


def validate_payload(kind: str, payload: dict) -> None:
    if kind not in KINDS:
        raise ConfigError(f"unknown kind {kind!r}", "$.kind")
    _validate(payload, load_schema()["$defs"][kind], "$.payload")


def parse_seeds(seeds) -> tuple[int, int]:
    """``"a..b"``, ``"a"``, ``[a, b]`` or ``(a, b)`` -> inclusive (a, b)."""
    if isinstance(seeds, str):
        parts = seeds.split("..")
        try:
            lo, hi = (int(parts[0]), int(parts[-1]))
        except ValueError:
            raise ConfigError(f"bad seed range {seeds!r}", "$.seeds") from None
        if len(parts) > 2:
            raise ConfigError(f"bad seed range {seeds!r}", "$.seeds")
    else:
        lo, hi = (int(s) for s in seeds)
    if lo < 0 or hi < lo:
        raise ConfigError(f"empty or negative seed range {lo}..{hi}", "$.seeds")
    return lo, hi


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    payload: dict
    seeds: tuple[int, int] = (0, 0)
    output_dir: str = "out"
    parallelism: int = 1

    def __post_init__(self):
        validate_payload(self.kind, self.payload)
        object.__setattr__(self, "seeds", parse_seeds(self.seeds))
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1", "$.parallelism")

    @property
    def seed_list(self) -> list[int]:
        return list(range(self.seeds[0], self.seeds[1] + 1))

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "payload": self.payload,
            "seeds": f"{self.seeds[0]}..{self.seeds[1]}",
            "output_dir": str(self.output_dir),
            "parallelism": self.parallelism,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentConfig":
        _validate(obj, load_schema()["experiment"], "$")
        return cls(
            kind=obj["kind"],
            payload=obj["payload"],
            seeds=obj.get("seeds", (0, 0)),
            output_dir=obj.get("output_dir", "out"),
            parallelism=int(obj.get("parallelism", 1)),
        )

    @classmethod
    def from_manifest(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_json(json.load(fh)["config"])


@dataclass
class ExperimentResult:
    output_dir: Path
    manifest: dict
    exit_code: int
    comparison: dict | None = None


# ---------------------------------------------------------------------------
# output helpers


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return x


def write_csv(path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_jsonl(path, rows) -> None:
    with open(path, "w") as fh:
        for r in rows:
            fh.write(json.dumps(r, sort_keys=True) + "\n")


def ensure_writable(out: Path) -> None:
    """Fail before producing anything if ``out`` cannot be written."""
    try:
        out.mkdir(parents=True, exist_ok=True)
        fd, probe = tempfile.mkstemp(dir=out, prefix=".probe")
        os.close(fd)
        os.unlink(probe)
    except OSError as exc:
        raise OutputDirError(f"output directory {out} is not writable: {exc}") from exc


# ---------------------------------------------------------------------------
# per-kind runners; each returns (per-seed run records, extra manifest fields)


def _run_toy(cfg: ExperimentConfig, out: Path):
    from .pathengine import PathMeasureSpec, path_entropy, sample_paths, transfer_solve

    payload = dict(cfg.payload)
    n_samples = int(payload.pop("n_samples", 100))
    spec = PathMeasureSpec.from_json(payload)
    meas = transfer_solve(spec)
    summary = {
        "lnZ": meas.ln_Z,
        "E_C": meas.expected_switch_cost,
        "E_G": meas.expected_info,
        "S": path_entropy(spec, meas),
        "info_model": INFO_MODEL,
        "spec": spec.to_json(),
    }
    write_json(out / "summary.json", summary)
    write_csv(
        out / "measure.csv",
        ["t", "state", "marginal"],
        ((t, i, meas.node_marginals[t, i]) for t in range(spec.T + 1) for i in range(spec.m)),
    )
    write_csv(
        out / "pairs.csv",
        ["t", "from", "to", "marginal"],
        (
            (t, i, j, meas.pair_marginals[t, i, j])
            for t in range(spec.T)
            for i in range(spec.m)
            for j in range(spec.m)
        ),
    )
    lines, runs = [], []
    for s in cfg.seed_list:
        for traj in sample_paths(spec, n_samples, s):
            lines.append({"seed": s, "states": [int(k) for k in traj.states]})
        runs.append({"seed": s, "status": "ok", "files": ["samples.jsonl"]})
    write_jsonl(out / "samples.jsonl", lines)
    return runs, {"files": ["summary.json", "measure.csv", "pairs.csv", "samples.jsonl"]}


def _run_thermo(cfg: ExperimentConfig, out: Path):
    from .thermo import ThermoConfig, landauer_ledger, read_trace, speed_limit_check

    tcfg = ThermoConfig(float(cfg.payload.get("kbt", 1.0)))
    trace = read_trace(cfg.payload["trace"])
    ledger = landauer_ledger(trace["info"], tcfg)
    ledger.write_csv(out / "ledger.csv")
    files = ["ledger.csv"]
    extra = {"cumulative_w_min": ledger.cumulative_w_min}
    if "supplied_power" in trace:
        rep = speed_limit_check(None, trace["info"], trace["supplied_power"][1:], tcfg)
        write_csv(
            out / "speed.csv",
            ["step", "hs_speed", "info_rate", "required_power", "supplied_power", "satisfied"],
            (
                (i, r.hs_speed, r.info_rate, r.required_power, r.supplied_power, int(r.satisfied))
                for i, r in enumerate(rep.records)
            ),
        )
        files.append("speed.csv")
        extra["speed_limit_satisfied"] = rep.all_satisfied
    runs = [{"seed": s, "status": "ok", "files": files} for s in cfg.seed_list]
    return runs, {"files": files, **extra}


def _run_fixedpoints(cfg: ExperimentConfig, out: Path):
    from .fixedpoints import bifurcation_scan, default_config, default_lambda_grid

    p = cfg.payload
    base = default_config(
        n_grid=int(p.get("n_grid", 16)),
        env_lengthscale=float(p.get("env_lengthscale", 0.3)),
        noise_var=float(p.get("noise_var", 0.1)),
    )
    base = replace(
        base,
        grad_tol=float(p.get("grad_tol", base.grad_tol)),
        merge_tol=float(p.get("merge_tol", base.merge_tol)),
    )
    l2 = p.get("lambda2_grid", default_lambda_grid(8).tolist())
    l3 = p.get("lambda3_grid", default_lambda_grid(8).tolist())
    cells = bifurcation_scan(base, l2, l3)
    rows, summary = [], []
    for c in cells:
        for r in c.records:
            rows.append(
                (c.lambda2, c.lambda3, float(r.theta_star[0]), r.s_star, r.stability, r.min_eig, r.max_eig)
            )
        summary.append(
            {
                "lambda2": c.lambda2,
                "lambda3": c.lambda3,
                "n_fixed": len(c.records),
                "n_stable": c.n_stable,
                "stable_thetas": [float(r.theta_star[0]) for r in c.stable],
                "separated": c.stable_separated(base.merge_tol),
                "errors": [d["error"] for d in c.diagnostics if "error" in d],
            }
        )
    write_csv(out / "fixed_points.csv", ["lambda2", "lambda3", "theta", "s_star", "stability", "min_eig", "max_eig"], rows)
    all_sep = all(s["separated"] for s in summary)
    write_json(out / "scan_summary.json", {"cells": summary, "all_separated": all_sep, "merge_tol": base.merge_tol})
    failed = any(s["errors"] for s in summary)
    status = "partial" if failed else "ok"
    runs = [{"seed": s, "status": status, "files": ["fixed_points.csv", "scan_summary.json"]} for s in cfg.seed_list]
    return runs, {"files": ["fixed_points.csv", "scan_summary.json"], "all_separated": all_sep}


def bloom_episode_config(payload: dict, policy: str | None = None):
    from .bloomsim import EpisodeConfig

    body = {k: v for k, v in payload.items() if k not in ("policies", "trace_kbt")}
    ec = EpisodeConfig.from_json(body)
    return ec.with_policy(policy) if policy else ec


def bloom_policies(payload: dict) -> list[str]:
    if "policies" in payload:
        return list(payload["policies"])
    return [payload.get("policy", "adaptive")]


def _bloom_worker(args):
    payload, policy, seed = args
    from .bloomsim import run_episode

    try:
        return policy, seed, run_episode(bloom_episode_config(payload, policy), seed), None
    except Exception as exc:  # recorded per seed in the manifest
        return policy, seed, None, repr(exc)


def episode_trace_rows(result, supplied_power: float) -> list[tuple]:
    """(step, cumulative info, supplied power, kernel id); row 0 is the empty start."""
    rows = [(0, 0.0, supplied_power, result.log[0]["kernel_id"] if result.log else 0)]
    for i, r in enumerate(result.log, start=1):
        rows.append((i, r["cumulative_info"], supplied_power, r["kernel_id"]))
    return rows


def _run_bloom(cfg: ExperimentConfig, out: Path):
    policies = bloom_policies(cfg.payload)
    for p in policies:  # surface bad payloads as config errors before any work
        try:
            bloom_episode_config(cfg.payload, p)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), "$.payload") from exc
    jobs = [(cfg.payload, p, s) for p in policies for s in cfg.seed_list]
    if cfg.parallelism > 1:
        with get_context("fork").Pool(cfg.parallelism) as pool:
            results = pool.map(_bloom_worker, jobs, chunksize=max(1, len(jobs) // (4 * cfg.parallelism)))
    else:
        results = [_bloom_worker(j) for j in jobs]
    results.sort(key=lambda r: (policies.index(r[0]), r[1]))

    ec0 = bloom_episode_config(cfg.payload, policies[0])
    speed = ec0.world.speed
    runs, metric_rows = [], []
    for policy, seed, res, err in results:
        name = f"episode_{seed}.jsonl" if len(policies) == 1 else f"episode_{policy}_{seed}.jsonl"
        if res is None:
            runs.append({"seed": seed, "policy": policy, "status": "failed", "error": err, "files": []})
            continue
        write_jsonl(out / name, res.log)
        status = "ok" if res.constraints_violated == 0 else "invalid"
        rec = {"seed": seed, "policy": policy, "status": status, "files": [name]}
        if res.violations:
            rec["violations"] = res.violations[:20]
        runs.append(rec)
        m = res.metrics_row()
        m["speed"] = speed
        metric_rows.append(m)
    header = [
        "seed", "policy", "rmse_surface", "rmse_subsurface", "total_info", "energy_used",
        "samples_returned", "violations", "E_max", "N_max", "speed",
    ]
    write_csv(out / "metrics.csv", header, ([m[h] for h in header] for m in metric_rows))
    files = ["metrics.csv"]
    first = next((r for r in results if r[2] is not None), None)
    if first is not None:
        res = first[2]
        power = res.E_max / ec0.budget.horizon_steps
        write_csv(out / "trace.csv", ["step", "info", "supplied_power", "kernel_id"], episode_trace_rows(res, power))
        files.append("trace.csv")
    extra = {"files": files, "policies": policies}
    comparison = None
    if "adaptive" in policies and len(policies) > 1:
        comparison = {}
        ad = [m for m in metric_rows if m["policy"] == "adaptive"]
        for p in policies:
            if p == "adaptive":
                continue
            fx = [m for m in metric_rows if m["policy"] == p]
            try:
                comparison[p] = compare_policies(ad, fx).to_json()
            except ComparisonRefused as exc:
                comparison[p] = {"refused": str(exc)}
        write_json(out / "comparison.json", comparison)
        extra["files"].append("comparison.json")
    return runs, extra, comparison


_RUNNERS = {"toy": _run_toy, "thermo": _run_thermo, "fixedpoints": _run_fixedpoints, "bloom": _run_bloom}


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run every seed of ``cfg`` and write outputs plus ``manifest.json``.

    Raises OutputDirError before writing anything if the directory is not
    writable.  Per-seed failures are recorded, not raised; the returned
    exit code is 3 when any seed failed or produced an invalid episode.
    """
    out = Path(cfg.output_dir)
    ensure_writable(out)
    ret = _RUNNERS[cfg.kind](cfg, out)
    runs, extra = ret[0], ret[1]
    comparison = ret[2] if len(ret) > 2 else None
    bad = [r for r in runs if r["status"] != "ok"]
    refused = comparison is not None and any("refused" in v for v in comparison.values())
    manifest = {
        "config": cfg.to_json(),
        "tool": "kernelcal",
        "tool_version": __version__,
        "info_model": INFO_MODEL,
        "kind": cfg.kind,
        "status": "partial_failure" if bad else "ok",
        "runs": runs,
        **extra,
    }
    write_json(out / "manifest.json", manifest)
    code = EXIT_PARTIAL if bad else (EXIT_REFUSED if refused else EXIT_OK)
    return ExperimentResult(out, manifest, code, comparison)


# ---------------------------------------------------------------------------
# policy comparison


def sign_test_p(wins: int, losses: int) -> float:
    """One-sided sign test, H1: adaptive wins more often; ties are dropped."""
    n = wins + losses
    if n == 0:
        return 1.0
    return float(binomtest(wins, n, 0.5, alternative="greater").pvalue)


@dataclass
class MetricComparison:
    metric: str
    n: int
    wins: int
    losses: int
    ties: int
    median_diff: float
    win_fraction: float
    p_value: float

    @classmethod
    def from_pairs(cls, metric: str, a: Sequence[float], f: Sequence[float]) -> "MetricComparison":
        d = [x - y for x, y in zip(a, f)]
        wins = sum(v < 0 for v in d)
        losses = sum(v > 0 for v in d)
        ties = len(d) - wins - losses
        return cls(
            metric,
            len(d),
            wins,
            losses,
            ties,
            float(median(d)) if d else 0.0,
            (wins + 0.5 * ties) / len(d) if d else 0.5,
            sign_test_p(wins, losses),
        )


@dataclass
class ComparisonSummary:
    seeds: list[int]
    paired: list[dict]
    metrics: dict[str, MetricComparison]
    audit: dict[str, bool]
    high_advection: dict[str, MetricComparison] | None = None
    v_threshold: float = V_THRESHOLD
    notes: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "seeds": self.seeds,
            "paired": self.paired,
            "metrics": {k: v.__dict__ for k, v in self.metrics.items()},
            "audit": self.audit,
            "high_advection": None
            if self.high_advection is None
            else {k: v.__dict__ for k, v in self.high_advection.items()},
            "v_threshold": self.v_threshold,
            "notes": self.notes,
        }


def _num(row, key):
    return float(row[key])


def compare_policies(
    metrics_adaptive: Sequence[dict],
    metrics_fixed: Sequence[dict],
    v_threshold: float = V_THRESHOLD,
    metrics: Sequence[str] = ("rmse_surface", "rmse_subsurface"),
) -> ComparisonSummary:
    """Paired sign-test comparison of two policies' per-seed metric rows.

    Rows are dicts (e.g. from metrics.csv) with a ``seed`` key, the metric
    columns and the budget columns ``E_max`` and ``N_max``.  Refuses
    (ComparisonRefused) unless both sides cover the same seeds with equal
    budgets seed by seed, and the same world speed when reported.
    """
    a = {int(r["seed"]): r for r in metrics_adaptive}
    f = {int(r["seed"]): r for r in metrics_fixed}
    if len(a) != len(metrics_adaptive) or len(f) != len(metrics_fixed):
        raise ComparisonRefused("duplicate seeds in metric rows")
    if set(a) != set(f):
        raise ComparisonRefused(f"seed sets differ: {sorted(set(a) ^ set(f))[:10]}")
    if not a:
        raise ComparisonRefused("no rows to compare")
    seeds = sorted(a)
    audit = {
        "seeds_match": True,
        "E_max_equal": all(math.isclose(_num(a[s], "E_max"), _num(f[s], "E_max"), rel_tol=0, abs_tol=0) for s in seeds),
        "N_max_equal": all(int(float(a[s]["N_max"])) == int(float(f[s]["N_max"])) for s in seeds),
    }
    if all("speed" in a[s] and "speed" in f[s] for s in seeds):
        audit["world_match"] = all(_num(a[s], "speed") == _num(f[s], "speed") for s in seeds)
    if not all(audit.values()):
        bad = [k for k, v in audit.items() if not v]
        raise ComparisonRefused(f"budget/world audit failed: {bad}")
    paired = [
        {"seed": s, **{m: _num(a[s], m) - _num(f[s], m) for m in metrics}} for s in seeds
    ]
    summ = {m: MetricComparison.from_pairs(m, [_num(a[s], m) for s in seeds], [_num(f[s], m) for s in seeds]) for m in metrics}
    notes = []
    hi = None
    if all("speed" in a[s] for s in seeds):
        hs = [s for s in seeds if _num(a[s], "speed") >= v_threshold]
        if hs:
            hi = {m: MetricComparison.from_pairs(m, [_num(a[s], m) for s in hs], [_num(f[s], m) for s in hs]) for m in metrics}
        else:
            notes.append(f"no seeds with speed >= {v_threshold}")
    return ComparisonSummary(seeds, paired, summ, audit, hi, v_threshold, notes)
