"""Acceptance suite: one PASS/FAIL line per criterion, printed to the terminal.

Each test computes its criterion, prints the verdict with the measured
numbers, then asserts it.  Run with ``pytest tests/test_acceptance.py -v``.
"""
import json
import math
import time

import numpy as np
import pytest
from scipy.optimize import brentq

from kernelcal.bloomsim import Belief, BeliefConfig
from kernelcal.bloomsim.belief import SUBSURFACE, SURFACE, Observation, dense_posterior
from kernelcal.fixedpoints import (
    bifurcation_scan,
    default_config,
    default_lambda_grid,
    find_fixed_points,
    frozen_objective,
    grad_hessian,
    grid_search_stationary,
)
from kernelcal.harness import ExperimentConfig, read_csv, run_experiment
from kernelcal.kernelspace import DiscreteDomain, KernelSpec, cone_combine, explicit, gram, validate_psd
from kernelcal.pathengine import (
    PathMeasureSpec,
    calibrate_multipliers,
    enumerate_paths,
    expectations,
    transfer_solve,
    transition_odds,
)
from kernelcal.thermo import ThermoConfig, landauer_ledger

from conftest import random_spec


@pytest.fixture
def verdict(capsys):
    def report(n: int, ok: bool, detail: str, elapsed: float | None = None):
        t = "" if elapsed is None else f" [{elapsed:.2f} s]"
        with capsys.disabled():
            print(f"\nACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} - {detail}{t}")
        assert ok, detail

    return report


# ---------------------------------------------------------------- 1


def _final_step_switch_probability(x: float, T: int = 3) -> float:
    """P(switch at the last step | in state 0) with lambda_G * dI - lambda_C = x."""
    spec = PathMeasureSpec(2, T, [0.5, 0.5], [[0.5, 0.5], [0.5, 0.5]], [0.0, 1.0], 1.0 - x, 1.0)
    pm = transfer_solve(spec).pair_marginals[T - 1, 0]
    return float(pm[1] / (pm[0] + pm[1]))


def test_criterion_1_toy_threshold(verdict):
    t0 = time.perf_counter()
    xs = np.round(np.arange(-2.0, 2.0 + 1e-12, 0.1), 10)
    ps = np.array([_final_step_switch_probability(x) for x in xs])
    at_zero = ps[np.argmin(np.abs(xs))]
    monotone = bool(np.all(np.diff(ps) > 0))
    root = brentq(lambda x: _final_step_switch_probability(x) - 0.5, -2.0, 2.0, xtol=1e-14, rtol=1e-15)
    # the closed-form odds agree with the conditional probability from the measure
    spec = PathMeasureSpec(2, 3, [0.5, 0.5], [[0.5, 0.5], [0.5, 0.5]], [0.0, 1.0], 1.0 - 0.7, 1.0)
    o = transition_odds(spec, 2, 0, 1).exact_conditional_odds
    odds_ok = abs(o / (1 + o) - _final_step_switch_probability(0.7)) < 1e-12
    dt = time.perf_counter() - t0
    ok = abs(at_zero - 0.5) < 1e-9 and abs(root) < 1e-9 and monotone and odds_ok and dt < 1.0
    verdict(1, ok, f"p(0)-1/2={at_zero - 0.5:.1e}, crossing at {root:.1e}, monotone={monotone}", dt)


# ---------------------------------------------------------------- 2


def test_criterion_2_oracle_equivalence(verdict):
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        spec = random_spec(rng, int(rng.integers(2, 4)), int(rng.integers(1, 7)), lam_scale=2.0)
        a, b = transfer_solve(spec), enumerate_paths(spec)
        worst = max(
            worst,
            abs(a.ln_Z - b.ln_Z),
            float(np.max(np.abs(a.node_marginals - b.node_marginals))),
            float(np.max(np.abs(a.pair_marginals - b.pair_marginals))),
        )
    dt = time.perf_counter() - t0
    verdict(2, worst < 1e-10 and dt < 10, f"max |diff| over 100 specs = {worst:.2e}", dt)


# ---------------------------------------------------------------- 3


def test_criterion_3_calibration_round_trip(verdict):
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        base = random_spec(rng, int(rng.integers(2, 4)), int(rng.integers(2, 6)))
        lc, lg = rng.uniform(-1.0, 2.0), rng.uniform(-1.0, 1.5)
        target = expectations(base.with_multipliers(lc, lg))
        got = calibrate_multipliers(base.with_multipliers(0.0, 0.0), *target)
        worst = max(worst, abs(got[0] - lc), abs(got[1] - lg))
    dt = time.perf_counter() - t0
    verdict(3, worst < 1e-6 and dt < 10, f"max multiplier error over 20 points = {worst:.2e}", dt)


# ---------------------------------------------------------------- 4


def test_criterion_4_landauer(verdict):
    cfg = ThermoConfig(kBT=1.7)
    one_bit = landauer_ledger([0.0, math.log(2.0)], cfg)
    exact_bit = one_bit.cumulative_w_min == cfg.kBT * math.log(2.0)
    rng = np.random.default_rng(4)
    additive = True
    for _ in range(200):
        traj = np.cumsum(rng.normal(size=int(rng.integers(3, 30))))
        k = int(rng.integers(1, len(traj) - 1))
        a = landauer_ledger(traj[: k + 1], cfg)
        b = landauer_ledger(traj[k:], cfg)
        whole = landauer_ledger(traj, cfg)
        cat = a + b
        additive &= cat.steps == whole.steps and cat.cumulative_w_min == whole.cumulative_w_min
    verdict(4, exact_bit and additive, f"1 bit -> w_min = {one_bit.cumulative_w_min!r} = kBT ln 2: {exact_bit}; concatenation exact: {additive}")


# ---------------------------------------------------------------- 5


def _matches(records, oracle, tol=2e-3):
    found = sorted((float(r.theta_star[0]), r.stability) for r in records)
    oracle = sorted(oracle)
    return len(found) == len(oracle) and all(
        abs(x - y) <= tol and s == t for (x, s), (y, t) in zip(found, oracle)
    )


def test_criterion_5_fixed_point_control(verdict):
    t0 = time.perf_counter()
    base = default_config()
    env_lengthscale = 0.3  # default_config's environment kernel
    kl_only = find_fixed_points(base.with_multipliers(0.0, 1.0))
    kl_ok = (
        len(kl_only) == 1
        and kl_only[0].stability == "stable"
        and abs(kl_only[0].theta_star[0] - env_lengthscale) < 1e-3
    )
    grid = default_lambda_grid(8)
    cells = [(l2, l3) for l2 in grid[1::2] for l3 in grid[::2]]
    mismatched = []
    for l2, l3 in cells:
        cfg = base.with_multipliers(float(l2), float(l3))
        if not _matches(find_fixed_points(cfg).records, grid_search_stationary(cfg, step=1e-3)):
            mismatched.append((float(l2), float(l3)))
    dt = time.perf_counter() - t0
    ok = kl_ok and not mismatched and dt < 60
    verdict(
        5,
        ok,
        f"lambda2=0 single stable point at env lengthscale: {kl_ok}; "
        f"{len(cells) - len(mismatched)}/{len(cells)} mixed cells match the 1e-3 grid oracle",
        dt,
    )


# ---------------------------------------------------------------- 6


def test_criterion_6_discreteness_probe(verdict):
    t0 = time.perf_counter()
    cfg = default_config()
    grid = default_lambda_grid(8)
    cells = bifurcation_scan(cfg, grid, grid)
    bad = [(c.lambda2, c.lambda3) for c in cells if not c.stable_separated(cfg.merge_tol)]
    counts = sorted({c.n_stable for c in cells})
    dt = time.perf_counter() - t0
    verdict(
        6,
        len(cells) == 64 and not bad,
        f"{64 - len(bad)}/64 cells have stable points separated by >= {cfg.merge_tol:g} "
        f"(stable counts seen: {counts}); a property, not a proof",
        dt,
    )


# ---------------------------------------------------------------- 7 and 8

BLOOM_SEEDS = "0..49"


@pytest.fixture(scope="module")
def bloom_runs(tmp_path_factory):
    """Adaptive and fixed_a on 50 paired seeds, moving and static worlds (200 episodes)."""
    root = tmp_path_factory.mktemp("bloom")
    t0 = time.perf_counter()
    moving = {"world": {"velocity": [0.05, 0.0], "shear": [[0.0, 0.08], [0.0, 0.0]], "spinup_steps": 60}}
    static = {"world": {"velocity": [0.0, 0.0], "shear": [[0.0, 0.0], [0.0, 0.0]], "spinup_steps": 60}}
    out = {}
    for name, payload in (("moving", moving), ("static", static)):
        cfg = ExperimentConfig(
            "bloom", dict(payload, policies=["adaptive", "fixed_a"]), BLOOM_SEEDS, str(root / name), 1
        )
        out[name] = run_experiment(cfg)
    return out, time.perf_counter() - t0


def _episode_logs(res):
    for f in sorted(res.output_dir.glob("episode_*.jsonl")):
        with open(f) as fh:
            yield f.name, [json.loads(line) for line in fh]


def test_criterion_7_bloom_feasibility(verdict, bloom_runs):
    runs, _ = bloom_runs
    n, violations, worst_close, coloc_bad = 0, 0, 0.0, 0
    for res in runs.values():
        violations += sum(int(r["violations"]) for r in read_csv(res.output_dir / "metrics.csv"))
        violations += sum(r["status"] != "ok" for r in res.manifest["runs"])
        for _, log in _episode_logs(res):
            n += 1
            e_max = res.manifest["config"]["payload"].get("budget", {}).get("E_max", 3.0)
            closure = math.fsum(r["cost"] for r in log) + log[-1]["energy"] - e_max
            worst_close = max(worst_close, abs(closure))
            coloc_bad += sum(r["sigma"] == "docked" and r["asv"] != r["auv"] for r in log)
    ok = n == 200 and violations == 0 and worst_close <= 1e-9 and coloc_bad == 0
    verdict(
        7,
        ok,
        f"{n} episodes: constraints_violated={violations}, max ledger residual={worst_close:.1e}, "
        f"docked co-location breaks={coloc_bad}",
    )


def test_criterion_8_adaptive_vs_fixed(verdict, bloom_runs):
    runs, dt = bloom_runs
    mv = runs["moving"].comparison["fixed_a"]
    st = runs["static"].comparison["fixed_a"]
    refused = "refused" in mv or "refused" in st
    if refused:
        verdict(8, False, f"comparison refused: {mv.get('refused') or st.get('refused')}", dt)
    hi = mv["high_advection"]["rmse_subsurface"]
    ctl = st["metrics"]["rmse_subsurface"]
    audit_ok = all(mv["audit"].values()) and all(st["audit"].values())
    ok = (
        audit_ok
        and hi["n"] == 50
        and hi["wins"] > hi["losses"]
        and hi["win_fraction"] > 0.5
        and hi["p_value"] < 0.05
        and ctl["p_value"] > 0.2
        and dt < 300
    )
    verdict(
        8,
        ok,
        f"high advection |v|=0.05: wins {hi['wins']} losses {hi['losses']} ties {hi['ties']} "
        f"win_fraction {hi['win_fraction']:.2f} p={hi['p_value']:.3g}; "
        f"static control: wins {ctl['wins']} losses {ctl['losses']} p={ctl['p_value']:.3g}; "
        f"budgets audited equal: {audit_ok}",
        dt,
    )


# ---------------------------------------------------------------- 9


def _random_gram(rng, dom):
    kind = rng.integers(0, 3)
    if kind == 2:
        a = rng.normal(size=(dom.n, int(rng.integers(1, dom.n + 1))))
        return explicit(a @ a.T, dom)
    fam = "squared_exponential" if kind == 0 else "matern_3_2"
    return gram(KernelSpec(fam, float(rng.uniform(0.05, 2.0)), float(rng.uniform(0.1, 3.0))), dom)


def test_criterion_9_numerical_hygiene(verdict):
    t0 = time.perf_counter()
    # finite-difference gradients
    cfg = default_config()
    rng = np.random.default_rng(9)
    lo, hi = cfg.bounds[0]
    h = 1e-5
    grad_worst = 0.0
    for th in np.exp(rng.uniform(np.log(lo * 1.5), np.log(hi / 1.5), size=10)):
        g, _ = grad_hessian([th], cfg)
        two = (frozen_objective(th + h, cfg) - frozen_objective(th - h, cfg)) / (2 * h)
        grad_worst = max(grad_worst, abs(g[0] - two) / max(1.0, abs(two)))

    # GP posterior against a dense solve
    gp_worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(900 + seed)
        b = Belief(BeliefConfig(), np.array([0.15, -0.1]), np.eye(2), np.zeros(2), kernel_id=seed % 2)
        obs = []
        for _ in range(int(rng.integers(1, 15))):
            ch = SURFACE if rng.random() < 0.5 else SUBSURFACE
            o = Observation(tuple(rng.uniform(size=2)), ch, float(rng.normal()), b.cfg.noise(ch), 0)
            b.add(o)
            obs.append(o)
        q = rng.uniform(size=(10, 2))
        m, v = b.posterior(q)
        sites = [b.latent_site(o.pos, o.channel) for o in obs]
        mr, vr = dense_posterior(sites, [o.value for o in obs], [o.noise_var for o in obs], q, b.kernel)
        gp_worst = max(gp_worst, float(np.max(np.abs(m - mr))), float(np.max(np.abs(v - vr))))

    # PSD closure of the cone operations
    psd_fail = 0
    for seed in range(1000):
        rng = np.random.default_rng(10_000 + seed)
        n = int(rng.integers(2, 13))
        pts = rng.uniform(size=(n, int(rng.integers(1, 3))))
        dom = DiscreteDomain.uniform(pts)
        k1, k2 = _random_gram(rng, dom), _random_gram(rng, dom)
        out = [
            k1,
            k2,
            cone_combine("sum", k1, k2, float(rng.uniform(0, 3)), float(rng.uniform(0, 3))),
            cone_combine("scale", k1, float(rng.uniform(0, 5))),
            cone_combine("schur", k1, k2),
        ]
        psd_fail += sum(not validate_psd(k).passed for k in out)
    dt = time.perf_counter() - t0
    ok = grad_worst <= 1e-6 and gp_worst <= 1e-8 and psd_fail == 0
    verdict(
        9,
        ok,
        f"FD gradient rel err {grad_worst:.1e} (10 points); GP vs dense {gp_worst:.1e}; "
        f"PSD closure failures {psd_fail}/1000 trials",
        dt,
    )
