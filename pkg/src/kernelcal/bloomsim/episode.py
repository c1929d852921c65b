"""One mission: world, team, belief and policy stepped together."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..infogeom import INFO_MODEL, gp_info_gain
from .belief import SUBSURFACE, SURFACE, Belief, BeliefConfig, Observation
from .mission import (
    AgentState,
    MissionBudget,
    PlannerWeights,
    SwitchSpec,
    dist,
    feasible_actions,
    front_sites,
    kernel_switch_decide,
    plan_step,
    reserve,
    _noise_map,
)
from .world import WorldConfig, make_world, step_environment, transport

POLICIES = ("adaptive", "fixed_a", "fixed_b")


@dataclass(frozen=True)
class EpisodeConfig:
    world: WorldConfig = WorldConfig()
    budget: MissionBudget = MissionBudget()
    belief: BeliefConfig = BeliefConfig()
    weights: PlannerWeights = PlannerWeights()
    switch: SwitchSpec = SwitchSpec()
    policy: str = "adaptive"
    forecast_horizon: int = 5

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}")

    def with_policy(self, policy: str) -> "EpisodeConfig":
        return replace(self, policy=policy)

    def to_json(self) -> dict:
        return {
            "world": self.world.to_json(),
            "budget": self.budget.to_json(),
            "belief": {**self.belief.__dict__, "lengthscales": list(self.belief.lengthscales)},
            "weights": dict(self.weights.__dict__),
            "switch": dict(self.switch.__dict__),
            "policy": self.policy,
            "forecast_horizon": self.forecast_horizon,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "EpisodeConfig":
        bel = dict(obj.get("belief", {}))
        if "lengthscales" in bel:
            bel["lengthscales"] = tuple(float(x) for x in bel["lengthscales"])
        return cls(
            world=WorldConfig.from_json(obj.get("world", {})),
            budget=MissionBudget.from_json(obj.get("budget", {})),
            belief=BeliefConfig(**bel),
            weights=PlannerWeights(**obj.get("weights", {})),
            switch=SwitchSpec(**obj.get("switch", {})),
            policy=obj.get("policy", "adaptive"),
            forecast_horizon=int(obj.get("forecast_horizon", 5)),
        )


@dataclass
class EpisodeResult:
    seed: int
    policy: str
    log: list[dict]
    forecast_rmse_surface: float
    forecast_rmse_subsurface: float
    total_info: float
    energy_used: float
    energy_remaining: float
    samples_returned: int
    constraints_violated: int
    E_max: float
    N_max: int
    violations: list[str] = field(default_factory=list)
    switches: int = 0
    info_model: str = INFO_MODEL

    def metrics_row(self) -> dict:
        return {
            "seed": self.seed,
            "policy": self.policy,
            "rmse_surface": self.forecast_rmse_surface,
            "rmse_subsurface": self.forecast_rmse_subsurface,
            "total_info": self.total_info,
            "energy_used": self.energy_used,
            "samples_returned": self.samples_returned,
            "violations": self.constraints_violated,
            "E_max": self.E_max,
            "N_max": self.N_max,
        }

    def cost_sum(self) -> float:
        return math.fsum(r["cost"] for r in self.log)


def _audit(agent: AgentState, budget: MissionBudget, t: int) -> list[str]:
    bad = []
    if agent.energy_remaining < -1e-12:
        bad.append(f"t={t}: negative energy {agent.energy_remaining}")
    if agent.energy_remaining < reserve(agent, budget) - 1e-9:
        bad.append(f"t={t}: reserve violated ({agent.energy_remaining} < {reserve(agent, budget)})")
    if agent.docked and agent.asv_pos != agent.auv_pos:
        bad.append(f"t={t}: docked but not co-located")
    if not agent.docked and dist(agent.asv_pos, agent.auv_pos) > budget.delta_meet + 1e-12:
        bad.append(f"t={t}: rendezvous radius exceeded")
    if agent.samples_collected > budget.N_max:
        bad.append(f"t={t}: sample cap exceeded")
    for p in (agent.asv_pos, agent.auv_pos):
        if not (0.0 <= p[0] <= 1.0 and 0.0 <= p[1] <= 1.0):
            bad.append(f"t={t}: left the lake at {p}")
    return bad


def _homing_action(actions):
    """Redock if possible, else head for the AUV/base, else wait out the dive."""
    by_name = {a.name: a for a in actions}
    for name in ("redock", "return", "stay"):
        if name in by_name:
            return by_name[name]
    raise RuntimeError("no homing action available")


def _home(agent: AgentState, budget: MissionBudget) -> bool:
    return agent.docked and agent.asv_pos == tuple(float(x) for x in budget.base_pos)


def forecast_errors(belief: Belief, world, horizon: int) -> tuple[float, float]:
    """Mean squared error of the advected posterior mean against the true field ``horizon`` steps ahead."""
    future = world.advance(horizon)
    grid = world.grid.points
    back_s = transport(grid, world.F, world.v, -horizon)
    back_u = transport(grid - world.subsurface_offset, world.F, world.v, -horizon)
    m, _ = belief.posterior(np.vstack([back_s, back_u]))
    n = grid.shape[0]
    err_s = np.mean((m[:n] - future.field(grid)) ** 2)
    err_u = np.mean((m[n:] - future.subsurface(grid)) ** 2)
    return float(err_s), float(err_u)


def _row(t, action, agent, info, total, kernel_id, homing, decision=None) -> dict:
    return {
        "t": t,
        "action": action.name,
        "asv": list(agent.asv_pos),
        "auv": list(agent.auv_pos),
        "sigma": agent.sigma,
        "energy": agent.energy_remaining,
        "cost": action.cost,
        "info_gain": info,
        "cumulative_info": total,
        "kernel_id": kernel_id,
        "samples": agent.samples_collected,
        "homing": homing,
        "switch_p": None if decision is None else decision.p_switch,
        "switch_dI": None if decision is None else decision.delta_info,
    }


def _observe(belief: Belief, world, obs_list, t: int, rng) -> float:
    """Draw noisy readings, add them to the belief; return their joint information gain."""
    sites = np.array([belief.latent_site(p, ch) for p, ch, _ in obs_list])
    _, cov = belief.posterior(sites, full_cov=True)
    nv = np.array([o[2] for o in obs_list])
    info = gp_info_gain(cov / np.sqrt(np.outer(nv, nv)), 1.0).nats
    for p, ch, v in obs_list:
        truth = world.field(p)[0] if ch == SURFACE else world.subsurface(p)[0]
        y = truth + rng.normal(0.0, math.sqrt(v))
        belief.add(Observation((float(p[0]), float(p[1])), ch, float(y), float(v), t))
    return info


def run_episode(config: EpisodeConfig, seed: int) -> EpisodeResult:
    """Simulate one mission.

    Each step: (adaptive only, every ``epoch`` steps) decide a kernel switch,
    pick a feasible action greedily (or head home once the energy slack is
    gone), observe, audit the constraints, then advance world and belief.
    A forecast ``forecast_horizon`` steps ahead is scored at the end of every
    epoch.  After the horizon the team finishes any dive and returns to base.
    """
    budget = config.budget
    ss = np.random.SeedSequence([int(seed), 0x5EED])
    obs_rng, switch_rng = (np.random.default_rng(s) for s in ss.spawn(2))
    world = make_world(config.world, seed, stream_steps=budget.horizon_steps + config.forecast_horizon)
    kernel0 = 1 if config.policy == "fixed_b" else 0
    belief = Belief(config.belief, world.subsurface_offset, world.F, world.v, kernel_id=kernel0)
    agent = AgentState.at_base(budget)
    noise = _noise_map(belief)
    log = []
    violations = _audit(agent, budget, 0)
    mse_s, mse_u = [], []
    total_info = 0.0
    homing = False
    ended = False
    switches = 0
    for t in range(budget.horizon_steps):
        if not ended:
            decision = None
            if config.policy == "adaptive" and t > 0 and t % config.switch.epoch == 0:
                sites = front_sites(belief, agent.asv_pos, config.switch, world.grid.points)
                decision = kernel_switch_decide(belief, sites, config.switch, switch_rng)
                switches += decision.kernel_id != belief.kernel_id
                belief.set_kernel(decision.kernel_id)

            actions = feasible_actions(agent, budget, config.weights, t, noise)
            if not homing and agent.energy_remaining - reserve(agent, budget) <= 1e-9:
                homing = True
            ended = homing and _home(agent, budget)
        if not ended:
            if homing:
                action = _homing_action(actions)
            else:
                action = plan_step(belief, agent, budget, config.weights, t, actions)
            obs_list = list(action.obs)
            if not agent.docked and agent.dive_elapsed < budget.tau_dive:
                # the AUV keeps profiling while it is down
                obs_list.append((agent.auv_pos, SUBSURFACE, noise[SUBSURFACE]))
            step_info = _observe(belief, world, obs_list, t, obs_rng)
            total_info += step_info
            agent = action.next_state
            violations.extend(_audit(agent, budget, t + 1))
            log.append(_row(t, action, agent, step_info, total_info, belief.kernel_id, homing, decision))
        # the world keeps moving and forecasts are scored even after the team is home
        world = step_environment(world)
        belief.advance()
        if (t + 1) % config.switch.epoch == 0:
            es, eu = forecast_errors(belief, world, config.forecast_horizon)
            mse_s.append(es)
            mse_u.append(eu)

    # bring the team home: finish the dive, redock, steam to base
    t = budget.horizon_steps
    while not _home(agent, budget):
        if t > budget.horizon_steps + 10_000:
            violations.append("homing did not terminate")
            break
        action = _homing_action(feasible_actions(agent, budget, config.weights, t, noise))
        agent = action.next_state
        violations.extend(_audit(agent, budget, t + 1))
        log.append(_row(t, action, agent, 0.0, total_info, belief.kernel_id, True))
        t += 1

    costs = math.fsum(r["cost"] for r in log)
    if abs(costs + agent.energy_remaining - budget.E_max) > 1e-9:
        violations.append("energy ledger does not close")
    return EpisodeResult(
        seed=int(seed),
        policy=config.policy,
        log=log,
        forecast_rmse_surface=float(math.sqrt(np.mean(mse_s))) if mse_s else float("nan"),
        forecast_rmse_subsurface=float(math.sqrt(np.mean(mse_u))) if mse_u else float("nan"),
        total_info=total_info,
        energy_used=costs,
        energy_remaining=agent.energy_remaining,
        samples_returned=agent.samples_collected,
        constraints_violated=len(violations),
        E_max=budget.E_max,
        N_max=budget.N_max,
        violations=violations,
        switches=int(switches),
    )
