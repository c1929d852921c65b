"""ASV/AUV team: state, budgets, feasible actions, greedy planner, kernel switching."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..infogeom import gp_info_gain
from .belief import SUBSURFACE, SURFACE, Belief

DOCKED = "docked"
UNDOCKED = "undocked"
FEAS_SLACK = 1e-9

MOVES = {
    "move_E": (1, 0),
    "move_N": (0, 1),
    "move_NE": (1, 1),
    "move_NW": (-1, 1),
    "move_S": (0, -1),
    "move_SE": (1, -1),
    "move_SW": (-1, -1),
    "move_W": (-1, 0),
}


@dataclass(frozen=True)
class MissionBudget:
    E_max: float = 3.0
    N_max: int = 8
    c_move_unit: float = 1.0
    c_dive_step: float = 0.02
    tau_dive: int = 5
    delta_meet: float = 0.1
    base_pos: tuple[float, float] = (0.05, 0.05)
    horizon_steps: int = 60

    def __post_init__(self):
        if min(self.E_max, self.c_move_unit, self.c_dive_step, self.delta_meet) < 0 or self.N_max < 0:
            raise ValueError("budget quantities must be nonnegative")
        if self.tau_dive < 1 or self.horizon_steps < 1:
            raise ValueError("tau_dive and horizon_steps must be >= 1")
        if self.delta_meet >= math.sqrt(2.0):
            raise ValueError("delta_meet must be below the domain diameter")

    def to_json(self) -> dict:
        d = dict(self.__dict__)
        d["base_pos"] = list(self.base_pos)
        return d

    @classmethod
    def from_json(cls, obj: dict) -> "MissionBudget":
        kw = dict(obj)
        if "base_pos" in kw:
            kw["base_pos"] = tuple(float(x) for x in kw["base_pos"])
        return cls(**kw)


@dataclass(frozen=True)
class PlannerWeights:
    lambda_E: float = 1.0
    lambda_N: float = 0.0
    step: float = 0.04


@dataclass(frozen=True)
class SwitchSpec:
    """Kernel-switching policy; odds (q_switch/q_stay) exp(-lambda_C + lambda_G dI)."""

    lambda_C: float = 5.0
    lambda_G: float = 2.0
    q_switch: float = 0.5
    epoch: int = 10
    window: float = 0.3
    front_threshold: float = 8.0
    max_sites: int = 12
    probe_kernel: int | None = None  # defaults to the shortest lengthscale


@dataclass(frozen=True)
class AgentState:
    asv_pos: tuple[float, float]
    auv_pos: tuple[float, float]
    sigma: str = DOCKED
    dive_elapsed: int = 0
    energy_remaining: float = 0.0
    samples_collected: int = 0

    @classmethod
    def at_base(cls, budget: MissionBudget) -> "AgentState":
        p = tuple(float(x) for x in budget.base_pos)
        return cls(p, p, DOCKED, 0, float(budget.E_max), 0)

    @property
    def docked(self) -> bool:
        return self.sigma == DOCKED


@dataclass(frozen=True)
class Action:
    name: str
    next_state: AgentState
    cost: float
    obs: tuple  # ((pos, channel, noise_var), ...)
    move_cost: float = 0.0

    @property
    def is_move(self) -> bool:
        return self.name.startswith("move_") or self.name == "return"


def dist(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def reserve(state: AgentState, budget: MissionBudget) -> float:
    """Energy needed to get home from ``state``, finishing any dive first."""
    if state.docked:
        return budget.c_move_unit * dist(state.asv_pos, budget.base_pos)
    remaining = max(0, budget.tau_dive - state.dive_elapsed)
    return budget.c_move_unit * (dist(state.asv_pos, state.auv_pos) + dist(state.auv_pos, budget.base_pos)) + (
        budget.c_dive_step * remaining
    )


def _toward(p, q, h):
    d = dist(p, q)
    if d <= h:
        return (float(q[0]), float(q[1])), d
    return (p[0] + (q[0] - p[0]) * h / d, p[1] + (q[1] - p[1]) * h / d), h


def _candidates(agent: AgentState, budget: MissionBudget, weights: PlannerWeights, t: int, noise) -> list[Action]:
    h = weights.step
    c = budget.c_move_unit
    diving = (not agent.docked) and agent.dive_elapsed < budget.tau_dive
    dive_cost = budget.c_dive_step if diving else 0.0
    dive_next = agent.dive_elapsed + 1 if diving else agent.dive_elapsed
    acts = []

    def asv_move(name, target, length):
        target = (float(target[0]), float(target[1]))
        if agent.docked:
            nxt = replace(agent, asv_pos=target, auv_pos=target)
        else:
            nxt = replace(agent, asv_pos=target, dive_elapsed=dive_next)
        mc = c * length
        cost = mc + dive_cost
        nxt = replace(nxt, energy_remaining=agent.energy_remaining - cost)
        acts.append(Action(name, nxt, cost, ((target, SURFACE, noise[SURFACE]),), mc))

    for name, (dx, dy) in MOVES.items():
        step = h / math.sqrt(dx * dx + dy * dy)
        tgt = (agent.asv_pos[0] + dx * step, agent.asv_pos[1] + dy * step)
        if not (0.0 <= tgt[0] <= 1.0 and 0.0 <= tgt[1] <= 1.0):
            continue
        asv_move(name, tgt, h)

    asv_move("stay", agent.asv_pos, 0.0)

    goal = budget.base_pos if agent.docked else agent.auv_pos
    tgt, length = _toward(agent.asv_pos, goal, h)
    if length > 0:  # at the goal already, "stay" is the same action
        asv_move("return", tgt, length)

    if agent.samples_collected < budget.N_max:
        nxt = replace(
            agent,
            samples_collected=agent.samples_collected + 1,
            dive_elapsed=dive_next,
            energy_remaining=agent.energy_remaining - dive_cost,
        )
        acts.append(Action("collect", nxt, dive_cost, ((agent.asv_pos, SURFACE, noise["sample"]),)))

    if agent.docked and t + budget.tau_dive <= budget.horizon_steps:
        nxt = replace(
            agent,
            sigma=UNDOCKED,
            dive_elapsed=1,
            energy_remaining=agent.energy_remaining - budget.c_dive_step,
        )
        acts.append(Action("undock", nxt, budget.c_dive_step, ((agent.asv_pos, SUBSURFACE, noise[SUBSURFACE]),)))

    if (not agent.docked) and agent.dive_elapsed >= budget.tau_dive:
        d = dist(agent.asv_pos, agent.auv_pos)
        if d <= budget.delta_meet:
            p = agent.auv_pos
            nxt = replace(agent, asv_pos=p, sigma=DOCKED, dive_elapsed=0, energy_remaining=agent.energy_remaining - c * d)
            acts.append(Action("redock", nxt, c * d, ((p, SURFACE, noise[SURFACE]),), c * d))
    return acts


def admissible(action: Action, agent: AgentState, budget: MissionBudget) -> bool:
    nxt = action.next_state
    if action.name == "return":
        return True
    if not nxt.docked and dist(nxt.asv_pos, nxt.auv_pos) > budget.delta_meet + 1e-12:
        return False
    return nxt.energy_remaining >= reserve(nxt, budget) - FEAS_SLACK


def feasible_actions(
    agent: AgentState,
    budget: MissionBudget,
    weights: PlannerWeights = PlannerWeights(),
    t: int = 0,
    noise: dict | None = None,
) -> list[Action]:
    """Candidate actions that keep the return reserve and the rendezvous radius."""
    if noise is None:
        noise = {SURFACE: 0.05, SUBSURFACE: 0.01, "sample": 0.01}
    return [a for a in _candidates(agent, budget, weights, t, noise) if admissible(a, agent, budget)]


def _noise_map(belief: Belief) -> dict:
    c = belief.cfg
    return {SURFACE: c.noise_surface, SUBSURFACE: c.noise_subsurface, "sample": c.noise_sample}


def action_info(action: Action, belief: Belief) -> float:
    """0.5 ln(1 + var/noise) summed over the action's observation sites."""
    tot = 0.0
    for pos, channel, nv in action.obs:
        _, var = belief.channel_posterior(pos, channel)
        tot += 0.5 * math.log1p(float(var[0]) / nv)
    return tot


def plan_step(belief: Belief, agent: AgentState, budget: MissionBudget, weights: PlannerWeights, t: int = 0,
              actions: list[Action] | None = None) -> Action:
    """Greedy one-step choice; ties go to least energy, then action name."""
    if actions is None:
        actions = feasible_actions(agent, budget, weights, t, _noise_map(belief))
    sites = []
    for a in actions:
        for pos, channel, _ in a.obs:
            sites.append(belief.latent_site(pos, channel))
    _, var = belief.posterior(np.array(sites)) if sites else (None, np.zeros(0))
    best = None
    i = 0
    for a in actions:
        gain = 0.0
        for _, _, nv in a.obs:
            gain += 0.5 * math.log1p(float(var[i]) / nv)
            i += 1
        score = gain - weights.lambda_E * a.move_cost - weights.lambda_N * (a.name == "collect")
        key = (-round(score, 12), round(a.cost, 12), a.name)
        if best is None or key < best[0]:
            best = (key, a)
    return best[1]


def front_sites(belief: Belief, center, spec: SwitchSpec, grid: np.ndarray) -> np.ndarray:
    """Grid sites near ``center`` where the probe-kernel posterior mean is steep."""
    c = np.asarray(center, dtype=float)
    near = grid[np.hypot(*(grid - c).T) <= spec.window]
    if near.shape[0] == 0 or not belief.observations:
        return np.zeros((0, 2))
    probe = spec.probe_kernel
    if probe is None:
        probe = int(np.argmin(belief.cfg.lengthscales))
    d = 0.01
    offs = np.array([[d, 0], [-d, 0], [0, d], [0, -d]])
    pts = (near[:, None, :] + offs[None, :, :]).reshape(-1, 2)
    m, _ = belief.posterior(pts, kernel_id=probe)
    m = m.reshape(-1, 4)
    grad = np.hypot((m[:, 0] - m[:, 1]) / (2 * d), (m[:, 2] - m[:, 3]) / (2 * d))
    keep = np.argsort(-grad)[: spec.max_sites]
    keep = keep[grad[keep] >= spec.front_threshold]
    return near[np.sort(keep)]


@dataclass(frozen=True)
class SwitchDecision:
    kernel_id: int
    delta_info: float
    odds: float
    p_switch: float
    n_sites: int


def conditional_info_gain(belief: Belief, sites: np.ndarray, kernel_id: int, noise_var: float) -> float:
    if sites.shape[0] == 0:
        return 0.0
    _, cov = belief.posterior(sites, kernel_id=kernel_id, full_cov=True)
    return gp_info_gain(cov, noise_var).nats


def kernel_switch_decide(belief: Belief, candidate_designs: np.ndarray, switch_spec: SwitchSpec,
                         rng: np.random.Generator) -> SwitchDecision:
    """Switch with probability o/(1+o) where o = (q_sw/q_stay) exp(-lambda_C + lambda_G dI)."""
    cur = belief.kernel_id
    other = 1 - cur if len(belief.cfg.lengthscales) == 2 else (cur + 1) % len(belief.cfg.lengthscales)
    nv = belief.cfg.noise_surface
    d_info = conditional_info_gain(belief, candidate_designs, other, nv) - conditional_info_gain(
        belief, candidate_designs, cur, nv
    )
    q_sw = switch_spec.q_switch
    odds = q_sw / (1.0 - q_sw) * math.exp(-switch_spec.lambda_C + switch_spec.lambda_G * d_info)
    p = odds / (1.0 + odds) if math.isfinite(odds) else 1.0
    u = rng.random()
    new = other if u < p else cur
    return SwitchDecision(new, d_info, odds, p, int(candidate_designs.shape[0]))
