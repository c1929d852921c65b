"""Lake-bloom adaptive sampling simulator."""
from .belief import SUBSURFACE, SURFACE, Belief, BeliefConfig, Observation, dense_posterior
from .episode import POLICIES, EpisodeConfig, EpisodeResult, run_episode
from .mission import (
    Action,
    AgentState,
    MissionBudget,
    PlannerWeights,
    SwitchDecision,
    SwitchSpec,
    feasible_actions,
    front_sites,
    kernel_switch_decide,
    plan_step,
    reserve,
)
from .world import Blob, BloomWorld, WorldConfig, high_advection_config, make_world, step_environment, transport

__all__ = [
    "SURFACE", "SUBSURFACE", "Belief", "BeliefConfig", "Observation", "dense_posterior",
    "POLICIES", "EpisodeConfig", "EpisodeResult", "run_episode",
    "Action", "AgentState", "MissionBudget", "PlannerWeights", "SwitchDecision", "SwitchSpec",
    "feasible_actions", "front_sites", "kernel_switch_decide", "plan_step", "reserve",
    "Blob", "BloomWorld", "WorldConfig", "high_advection_config", "make_world", "step_environment", "transport",
]
