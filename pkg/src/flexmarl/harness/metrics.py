"""Savings metric and cost-breakdown evaluation of policies."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import environment as env
from ..environment import JointAction
from ..oracle.demonstrator import baseline_action, demonstration
from ..profiles import ScenarioData

MONTH_DAYS = 365.25 / 12
TERMS = ("energy", "carbon", "distribution", "storage")


def compute_savings(baseline_cost: float, method_cost: float, n_homes: int) -> float:
    """Savings per home and month from daily costs."""
    if n_homes < 1:
        raise ValueError("n_homes must be >= 1")
    if not (np.isfinite(baseline_cost) and np.isfinite(method_cost)):
        raise ValueError("costs must be finite")
    return (baseline_cost - method_cost) * MONTH_DAYS / n_homes


@dataclass
class Evaluation:
    cost: float  # mean per day
    day_costs: list[float]
    breakdown: dict[str, float] = field(default_factory=dict)  # mean per day, by term

    def to_dict(self) -> dict:
        return {"cost": self.cost, "day_costs": list(self.day_costs), "breakdown": dict(self.breakdown)}


class ConstantPolicy:
    def __init__(self, action: JointAction):
        self.action = action

    def act(self, state, scenario):
        return self.action


class BaselinePolicy(ConstantPolicy):
    def __init__(self, n_homes: int):
        super().__init__(baseline_action(n_homes))


class DemonstratorPolicy:
    """Replays the day-ahead optimum's extracted actions step by step."""

    def act(self, state, scenario):
        demo = demonstration(scenario, state.day)
        return JointAction.from_array(demo.actions[state.t - state.day * scenario.horizon])


def evaluate_policies(policy, scenario: ScenarioData, days) -> Evaluation:
    """Deterministic rollouts of ``policy`` with per-term cost accounting.

    The grid term is split into its wholesale-energy and carbon addends.
    """
    grid = scenario.grid
    price = grid.wholesale_price
    carbon = grid.carbon_intensity * grid.social_cost_carbon
    day_costs = []
    totals = dict.fromkeys(TERMS, 0.0)
    for day in days:
        state = env.initial_state(scenario, day)
        end = env.episode_end(state, scenario)
        cost = 0.0
        while state.t < end:
            t = state.t
            state, out = env.step(state, policy.act(state, scenario), scenario)
            flow = out.g + grid.grid_loss
            totals["energy"] += float(price[t]) * flow
            totals["carbon"] += float(carbon[t]) * flow
            totals["distribution"] += out.costs[1]
            totals["storage"] += out.costs[2]
            cost -= out.reward
        day_costs.append(cost)
    n = max(1, len(day_costs))
    return Evaluation(float(np.mean(day_costs)) if day_costs else 0.0, day_costs,
                      {k: v / n for k, v in totals.items()})


def percentiles(values) -> dict[str, float]:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return {"p25": float("nan"), "p50": float("nan"), "p75": float("nan"), "mean": float("nan")}
    p25, p50, p75 = np.percentile(v, [25, 50, 75])
    return {"p25": float(p25), "p50": float(p50), "p75": float(p75), "mean": float(v.mean())}
