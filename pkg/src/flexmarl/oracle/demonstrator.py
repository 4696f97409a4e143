"""Day-ahead optimum as a demonstrator, baseline rollouts and marginal rewards."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import environment as env
from ..environment import DEFAULT_ACTION, JointAction
from ..profiles import ScenarioData
from .lp import build_day_lp
from .simplex import LpError, LpSolution, solve_lp

REPLAY_TOL = 1e-6


class ReplayMismatch(RuntimeError):
    pass


@dataclass
class DayPlan:
    """Optimal physical decisions for one day, arrays shaped ``(n_homes, T)``."""

    day: int
    b_in: np.ndarray
    b_out: np.ndarray
    h: np.ndarray
    c: np.ndarray
    objective: float
    solutions: list[LpSolution]
    cancelled: float = 0.0  # largest simultaneous charge/discharge removed


@dataclass
class Demonstration:
    plan: DayPlan
    actions: np.ndarray  # (T, n_homes, 3)
    rewards: np.ndarray  # (T,)

    @property
    def cost(self) -> float:
        return -float(self.rewards.sum())


def solve_day(scenario: ScenarioData, day: int, decompose: bool = False) -> DayPlan:
    """Solve the day's joint LP over all homes.

    With ``decompose`` each home is solved as its own block with the grid
    cost charged on its import; the optimum is the same because the
    substation balance only couples homes through a linear cost.
    """
    key = ("day_plan", day, decompose)
    if key in scenario._cache:
        return scenario._cache[key]
    n, T = scenario.n_homes, scenario.horizon
    if decompose:
        lps = [build_day_lp(scenario, day, homes=[i], substation=False) for i in range(n)]
    else:
        lps = [build_day_lp(scenario, day)]
    sols = [solve_lp(lp) for lp in lps]
    for s in sols:
        if not s.ok:
            raise LpError(f"day {day}: {s.status} ({s.message})")
    plan = {name: np.zeros((n, T)) for name in ("b_in", "b_out", "h", "c")}
    t0 = day * T
    for sol in sols:
        for i in sol.lp.meta["homes"]:
            for k in range(T):
                for name in ("b_in", "b_out", "h"):
                    plan[name][i, k] = sol.value(f"{name}[{i},{k}]")
                flex = sum(sol.value(nm) for td in range(max(0, k - scenario.homes.n_flex), k + 1)
                           if (nm := f"c_hat[{i},{k},{td}]") in sol.lp.index)
                plan["c"][i, k] = scenario.homes.fixed_demand[i, t0 + k] + flex
    both = np.minimum(plan["b_in"], plan["b_out"])
    plan["b_in"] -= both
    plan["b_out"] -= both
    objective = sum(s.objective for s in sols)
    if decompose:
        cg = scenario.cost_coeff[t0:t0 + T]
        objective += float(np.sum(cg)) * scenario.grid.grid_loss
    out = DayPlan(day, plan["b_in"], plan["b_out"], plan["h"], plan["c"], objective, sols,
                  float(both.max(initial=0.0)))
    scenario._cache[key] = out
    return out


def _ratio(value, low, high):
    span = high - low
    if span <= 1e-12:
        return 0.0
    return float(np.clip((value - low) / span, 0.0, 1.0))


def action_for_decisions(state, i, b_in, b_out, h, c, scenario: ScenarioData):
    """Action triple whose translation at ``state`` gives the stated decisions."""
    bat, heat, (c_lo, c_hi) = env.home_ranges(state, i, scenario)
    if bat.b_in_forced > 0:
        a_bat = _ratio(b_in, bat.b_in_forced, bat.b_in_max)
    elif bat.b_out_forced > 0:
        a_bat = -_ratio(b_out, bat.b_out_forced, bat.b_out_max)
    elif b_in >= b_out:
        a_bat = _ratio(b_in - b_out, 0.0, bat.b_in_max)
    else:
        a_bat = -_ratio(b_out - b_in, 0.0, bat.b_out_max)
    return a_bat, _ratio(h, heat.low, heat.high), _ratio(c, c_lo, c_hi)


def extract_demonstrations(plan: DayPlan, scenario: ScenarioData, tol: float = REPLAY_TOL) -> Demonstration:
    """Invert the action translation along the plan and verify by replay."""
    n, T = scenario.n_homes, scenario.horizon
    state = env.initial_state(scenario, plan.day)
    actions = np.zeros((T, n, 3))
    rewards = np.zeros(T)
    for k in range(T):
        for i in range(n):
            actions[k, i] = action_for_decisions(state, i, plan.b_in[i, k], plan.b_out[i, k],
                                                 plan.h[i, k], plan.c[i, k], scenario)
        state, out = env.step(state, JointAction.from_array(actions[k]), scenario)
        for name, got in (("b_in", out.b_in), ("b_out", out.b_out), ("h", out.h), ("c", out.c)):
            err = float(np.max(np.abs(got - getattr(plan, name)[:, k])))
            if err > tol:
                raise ReplayMismatch(f"day {plan.day} step {k}: {name} off by {err:.3g} kWh")
        rewards[k] = out.reward
    return Demonstration(plan, actions, rewards)


def demonstration(scenario: ScenarioData, day: int) -> Demonstration:
    key = ("demonstration", day)
    if key not in scenario._cache:
        scenario._cache[key] = extract_demonstrations(solve_day(scenario, day), scenario)
    return scenario._cache[key]


def rollout(scenario: ScenarioData, day: int, policy) -> tuple[float, np.ndarray]:
    """Run ``policy(state) -> JointAction`` for one day.

    Returns the day's cost and the accumulated ``(c_g, c_d, c_s)`` terms.
    """
    state = env.initial_state(scenario, day)
    end = env.episode_end(state, scenario)
    total = 0.0
    while state.t < end:
        state, out = env.step(state, policy(state), scenario)
        total -= out.reward
    return total, np.asarray(state.costs)


def baseline_action(n_homes: int) -> JointAction:
    """Inflexible operation: charge at once, minimal heating, no load shifting."""
    return JointAction.constant(n_homes, 1.0, 0.0, 1.0)


def baseline_rollout(scenario: ScenarioData, days=None) -> np.ndarray:
    """Cost of the inflexible baseline for each day."""
    days = range(scenario.n_days) if days is None else days
    act = baseline_action(scenario.n_homes)
    return np.array([rollout(scenario, d, lambda s: act)[0] for d in days])


def marginal_reward(state, action: JointAction, i: int, scenario: ScenarioData) -> float:
    """Team reward of ``action`` minus that with agent ``i`` on the default triple."""
    _, out = env.step(state.copy(), action, scenario)
    _, out_default = env.step(state.copy(), action.with_agent(i, DEFAULT_ACTION), scenario)
    return out.reward - out_default.reward
