"""Multi-home Dec-POMDP: action translation, dynamics and cooperative reward.

Agents emit a bounded triple per home (battery in [-1, 1], heating and
consumption in [0, 1]). :func:`translate_actions` maps each triple onto the
feasible set of physical decisions for the current state, so any action
sequence keeps every home within its battery, comfort and demand
constraints. Episodes are single days: each starts from the configured
initial state and must return the battery to its initial level by the end.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .profiles import GridSignals, ScenarioData, reserve_bounds

WINDOW = 24
TOL = 1e-9


class InfeasibleScenario(RuntimeError):
    pass


@dataclass
class EnvState:
    t: int
    day: int
    E: list[float]
    T_m: list[float]
    T_air: list[float]
    flex_queue: list[list[tuple[float, int]]]
    costs: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def copy(self) -> "EnvState":
        return EnvState(self.t, self.day, list(self.E), list(self.T_m), list(self.T_air),
                        [list(q) for q in self.flex_queue], self.costs)


@dataclass
class JointAction:
    a_bat: np.ndarray
    a_heat: np.ndarray
    a_cons: np.ndarray

    @classmethod
    def from_array(cls, arr) -> "JointAction":
        arr = np.asarray(arr, dtype=float).reshape(-1, 3)
        return cls(arr[:, 0].copy(), arr[:, 1].copy(), arr[:, 2].copy())

    @classmethod
    def constant(cls, n: int, a_bat=0.0, a_heat=0.0, a_cons=1.0) -> "JointAction":
        return cls(np.full(n, float(a_bat)), np.full(n, float(a_heat)), np.full(n, float(a_cons)))

    def as_array(self) -> np.ndarray:
        return np.stack([self.a_bat, self.a_heat, self.a_cons], axis=1)

    def with_agent(self, i: int, triple) -> "JointAction":
        arr = self.as_array()
        arr[i] = triple
        return JointAction.from_array(arr)

    def check_bounds(self):
        if (np.any(np.abs(self.a_bat) > 1.0) or np.any(self.a_heat < 0) or np.any(self.a_heat > 1)
                or np.any(self.a_cons < 0) or np.any(self.a_cons > 1)
                or not np.all(np.isfinite(self.as_array()))):
            raise ValueError("actions out of bounds")


DEFAULT_ACTION = (0.0, 0.0, 1.0)


class BatteryRange(NamedTuple):
    b_in_forced: float
    b_in_max: float
    b_out_max: float
    b_out_forced: float = 0.0


class HeatRange(NamedTuple):
    low: float
    high: float
    overwarm: bool = False


class Decisions(NamedTuple):
    b_in: np.ndarray
    b_out: np.ndarray
    h: np.ndarray
    c: np.ndarray


@dataclass
class StepOutcome:
    b_in: np.ndarray
    b_out: np.ndarray
    h: np.ndarray
    c: np.ndarray
    c_flex: np.ndarray
    p: np.ndarray
    loss_ch: np.ndarray
    loss_dis: np.ndarray
    g: float
    reward: float
    costs: tuple[float, float, float]
    overwarm: list[int]
    done: bool


# ---------------------------------------------------------------------------
# feasible ranges


def battery_feasible_range(E: float, t: int, home: int, scenario: ScenarioData) -> BatteryRange:
    """Charge/discharge limits at global step ``t`` that keep every future
    trip and the end-of-day level reachable."""
    T = scenario.horizon
    day, k = divmod(t, T)
    lower, upper, raw = reserve_bounds(scenario, day, home)
    bat = scenario.battery[home]
    if raw[k + 1] > bat.capacity + TOL:
        raise InfeasibleScenario(f"home {home}: trips after t={t} exceed battery capacity")
    mu = int(scenario.homes.ev_availability[home, t])
    d = float(scenario.homes.ev_demand[home, t])
    gate = mu if bat.gate_discharge_by_availability else 1
    lo = max(-gate * bat.max_discharge, lower[k + 1] + d - E)
    hi = min(mu * bat.max_charge, bat.capacity - E + d, upper[k + 1] + d - E)
    if lo > hi + TOL:
        raise InfeasibleScenario(f"home {home}: battery energy {E:.6g} outside reserve at t={t}")
    if lo > hi:
        lo = hi
    b_in_max = max(0.0, hi)
    b_out_max = max(0.0, -lo)
    return BatteryRange(min(max(0.0, lo), b_in_max), b_in_max, b_out_max,
                        min(max(0.0, -hi), b_out_max))


def heating_feasible_range(T_m: float, T_e: float, phi: float, bounds, thermal) -> HeatRange:
    """Heating range keeping the next air temperature inside ``bounds``."""
    t_low, t_high = bounds
    k = thermal.kappa
    base = k[1, 0] + k[1, 1] * T_m + k[1, 2] * T_e + k[1, 3] * phi
    gain = k[1, 4]
    low = max(0.0, (t_low - base) / gain)
    high = max(low, min(thermal.heat_power_cap, (t_high - base) / gain))
    return HeatRange(low, high, base > t_high + TOL)


def consumption_feasible_range(flex_queue, d_fixed: float, t: int) -> tuple[float, float]:
    """Consumption bounds: due entries must be served, all queued ones may be."""
    due = sum(a for a, dl in flex_queue if dl <= t)
    total = sum(a for a, _ in flex_queue)
    return d_fixed + due, d_fixed + total


def allocate_flex(flex_queue, amount: float, t: int):
    """Serve ``amount`` of queued flexible demand earliest-deadline-first."""
    left = amount
    out = []
    for a, dl in sorted(flex_queue, key=lambda e: e[1]):
        take = min(a, left)
        left -= take
        rest = a - take
        if dl <= t:
            if rest > 1e-7:
                raise InfeasibleScenario(f"flexible demand due at t={t} left unserved ({rest:.3g} kWh)")
            continue
        if rest > 1e-12:
            out.append((rest, dl))
    return out


def _pending_queue(state: EnvState, i: int, scenario: ScenarioData):
    t = state.t
    q = state.flex_queue[i]
    d = float(scenario.homes.flex_demand[i, t])
    if d > 0:
        q = q + [(d, scenario.deadline(t))]
    return q


def home_ranges(state: EnvState, i: int, scenario: ScenarioData):
    """Battery, heating and consumption ranges for home ``i`` at ``state.t``."""
    t = state.t
    h = scenario.homes
    bat = battery_feasible_range(state.E[i], t, i, scenario)
    heat = heating_feasible_range(state.T_m[i], float(h.ext_temp[t]), float(h.solar_heat[t]),
                                  (float(h.temp_low[i, t]), float(h.temp_high[i, t])),
                                  scenario.thermal[i])
    cons = consumption_feasible_range(_pending_queue(state, i, scenario),
                                      float(h.fixed_demand[i, t]), t)
    return bat, heat, cons


def battery_from_action(a: float, rng: BatteryRange) -> tuple[float, float]:
    if rng.b_in_forced > 0:
        return rng.b_in_forced + max(a, 0.0) * (rng.b_in_max - rng.b_in_forced), 0.0
    if rng.b_out_forced > 0:
        return 0.0, rng.b_out_forced + max(-a, 0.0) * (rng.b_out_max - rng.b_out_forced)
    if a >= 0:
        return a * rng.b_in_max, 0.0
    return 0.0, -a * rng.b_out_max


def _translate(state: EnvState, action: JointAction, scenario: ScenarioData):
    n = scenario.n_homes
    b_in, b_out, heat, cons = (np.zeros(n) for _ in range(4))
    overwarm = []
    for i in range(n):
        bat, hr, (c_lo, c_hi) = home_ranges(state, i, scenario)
        b_in[i], b_out[i] = battery_from_action(float(action.a_bat[i]), bat)
        ah, ac = float(action.a_heat[i]), float(action.a_cons[i])
        heat[i] = (1 - ah) * hr.low + ah * hr.high
        cons[i] = (1 - ac) * c_lo + ac * c_hi
        if hr.overwarm:
            overwarm.append(i)
    return Decisions(b_in, b_out, heat, cons), overwarm


def translate_actions(state: EnvState, action: JointAction, scenario: ScenarioData) -> Decisions:
    """Physical decisions ``(b_in, b_out, h, c)`` per home for ``action``."""
    return _translate(state, action, scenario)[0]


# ---------------------------------------------------------------------------
# dynamics and reward


def step_costs(p, g: float, b_in, b_out, grid: GridSignals, cost_coeff: float):
    c_g = cost_coeff * (g + grid.grid_loss)
    c_d = grid.export_charge * float(np.sum(np.maximum(-np.asarray(p), 0.0)))
    c_s = grid.storage_cost * float(np.sum(b_in) + np.sum(b_out))
    return c_g, c_d, c_s


def step_reward(p, g: float, b_in, b_out, grid: GridSignals, t: int) -> float:
    """Team reward: minus the step's grid, export and storage costs."""
    return -sum(step_costs(p, g, b_in, b_out, grid, float(grid.cost_coeff[t])))


def initial_state(scenario: ScenarioData, day: int) -> EnvState:
    n = scenario.n_homes
    return EnvState(t=day * scenario.horizon, day=day,
                    E=[b.initial for b in scenario.battery],
                    T_m=[th.initial_mass_temp for th in scenario.thermal],
                    T_air=[th.initial_air_temp for th in scenario.thermal],
                    flex_queue=[[] for _ in range(n)])


def episode_end(state: EnvState, scenario: ScenarioData) -> int:
    return (state.day + 1) * scenario.horizon


def apply_decisions(state: EnvState, dec: Decisions, scenario: ScenarioData, overwarm=()):
    """Advance ``state`` with already-feasible physical decisions."""
    t = state.t
    h = scenario.homes
    n = scenario.n_homes
    E, T_m, T_air, queues = [], [], [], []
    p = np.zeros(n)
    c_flex = np.zeros(n)
    loss_ch, loss_dis = np.zeros(n), np.zeros(n)
    for i in range(n):
        bat = scenario.battery[i]
        b_in, b_out, heat, cons = float(dec.b_in[i]), float(dec.b_out[i]), float(dec.h[i]), float(dec.c[i])
        E.append(state.E[i] + b_in - b_out - float(h.ev_demand[i, t]))
        k = scenario.thermal[i].kappa
        x = (1.0, state.T_m[i], float(h.ext_temp[t]), float(h.solar_heat[t]), heat)
        T_m.append(k[0, 0] * x[0] + k[0, 1] * x[1] + k[0, 2] * x[2] + k[0, 3] * x[3] + k[0, 4] * x[4])
        T_air.append(k[1, 0] * x[0] + k[1, 1] * x[1] + k[1, 2] * x[2] + k[1, 3] * x[3] + k[1, 4] * x[4])
        c_flex[i] = cons - float(h.fixed_demand[i, t])
        queues.append(allocate_flex(_pending_queue(state, i, scenario), c_flex[i], t))
        p[i] = cons + heat + b_in / bat.eta_ch - bat.eta_dis * b_out - float(h.pv[i, t])
        loss_ch[i] = b_in * (1.0 / bat.eta_ch - 1.0)
        loss_dis[i] = b_out * (1.0 - bat.eta_dis)
    g = float(np.sum(p))
    costs = step_costs(p, g, dec.b_in, dec.b_out, scenario.grid, float(scenario.cost_coeff[t]))
    cum = tuple(a + b for a, b in zip(state.costs, costs))
    new = EnvState(t=t + 1, day=state.day, E=E, T_m=T_m, T_air=T_air, flex_queue=queues, costs=cum)
    done = new.t >= episode_end(state, scenario)
    out = StepOutcome(b_in=np.asarray(dec.b_in, float), b_out=np.asarray(dec.b_out, float),
                      h=np.asarray(dec.h, float), c=np.asarray(dec.c, float), c_flex=c_flex, p=p,
                      loss_ch=loss_ch, loss_dis=loss_dis, g=g, reward=-sum(costs), costs=costs,
                      overwarm=list(overwarm), done=done)
    return new, out


def step(state: EnvState, action: JointAction, scenario: ScenarioData):
    """Translate ``action``, advance one step and return ``(state', outcome)``."""
    if state.t >= episode_end(state, scenario):
        raise ValueError(f"episode for day {state.day} already finished")
    dec, overwarm = _translate(state, action, scenario)
    return apply_decisions(state, dec, scenario, overwarm)


# ---------------------------------------------------------------------------
# observations


def _window(scenario: ScenarioData, t: int, day: int) -> np.ndarray:
    end = (day + 1) * scenario.horizon - 1
    t = min(t, end)
    idx = np.minimum(np.arange(t, t + WINDOW), end)
    return scenario.cost_coeff[idx]


def _local_features(state: EnvState, i: int, scenario: ScenarioData) -> np.ndarray:
    t = min(state.t, episode_end(state, scenario) - 1)
    h = scenario.homes
    lo, hi = float(h.temp_low[i, t]), float(h.temp_high[i, t])
    day = slice(state.day * scenario.horizon, (state.day + 1) * scenario.horizon)
    daily = float(h.fixed_demand[i, day].sum() + h.flex_demand[i, day].sum())
    queued = sum(a for a, _ in state.flex_queue[i])
    return np.array([
        state.E[i] / scenario.battery[i].capacity,
        (state.T_air[i] - lo) / max(hi - lo, 1e-9),
        queued / daily if daily > 0 else 0.0,
    ])


def observe(state: EnvState, i: int, mode: str, scenario: ScenarioData,
            local_state: bool = False) -> np.ndarray:
    """Agent ``i``'s observation: the current grid cost coefficient (``iql``)
    or the coefficients for the next 24 steps (``facmac``)."""
    t = min(state.t, episode_end(state, scenario) - 1)
    if mode == "iql":
        obs = scenario.cost_coeff[t:t + 1].copy()
    elif mode == "facmac":
        obs = _window(scenario, t, state.day)
    else:
        raise ValueError(f"unknown observation mode {mode!r}")
    if local_state:
        tau = (state.t - state.day * scenario.horizon) / scenario.horizon
        obs = np.concatenate([obs, _local_features(state, i, scenario), [tau]])
    return obs


def observation_size(mode: str, local_state: bool = False) -> int:
    return (1 if mode == "iql" else WINDOW) + (4 if local_state else 0)


def global_state(state: EnvState, scenario: ScenarioData) -> np.ndarray:
    n = scenario.n_homes
    feats = np.array([_local_features(state, i, scenario) for i in range(n)])
    tau = (state.t - state.day * scenario.horizon) / scenario.horizon
    return np.concatenate([_window(scenario, state.t, state.day), feats[:, 0], feats[:, 1],
                           feats[:, 2], [tau]])


def global_state_size(n_homes: int) -> int:
    return WINDOW + 3 * n_homes + 1


# ---------------------------------------------------------------------------
# convenience wrapper and traces


TRACE_HEADER = ["t", "home", "obs_hash", "a_bat", "a_heat", "a_cons", "b_in", "b_out", "h", "c",
                "p", "grid_cost", "distribution_cost", "storage_cost"]


class LocalEnergyEnv:
    """Stateful wrapper around :func:`step` for rollouts."""

    def __init__(self, scenario: ScenarioData, obs_mode: str = "facmac", local_state: bool = False,
                 record_trace: bool = False):
        self.scenario = scenario
        self.obs_mode = obs_mode
        self.local_state = local_state
        self.record_trace = record_trace
        self.trace: list[list] = []
        self.state: EnvState | None = None

    def reset(self, day: int) -> list[np.ndarray]:
        self.state = initial_state(self.scenario, day)
        self.trace = []
        return self.observations()

    def observations(self) -> list[np.ndarray]:
        return [observe(self.state, i, self.obs_mode, self.scenario, self.local_state)
                for i in range(self.scenario.n_homes)]

    def global_state(self) -> np.ndarray:
        return global_state(self.state, self.scenario)

    def step(self, action: JointAction):
        prev = self.state
        obs = self.observations() if self.record_trace else None
        self.state, out = step(prev, action, self.scenario)
        if self.record_trace:
            self._record(prev.t, obs, action, out)
        return self.observations(), out.reward, out.done, out

    def _record(self, t, obs, action, out):
        sc = self.scenario
        cg = float(sc.cost_coeff[t])
        for i in range(sc.n_homes):
            digest = hashlib.sha1(np.ascontiguousarray(obs[i]).tobytes()).hexdigest()[:12]
            self.trace.append([
                t, i, digest, float(action.a_bat[i]), float(action.a_heat[i]), float(action.a_cons[i]),
                float(out.b_in[i]), float(out.b_out[i]), float(out.h[i]), float(out.c[i]),
                float(out.p[i]), cg * float(out.p[i]),
                sc.grid.export_charge * max(-float(out.p[i]), 0.0),
                sc.grid.storage_cost * float(out.b_in[i] + out.b_out[i]),
            ])


def write_trace(rows, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(TRACE_HEADER)
        for row in rows:
            w.writerow([repr(x) if isinstance(x, float) else x for x in row])
    return path


def constraint_violations(state: EnvState, out: StepOutcome, scenario: ScenarioData, t: int,
                          tol: float = TOL) -> list[str]:
    """Physical constraint checks for one realised step (used by tests and fuzzing).

    ``state`` is the state after the step taken at global step ``t``.
    """
    h = scenario.homes
    problems = []
    for i in range(scenario.n_homes):
        bat = scenario.battery[i]
        E = state.E[i]
        nxt = state.t
        mu_next = h.ev_availability[i, nxt] if nxt < scenario.n_steps and not out.done else 0
        if E > bat.capacity + tol or E < mu_next * bat.min_level - tol or E < -tol:
            problems.append(f"home {i}: battery bound violated (E={E})")
        if out.b_in[i] > h.ev_availability[i, t] * bat.max_charge + tol:
            problems.append(f"home {i}: charging while away or above limit")
        gate = h.ev_availability[i, t] if bat.gate_discharge_by_availability else 1
        if out.b_out[i] > gate * bat.max_discharge + tol:
            problems.append(f"home {i}: discharge above limit")
        if min(out.b_in[i], out.b_out[i], out.h[i], out.c[i]) < -tol:
            problems.append(f"home {i}: negative decision")
        if out.b_in[i] * out.b_out[i] > tol:
            problems.append(f"home {i}: simultaneous charge and discharge")
        if not out.overwarm or i not in out.overwarm:
            if state.T_air[i] < h.temp_low[i, t] - tol or state.T_air[i] > h.temp_high[i, t] + tol:
                problems.append(f"home {i}: air temperature {state.T_air[i]} outside comfort band")
        if out.done and abs(E - bat.initial) > tol:
            problems.append(f"home {i}: terminal energy {E} != initial {bat.initial}")
        if out.done and state.flex_queue[i]:
            problems.append(f"home {i}: flexible demand left at end of day")
        if any(dl < nxt for _, dl in state.flex_queue[i]):
            problems.append(f"home {i}: queue entry past deadline")
        if not math.isfinite(state.T_m[i]):
            problems.append(f"home {i}: non-finite mass temperature")
    return problems
