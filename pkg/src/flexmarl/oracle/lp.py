"""Day-ahead linear program for the cooperative home energy problem."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..profiles import ScenarioData


@dataclass
class LinearProgram:
    """``min c.x + offset`` s.t. ``A_eq x = b_eq``, ``A_ub x <= b_ub``, ``lb <= x <= ub``."""

    names: list[str]
    c: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    A_ub: np.ndarray
    b_ub: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    offset: float = 0.0
    eq_names: list[str] = field(default_factory=list)
    ub_names: list[str] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.index = {name: j for j, name in enumerate(self.names)}

    @property
    def n_vars(self) -> int:
        return len(self.names)

    def objective(self, x) -> float:
        return float(self.c @ x) + self.offset

    def max_violation(self, x) -> float:
        """Largest primal infeasibility of ``x`` over all rows and bounds."""
        x = np.asarray(x, dtype=float)
        worst = 0.0
        if len(self.b_eq):
            worst = max(worst, float(np.max(np.abs(self.A_eq @ x - self.b_eq))))
        if len(self.b_ub):
            worst = max(worst, float(np.max(self.A_ub @ x - self.b_ub, initial=0.0)))
        worst = max(worst, float(np.max(self.lb - x, initial=0.0)), float(np.max(x - self.ub, initial=0.0)))
        return worst


class _Builder:
    def __init__(self):
        self.names, self.cost, self.lb, self.ub = [], [], [], []
        self.eq, self.ub_rows = [], []
        self.index = {}

    def var(self, name, lb=0.0, ub=math.inf, cost=0.0):
        self.index[name] = len(self.names)
        self.names.append(name)
        self.cost.append(cost)
        self.lb.append(lb)
        self.ub.append(ub)
        return self.index[name]

    def row(self, name, coefs, sense, rhs):
        (self.eq if sense == "=" else self.ub_rows).append((name, coefs, rhs))

    def build(self, offset=0.0, meta=None) -> LinearProgram:
        n = len(self.names)

        def dense(rows):
            A = np.zeros((len(rows), n))
            b = np.zeros(len(rows))
            for r, (_, coefs, rhs) in enumerate(rows):
                for j, v in coefs.items():
                    A[r, j] += v
                b[r] = rhs
            return A, b, [name for name, _, _ in rows]

        A_eq, b_eq, eq_names = dense(self.eq)
        A_ub, b_ub, ub_names = dense(self.ub_rows)
        return LinearProgram(names=list(self.names), c=np.array(self.cost, dtype=float), A_eq=A_eq,
                             b_eq=b_eq, A_ub=A_ub, b_ub=b_ub, lb=np.array(self.lb, dtype=float),
                             ub=np.array(self.ub, dtype=float), offset=offset, eq_names=eq_names,
                             ub_names=ub_names, meta=meta or {})


def flex_window_size(T: int, n_flex: int) -> int:
    """Number of partial-consumption variables per home in one day."""
    return sum(min(td + n_flex, T - 1) - td + 1 for td in range(T))


def lp_variable_count(n_homes: int, T: int, n_flex: int, substation: bool = True) -> int:
    """Closed-form size of :func:`build_day_lp`: ``T + n (8T + 2 + W)``."""
    return (T if substation else 0) + n_homes * (8 * T + 2 + flex_window_size(T, n_flex))


def build_day_lp(scenario: ScenarioData, day: int, homes=None, substation: bool = True) -> LinearProgram:
    """Linear program minimising one day's grid, export and storage costs.

    ``homes`` restricts the problem to a subset of homes. Homes interact only
    through the substation balance, whose cost is linear, so with
    ``substation=False`` the grid cost is charged on each home's import
    directly and the problem splits into independent per-home blocks.
    """
    homes = list(range(scenario.n_homes)) if homes is None else list(homes)
    T = scenario.horizon
    t0 = day * T
    hp = scenario.homes
    gs = scenario.grid
    cg = scenario.cost_coeff[t0:t0 + T]
    b = _Builder()

    if substation:
        for k in range(T):
            b.var(f"g[{k}]", -math.inf, math.inf, float(cg[k]))
    for i in homes:
        bat = scenario.battery[i]
        th = scenario.thermal[i]
        kap = np.asarray(th.kappa, dtype=float)
        for k in range(T):
            t = t0 + k
            mu = int(hp.ev_availability[i, t])
            gate = mu if bat.gate_discharge_by_availability else 1
            b.var(f"p[{i},{k}]", -math.inf, math.inf, 0.0 if substation else float(cg[k]))
            b.var(f"e[{i},{k}]", 0.0, math.inf, gs.export_charge)
            b.var(f"b_in[{i},{k}]", 0.0, mu * bat.max_charge, gs.storage_cost)
            b.var(f"b_out[{i},{k}]", 0.0, gate * bat.max_discharge, gs.storage_cost)
            b.var(f"h[{i},{k}]", 0.0, th.heat_power_cap)
            b.var(f"T_air[{i},{k + 1}]", float(hp.temp_low[i, t]), float(hp.temp_high[i, t]))
        for k in range(T + 1):
            if k < T:
                b.var(f"E[{i},{k}]", int(hp.ev_availability[i, t0 + k]) * bat.min_level, bat.capacity)
            else:
                b.var(f"E[{i},{k}]", 0.0, bat.capacity)
            b.var(f"T_m[{i},{k}]", -math.inf, math.inf)
        for td in range(T):
            for tc in range(td, scenario.deadline(t0 + td) - t0 + 1):
                b.var(f"c_hat[{i},{tc},{td}]")

        v = b.index
        for k in range(T):
            t = t0 + k
            # home balance: p = c + h + b_in/eta_ch - eta_dis*b_out - pv, c = d_fixed + sum c_hat
            coefs = {v[f"p[{i},{k}]"]: 1.0, v[f"h[{i},{k}]"]: -1.0,
                     v[f"b_in[{i},{k}]"]: -1.0 / bat.eta_ch, v[f"b_out[{i},{k}]"]: bat.eta_dis}
            for td in range(max(0, k - hp.n_flex), k + 1):
                name = f"c_hat[{i},{k},{td}]"
                if name in v:
                    coefs[v[name]] = -1.0
            b.row(f"home_balance[{i},{k}]", coefs, "=", float(hp.fixed_demand[i, t] - hp.pv[i, t]))
            b.row(f"battery[{i},{k}]", {v[f"E[{i},{k + 1}]"]: 1.0, v[f"E[{i},{k}]"]: -1.0,
                                        v[f"b_in[{i},{k}]"]: -1.0, v[f"b_out[{i},{k}]"]: 1.0},
                  "=", -float(hp.ev_demand[i, t]))
            exo = (float(hp.ext_temp[t]), float(hp.solar_heat[t]))
            for r, name in ((0, f"T_m[{i},{k + 1}]"), (1, f"T_air[{i},{k + 1}]")):
                b.row(f"thermal{r}[{i},{k}]", {v[name]: 1.0, v[f"T_m[{i},{k}]"]: -kap[r, 1],
                                               v[f"h[{i},{k}]"]: -kap[r, 4]},
                      "=", kap[r, 0] + kap[r, 2] * exo[0] + kap[r, 3] * exo[1])
            # e >= -p  <=>  -p - e <= 0
            b.row(f"export[{i},{k}]", {v[f"p[{i},{k}]"]: -1.0, v[f"e[{i},{k}]"]: -1.0}, "<=", 0.0)
        for td in range(T):
            coefs = {v[f"c_hat[{i},{tc},{td}]"]: 1.0
                     for tc in range(td, scenario.deadline(t0 + td) - t0 + 1)}
            b.row(f"demand_met[{i},{td}]", coefs, "=", float(hp.flex_demand[i, t0 + td]))
        b.row(f"E_start[{i}]", {v[f"E[{i},0]"]: 1.0}, "=", bat.initial)
        b.row(f"E_end[{i}]", {v[f"E[{i},{T}]"]: 1.0}, "=", bat.initial)
        b.row(f"T_m_start[{i}]", {v[f"T_m[{i},0]"]: 1.0}, "=", th.initial_mass_temp)

    if substation:
        v = b.index
        for k in range(T):
            coefs = {v[f"g[{k}]"]: 1.0}
            for i in homes:
                coefs[v[f"p[{i},{k}]"]] = -1.0
            b.row(f"substation[{k}]", coefs, "=", 0.0)
    # the substation loss term is a system constant; per-home blocks leave it out
    offset = float(np.sum(cg)) * gs.grid_loss if substation else 0.0
    return b.build(offset=offset, meta={"day": day, "homes": homes, "substation": substation})


def _lp_name(name: str) -> str:
    return re.sub(r"[\[\],]", "_", name).rstrip("_")


def _terms(coefs, names) -> str:
    parts = []
    for j, v in coefs:
        sign = "-" if v < 0 else "+"
        parts.append(f"{sign} {abs(v)!r} {names[j]}")
    text = " ".join(parts) if parts else "0 " + names[0]
    return text[2:] if text.startswith("+ ") else text


def dump_lp(lp: LinearProgram, path) -> Path:
    """Write ``lp`` in CPLEX LP text format (readable by most LP solvers).

    The objective constant is written as a comment since the format has no
    portable slot for it.
    """
    names = [_lp_name(n) for n in lp.names]
    lines = [f"\\ objective offset {lp.offset!r}", "Minimize"]
    obj = [(j, float(c)) for j, c in enumerate(lp.c) if c != 0]
    lines.append(" obj: " + _terms(obj, names))
    lines.append("Subject To")
    for A, b, rnames, sense in ((lp.A_eq, lp.b_eq, lp.eq_names, "="), (lp.A_ub, lp.b_ub, lp.ub_names, "<=")):
        for r in range(len(b)):
            nz = [(j, float(A[r, j])) for j in np.nonzero(A[r])[0]]
            lines.append(f" {_lp_name(rnames[r])}: {_terms(nz, names)} {sense} {float(b[r])!r}")
    lines.append("Bounds")
    for j, name in enumerate(names):
        lo, hi = lp.lb[j], lp.ub[j]
        if math.isinf(lo) and math.isinf(hi):
            lines.append(f" {name} free")
        else:
            lo_s = "-inf" if math.isinf(lo) else repr(float(lo))
            hi_s = "+inf" if math.isinf(hi) else repr(float(hi))
            lines.append(f" {lo_s} <= {name} <= {hi_s}")
    lines.append("End")
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path
