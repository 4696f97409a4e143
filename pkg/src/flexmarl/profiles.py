"""Scenario data model, synthetic profile generation and scenario file I/O.

All exogenous inputs of a run live in one immutable :class:`ScenarioData`.
Series are indexed by the global step ``t = day * T + tau``; per-home series
have shape ``(n_homes, T * n_days)``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np

LOAD_TYPES = ("fixed", "flexible")


class ScenarioError(ValueError):
    """Raised when a scenario cannot be loaded or fails validation."""

    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)


@dataclass(frozen=True)
class Violation:
    field: str
    message: str
    home: int | None = None
    step: int | None = None

    def __str__(self):
        where = []
        if self.home is not None:
            where.append(f"home={self.home}")
        if self.step is not None:
            where.append(f"t={self.step}")
        loc = f" ({', '.join(where)})" if where else ""
        return f"{self.field}: {self.message}{loc}"


def grid_cost_coefficient(price, intensity, scc):
    """Per-kWh grid cost: wholesale price plus carbon intensity priced at ``scc``."""
    price = np.asarray(price, dtype=float)
    intensity = np.asarray(intensity, dtype=float)
    if price.shape != intensity.shape:
        raise ValueError(f"length mismatch: price {price.shape} vs intensity {intensity.shape}")
    if scc < 0:
        raise ValueError("social cost of carbon must be non-negative")
    if not (np.all(np.isfinite(price)) and np.all(np.isfinite(intensity)) and math.isfinite(scc)):
        raise ValueError("grid signals must be finite")
    return price + intensity * scc


@dataclass(frozen=True, eq=False)
class GridSignals:
    wholesale_price: np.ndarray
    carbon_intensity: np.ndarray
    social_cost_carbon: float
    export_charge: float
    storage_cost: float
    grid_loss: float = 0.0

    @property
    def cost_coeff(self) -> np.ndarray:
        return grid_cost_coefficient(self.wholesale_price, self.carbon_intensity,
                                     self.social_cost_carbon)


@dataclass(frozen=True, eq=False)
class HomeProfiles:
    ev_availability: np.ndarray  # (n, N) in {0, 1}
    ev_demand: np.ndarray        # (n, N) kWh drawn by trips
    fixed_demand: np.ndarray     # (n, N)
    flex_demand: np.ndarray      # (n, N)
    pv: np.ndarray               # (n, N)
    ext_temp: np.ndarray         # (N,)
    solar_heat: np.ndarray       # (N,)
    temp_low: np.ndarray         # (n, N)
    temp_high: np.ndarray        # (n, N)
    n_flex: int

    def demand(self, kind: str) -> np.ndarray:
        return {"fixed": self.fixed_demand, "flexible": self.flex_demand}[kind]


@dataclass(frozen=True)
class BatteryParams:
    capacity: float = 39.0
    min_level: float = 3.9
    initial: float = 39.0
    max_charge: float = 6.6
    max_discharge: float = 6.6
    eta_ch: float = 0.95
    eta_dis: float = 0.95
    # Eq. 11 bounds discharge regardless of availability; flip to gate it by mu.
    gate_discharge_by_availability: bool = False


@dataclass(frozen=True, eq=False)
class ThermalParams:
    kappa: np.ndarray  # 2x5, columns [1, T_m, T_e, phi, h]
    heat_power_cap: float = math.inf
    initial_mass_temp: float = 19.0
    initial_air_temp: float = 19.0

    def __eq__(self, other):
        if not isinstance(other, ThermalParams):
            return NotImplemented
        return (np.array_equal(self.kappa, other.kappa)
                and self.heat_power_cap == other.heat_power_cap
                and self.initial_mass_temp == other.initial_mass_temp
                and self.initial_air_temp == other.initial_air_temp)


def kappa_from_rc(mass_capacitance, h_mass_air, h_air_ext, h_mass_ext,
                  cop=1.0, solar_to_air=0.5, dt=1.0):
    """Discretize a mass + quasi-steady air node model into the 2x5 recursion.

    The mass node uses a Crank-Nicolson step with inputs held over the step.
    The returned air temperature is the air node evaluated at the mean mass
    temperature of the step, so both rows depend only on the state and inputs
    at the start of the step.
    """
    h_air = h_mass_air + h_air_ext
    w = h_mass_air / h_air
    h_s = h_mass_air * h_air_ext / h_air + h_mass_ext
    denom = mass_capacitance / dt + h_s / 2.0
    mass_row = np.array([
        0.0,
        (mass_capacitance / dt - h_s / 2.0) / denom,
        h_s / denom,
        (w * solar_to_air + 1.0 - solar_to_air) / denom,
        w * cop / denom,
    ])
    air_row = 0.5 * w * (np.array([0.0, 1.0, 0.0, 0.0, 0.0]) + mass_row)
    air_row += np.array([0.0, 0.0, 1.0 - w, solar_to_air / h_air, cop / h_air])
    return np.vstack([mass_row, air_row])


def default_thermal_params() -> ThermalParams:
    """Thermal parameters built from the shipped ``thermal_default.json``."""
    text = resources.files("flexmarl").joinpath("data/thermal_default.json").read_text()
    cfg = json.loads(text)
    kappa = kappa_from_rc(cfg["mass_capacitance"], cfg["h_mass_air"], cfg["h_air_ext"],
                          cfg["h_mass_ext"], cfg["cop"], cfg["solar_to_air"], cfg["dt"])
    cap = cfg["heat_power_cap"]
    return ThermalParams(kappa=kappa,
                         heat_power_cap=math.inf if cap is None else float(cap),
                         initial_mass_temp=cfg["initial_mass_temp"],
                         initial_air_temp=cfg["initial_air_temp"])


@dataclass(frozen=True, eq=False)
class ScenarioData:
    grid: GridSignals
    homes: HomeProfiles
    battery: tuple[BatteryParams, ...]
    thermal: tuple[ThermalParams, ...]
    n_homes: int
    horizon: int = 24
    n_days: int = 1
    seed: int = 0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_steps(self) -> int:
        return self.horizon * self.n_days

    @property
    def cost_coeff(self) -> np.ndarray:
        if "cost_coeff" not in self._cache:
            self._cache["cost_coeff"] = self.grid.cost_coeff
        return self._cache["cost_coeff"]

    def day_start(self, day: int) -> int:
        return day * self.horizon

    def day_steps(self, day: int) -> range:
        return range(day * self.horizon, (day + 1) * self.horizon)

    def deadline(self, t: int) -> int:
        """Last step at which flexible demand arriving at ``t`` may be served."""
        day_end = (t // self.horizon + 1) * self.horizon - 1
        return min(t + self.homes.n_flex, day_end)

    def select_days(self, days) -> "ScenarioData":
        """Sub-scenario made of the given days, in order."""
        idx = np.concatenate([np.arange(d * self.horizon, (d + 1) * self.horizon) for d in days])
        g, h = self.grid, self.homes
        grid = replace(g, wholesale_price=g.wholesale_price[idx],
                       carbon_intensity=g.carbon_intensity[idx])
        homes = replace(h, ev_availability=h.ev_availability[:, idx], ev_demand=h.ev_demand[:, idx],
                        fixed_demand=h.fixed_demand[:, idx], flex_demand=h.flex_demand[:, idx],
                        pv=h.pv[:, idx], ext_temp=h.ext_temp[idx], solar_heat=h.solar_heat[idx],
                        temp_low=h.temp_low[:, idx], temp_high=h.temp_high[:, idx])
        return ScenarioData(grid=grid, homes=homes, battery=self.battery, thermal=self.thermal,
                            n_homes=self.n_homes, horizon=self.horizon, n_days=len(days),
                            seed=self.seed)

    def __eq__(self, other):
        if not isinstance(other, ScenarioData):
            return NotImplemented
        if (self.n_homes, self.horizon, self.n_days, self.seed) != (
                other.n_homes, other.horizon, other.n_days, other.seed):
            return False
        if self.battery != other.battery or self.thermal != other.thermal:
            return False
        for a, b in ((self.grid, other.grid), (self.homes, other.homes)):
            for f in fields(a):
                x, y = getattr(a, f.name), getattr(b, f.name)
                if isinstance(x, np.ndarray):
                    if x.shape != y.shape or not np.array_equal(x, y):
                        return False
                elif x != y:
                    return False
        return True

    __hash__ = None


# ---------------------------------------------------------------------------
# synthetic generation


@dataclass(frozen=True)
class ProfileTemplate:
    """Shape configuration for :func:`generate_profiles`.

    Magnitudes are loosely modelled on a UK winter; they are stand-ins for
    measured data and are not meant to reproduce any published figures.
    """

    horizon: int = 24
    n_flex: int = 4
    # household load
    daily_load_kwh: float = 8.0
    daily_load_spread: float = 0.25
    flex_share: float = 0.3
    morning_peak_hour: float = 7.5
    evening_peak_hour: float = 19.0
    # pv (kWp scale; January yield)
    pv_share_of_homes: float = 0.5
    pv_kwp_range: tuple[float, float] = (2.0, 4.0)
    pv_yield_peak: float = 0.25
    # ev trips
    trip_probability: float = 0.85
    trip_mean_kwh: float = 8.0
    departure_hours: tuple[int, int] = (7, 9)
    return_hours: tuple[int, int] = (16, 19)
    # time-of-use price levels (GBP/kWh) at night / day / peak
    price_night: float = 0.12
    price_day: float = 0.20
    price_peak: float = 0.32
    peak_hours: tuple[int, int] = (16, 20)
    night_hours: tuple[int, int] = (0, 7)
    price_noise: float = 0.05
    intensity_base: float = 0.00018
    intensity_peak_extra: float = 0.00006
    social_cost_carbon: float = 70.0
    export_charge: float = 0.03
    storage_cost: float = 0.001
    grid_loss: float = 0.0
    # weather and comfort
    ext_temp_mean: float = 4.0
    ext_temp_amplitude: float = 3.0
    comfort_low_day: float = 18.0
    comfort_low_night: float = 16.0
    comfort_high: float = 22.0
    battery: BatteryParams = field(default_factory=BatteryParams)


def _bump(hours, centre, width):
    d = np.minimum(np.abs(hours - centre), 24 - np.abs(hours - centre))
    return np.exp(-0.5 * (d / width) ** 2)


def generate_profiles(seed: int, n_homes: int, n_days: int,
                      template: ProfileTemplate | None = None) -> ScenarioData:
    """Draw a reproducible synthetic scenario.

    Load has a morning and evening peak, PV follows a midday bell, EVs are
    away for one daytime trip on most days and the price has a night /
    day / peak time-of-use structure.
    """
    if n_homes < 1 or n_days < 1:
        raise ValueError("n_homes and n_days must be >= 1")
    tp = template or ProfileTemplate()
    rng = np.random.default_rng(seed)
    T = tp.horizon
    N = T * n_days
    hours = np.arange(T) * (24.0 / T)

    # grid signals
    tou = np.full(T, tp.price_day)
    tou[(hours >= tp.night_hours[0]) & (hours < tp.night_hours[1])] = tp.price_night
    tou[hours >= 23] = tp.price_night
    tou[(hours >= tp.peak_hours[0]) & (hours < tp.peak_hours[1])] = tp.price_peak
    day_factor = rng.normal(1.0, tp.price_noise, size=n_days).clip(0.7, 1.3)
    step_noise = rng.normal(1.0, tp.price_noise / 2, size=N).clip(0.8, 1.2)
    price = np.tile(tou, n_days) * np.repeat(day_factor, T) * step_noise
    intensity_shape = tp.intensity_base + tp.intensity_peak_extra * _bump(hours, 18.0, 2.5)
    intensity = np.tile(intensity_shape, n_days) * rng.normal(1.0, 0.05, size=N).clip(0.8, 1.2)
    grid = GridSignals(wholesale_price=price, carbon_intensity=intensity,
                       social_cost_carbon=tp.social_cost_carbon, export_charge=tp.export_charge,
                       storage_cost=tp.storage_cost, grid_loss=tp.grid_loss)

    # household demand
    shape = 0.35 + _bump(hours, tp.morning_peak_hour, 1.2) + 1.4 * _bump(hours, tp.evening_peak_hour, 2.0)
    shape = shape / shape.sum()
    fixed = np.zeros((n_homes, N))
    flex = np.zeros((n_homes, N))
    home_scale = rng.lognormal(0.0, tp.daily_load_spread, size=n_homes)
    for i in range(n_homes):
        for d in range(n_days):
            total = tp.daily_load_kwh * home_scale[i] * rng.lognormal(0.0, 0.1)
            load = total * shape * rng.uniform(0.85, 1.15, size=T)
            sl = slice(d * T, (d + 1) * T)
            flex[i, sl] = tp.flex_share * load
            fixed[i, sl] = load - flex[i, sl]

    # pv
    pv = np.zeros((n_homes, N))
    bell = np.clip(np.sin(np.pi * (hours - 8.0) / 8.0), 0.0, None)
    bell[(hours < 8) | (hours > 16)] = 0.0
    has_pv = rng.random(n_homes) < tp.pv_share_of_homes
    kwp = rng.uniform(*tp.pv_kwp_range, size=n_homes)
    for i in range(n_homes):
        if not has_pv[i]:
            continue
        cloud = rng.uniform(0.2, 1.0, size=n_days)
        pv[i] = np.tile(bell, n_days) * kwp[i] * tp.pv_yield_peak * np.repeat(cloud, T)

    # ev availability and trips
    bat = tp.battery
    mu = np.ones((n_homes, N), dtype=int)
    d_ev = np.zeros((n_homes, N))
    for i in range(n_homes):
        for d in range(n_days):
            if rng.random() >= tp.trip_probability:
                continue
            dep = int(rng.integers(tp.departure_hours[0], tp.departure_hours[1] + 1))
            ret = int(rng.integers(tp.return_hours[0], tp.return_hours[1] + 1))
            dep, ret = min(dep, T - 2), min(max(ret, dep + 1), T - 1)
            energy = rng.gamma(2.0, tp.trip_mean_kwh / 2.0)
            cap = min(0.8 * bat.max_charge * (T - ret), 0.9 * (bat.capacity - bat.min_level))
            energy = float(min(energy, cap))
            sl = slice(d * T + dep, d * T + ret)
            mu[i, sl] = 0
            d_ev[i, sl] = energy / (ret - dep)

    # weather and comfort band
    t_e = np.zeros(N)
    for d in range(n_days):
        offset = rng.normal(0.0, 1.5)
        t_e[d * T:(d + 1) * T] = (tp.ext_temp_mean + offset
                                  - tp.ext_temp_amplitude * np.cos(2 * np.pi * (hours - 3.0) / 24.0))
    t_e = np.minimum(t_e, tp.comfort_high - 1.0)
    low_day = np.where((hours >= 7) & (hours < 23), tp.comfort_low_day, tp.comfort_low_night)
    t_low = np.tile(np.tile(low_day, n_days), (n_homes, 1))
    t_high = np.full((n_homes, N), tp.comfort_high)

    homes = HomeProfiles(ev_availability=mu, ev_demand=d_ev, fixed_demand=fixed, flex_demand=flex,
                         pv=pv, ext_temp=t_e, solar_heat=np.zeros(N), temp_low=t_low,
                         temp_high=t_high, n_flex=tp.n_flex)
    thermal = default_thermal_params()
    return ScenarioData(grid=grid, homes=homes, battery=(bat,) * n_homes,
                        thermal=(thermal,) * n_homes, n_homes=n_homes, horizon=T,
                        n_days=n_days, seed=seed)


# ---------------------------------------------------------------------------
# validation


def reserve_bounds(scenario: ScenarioData, day: int, home: int):
    """Backward reserve trajectories for one home and day.

    Returns ``(lower, upper, lower_raw)`` of length ``T + 1``: ``lower[k]`` is
    the least and ``upper[k]`` the greatest battery energy at the start of
    local step ``k`` from which the end-of-day level ``E_0`` and every trip
    remain reachable. ``lower_raw`` is ``lower`` before capping at capacity;
    any entry above capacity means the trips cannot be served.
    """
    key = ("reserve", day, home)
    cached = scenario._cache.get(key)
    if cached is not None:
        return cached
    bat = scenario.battery[home]
    T = scenario.horizon
    t0 = day * T
    mu = scenario.homes.ev_availability[home, t0:t0 + T]
    d_ev = scenario.homes.ev_demand[home, t0:t0 + T]
    lower = np.empty(T + 1)
    upper = np.empty(T + 1)
    raw = np.empty(T + 1)
    lower[T] = upper[T] = raw[T] = bat.initial
    for k in range(T - 1, -1, -1):
        raw[k] = max(mu[k] * bat.min_level, lower[k + 1] + d_ev[k] - mu[k] * bat.max_charge)
        lower[k] = min(bat.capacity, raw[k])
        gate = mu[k] if bat.gate_discharge_by_availability else 1
        upper[k] = min(bat.capacity, upper[k + 1] + d_ev[k] + gate * bat.max_discharge)
    out = (lower, upper, raw)
    scenario._cache[key] = out
    return out


def validate(scenario: ScenarioData) -> list[Violation]:
    """Every invariant violation in ``scenario``; an empty list means valid."""
    out: list[Violation] = []
    n, T, N = scenario.n_homes, scenario.horizon, scenario.n_steps
    g, h = scenario.grid, scenario.homes

    for name in ("wholesale_price", "carbon_intensity"):
        arr = getattr(g, name)
        if arr.shape != (N,):
            out.append(Violation(name, f"expected length {N}, got {arr.shape}"))
        elif not np.all(np.isfinite(arr)):
            out.append(Violation(name, "non-finite value"))
    if g.social_cost_carbon < 0:
        out.append(Violation("social_cost_carbon", "negative"))
    if g.export_charge < 0:
        out.append(Violation("export_charge", "negative"))
    if g.storage_cost < 0:
        out.append(Violation("storage_cost", "negative"))
    if h.n_flex < 0:
        out.append(Violation("n_flex", "negative"))
    for name in ("ext_temp", "solar_heat"):
        if getattr(h, name).shape != (N,):
            out.append(Violation(name, f"expected length {N}"))
    per_home = ("ev_availability", "ev_demand", "fixed_demand", "flex_demand", "pv",
                "temp_low", "temp_high")
    bad_shape = False
    for name in per_home:
        if getattr(h, name).shape != (n, N):
            out.append(Violation(name, f"expected shape {(n, N)}, got {getattr(h, name).shape}"))
            bad_shape = True
    if len(scenario.battery) != n or len(scenario.thermal) != n:
        out.append(Violation("params", "battery/thermal parameters must be given per home"))
        bad_shape = True
    if bad_shape or out and any(v.field in ("wholesale_price", "carbon_intensity", "ext_temp") for v in out):
        return out

    def cells(mask, name, message):
        for i, t in zip(*np.nonzero(mask)):
            out.append(Violation(name, message, home=int(i), step=int(t)))

    cells(~np.isin(h.ev_availability, (0, 1)), "ev_availability", "must be 0 or 1")
    cells((h.ev_demand > 0) & (h.ev_availability == 1), "ev_demand", "trip during availability")
    for name in ("ev_demand", "fixed_demand", "flex_demand", "pv"):
        arr = getattr(h, name)
        cells(~np.isfinite(arr) | (arr < 0), name, "must be finite and non-negative")
    cells(h.temp_low > h.temp_high, "temp_bounds", "T_low > T_high")

    for i, bat in enumerate(scenario.battery):
        if not 0 <= bat.min_level <= bat.initial <= bat.capacity:
            out.append(Violation("battery", "need 0 <= E_min <= E_0 <= E_max", home=i))
        if not (0 < bat.eta_ch <= 1 and 0 < bat.eta_dis <= 1):
            out.append(Violation("battery", "efficiencies must lie in (0, 1]", home=i))
        if bat.max_charge <= 0 or bat.max_discharge <= 0:
            out.append(Violation("battery", "charge/discharge limits must be positive", home=i))
    for i, th in enumerate(scenario.thermal):
        k = np.asarray(th.kappa)
        if k.shape != (2, 5) or not np.all(np.isfinite(k)):
            out.append(Violation("kappa", "must be a finite 2x5 matrix", home=i))
            continue
        if k[1, 4] <= 0:
            out.append(Violation("kappa", "heating must raise air temperature", home=i))
        if abs(k[0, 1]) >= 1:
            out.append(Violation("kappa", "mass recursion is not contracting", home=i))
        if th.heat_power_cap <= 0:
            out.append(Violation("heat_power_cap", "must be positive", home=i))
        # sufficient condition for h = 0 never overshooting the upper comfort bound
        hi = float(h.temp_high[i].min())
        if max(th.initial_mass_temp, float(h.ext_temp.max())) > hi:
            out.append(Violation("temp_bounds", "over-warm risk: exterior or initial mass above T_high",
                                 home=i))
    if out:
        return out

    for i in range(n):
        bat = scenario.battery[i]
        for d in range(scenario.n_days):
            lower, _, raw = reserve_bounds(scenario, d, i)
            for k in np.nonzero(raw > bat.capacity + 1e-12)[0]:
                out.append(Violation("ev_demand", "trips cannot be served within capacity",
                                     home=i, step=d * T + int(k)))
            if lower[0] > bat.initial + 1e-12:
                out.append(Violation("ev_demand", "initial energy below day reserve",
                                     home=i, step=d * T))
    return out


def check(scenario: ScenarioData) -> ScenarioData:
    problems = validate(scenario)
    if problems:
        raise ScenarioError(f"{len(problems)} scenario violation(s); first: {problems[0]}", problems)
    return scenario


# ---------------------------------------------------------------------------
# csv directory format


def _fmt(x) -> str:
    return repr(float(x))


def write_scenario_csv(scenario: ScenarioData, directory) -> Path:
    """Write ``scenario`` as a directory of CSV files plus ``meta.json``."""
    path = Path(directory)
    path.mkdir(parents=True, exist_ok=True)
    g, h = scenario.grid, scenario.homes
    cg = scenario.cost_coeff
    with open(path / "grid.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t", "price", "intensity", "C_g"])
        for t in range(scenario.n_steps):
            w.writerow([t, _fmt(g.wholesale_price[t]), _fmt(g.carbon_intensity[t]), _fmt(cg[t])])
    for i in range(scenario.n_homes):
        with open(path / f"home_{i}.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["t", "mu", "d_ev", "d_fixed", "d_flex", "pv"])
            for t in range(scenario.n_steps):
                w.writerow([t, int(h.ev_availability[i, t]), _fmt(h.ev_demand[i, t]),
                            _fmt(h.fixed_demand[i, t]), _fmt(h.flex_demand[i, t]), _fmt(h.pv[i, t])])
    with open(path / "thermal.csv", "w", newline="") as f:
        w = csv.writer(f)
        header = ["t", "T_e", "phi"]
        for i in range(scenario.n_homes):
            header += [f"T_low_{i}", f"T_high_{i}"]
        w.writerow(header)
        for t in range(scenario.n_steps):
            row = [t, _fmt(h.ext_temp[t]), _fmt(h.solar_heat[t])]
            for i in range(scenario.n_homes):
                row += [_fmt(h.temp_low[i, t]), _fmt(h.temp_high[i, t])]
            w.writerow(row)
    meta = {
        "format": "flexmarl-scenario/1",
        "n_homes": scenario.n_homes,
        "T": scenario.horizon,
        "n_days": scenario.n_days,
        "seed": scenario.seed,
        "scc": g.social_cost_carbon,
        "C_d": g.export_charge,
        "C_s": g.storage_cost,
        "eps_g": g.grid_loss,
        "n_flex": h.n_flex,
        "battery": [vars(b).copy() for b in scenario.battery],
        "thermal": [{
            "kappa": [float(x) for x in np.asarray(th.kappa).ravel()],
            "heat_power_cap": None if math.isinf(th.heat_power_cap) else th.heat_power_cap,
            "initial_mass_temp": th.initial_mass_temp,
            "initial_air_temp": th.initial_air_temp,
        } for th in scenario.thermal],
    }
    (path / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    return path


def _read_rows(path: Path, header: list[str], n_rows: int, errors: list[Violation]):
    if not path.exists():
        errors.append(Violation(path.name, "missing file"))
        return None
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != header:
        errors.append(Violation(path.name, f"header must be {','.join(header)}"))
        return None
    body = rows[1:]
    if len(body) != n_rows:
        errors.append(Violation(path.name, f"expected {n_rows} rows, found {len(body)}"))
        return None
    out = np.zeros((n_rows, len(header)))
    for r, row in enumerate(body):
        if len(row) != len(header):
            errors.append(Violation(path.name, f"malformed row: {len(row)} fields", step=r))
            continue
        try:
            out[r] = [float(x) for x in row]
        except ValueError:
            errors.append(Violation(path.name, "malformed row: non-numeric field", step=r))
            continue
        if int(out[r, 0]) != r:
            errors.append(Violation(path.name, f"step index {row[0]} out of order", step=r))
    return out


def load_scenario_csv(directory) -> ScenarioData:
    """Load and validate a scenario directory; raises :class:`ScenarioError`
    listing every problem found."""
    path = Path(directory)
    errors: list[Violation] = []
    meta_path = path / "meta.json"
    if not meta_path.exists():
        raise ScenarioError("missing meta.json", [Violation("meta.json", "missing file")])
    try:
        meta = json.loads(meta_path.read_text())
        n, T, n_days = int(meta["n_homes"]), int(meta["T"]), int(meta["n_days"])
    except (ValueError, KeyError) as exc:
        raise ScenarioError(f"malformed meta.json: {exc}", [Violation("meta.json", str(exc))]) from exc
    N = T * n_days
    grid_rows = _read_rows(path / "grid.csv", ["t", "price", "intensity", "C_g"], N, errors)
    home_rows = [_read_rows(path / f"home_{i}.csv", ["t", "mu", "d_ev", "d_fixed", "d_flex", "pv"],
                            N, errors) for i in range(n)]
    th_header = ["t", "T_e", "phi"] + [f"T_{b}_{i}" for i in range(n) for b in ("low", "high")]
    th_rows = _read_rows(path / "thermal.csv", th_header, N, errors)
    if errors:
        raise ScenarioError(f"{len(errors)} problem(s) reading {path}", errors)

    batteries = tuple(BatteryParams(**b) for b in meta["battery"])
    thermals = tuple(ThermalParams(
        kappa=np.array(th["kappa"], dtype=float).reshape(2, 5),
        heat_power_cap=math.inf if th["heat_power_cap"] is None else float(th["heat_power_cap"]),
        initial_mass_temp=float(th["initial_mass_temp"]),
        initial_air_temp=float(th["initial_air_temp"])) for th in meta["thermal"])
    grid = GridSignals(wholesale_price=grid_rows[:, 1].copy(), carbon_intensity=grid_rows[:, 2].copy(),
                       social_cost_carbon=float(meta["scc"]), export_charge=float(meta["C_d"]),
                       storage_cost=float(meta["C_s"]), grid_loss=float(meta.get("eps_g", 0.0)))
    stack = np.stack(home_rows)  # (n, N, 6)
    homes = HomeProfiles(
        ev_availability=stack[:, :, 1].astype(int), ev_demand=stack[:, :, 2].copy(),
        fixed_demand=stack[:, :, 3].copy(), flex_demand=stack[:, :, 4].copy(), pv=stack[:, :, 5].copy(),
        ext_temp=th_rows[:, 1].copy(), solar_heat=th_rows[:, 2].copy(),
        temp_low=th_rows[:, 3::2].T.copy(), temp_high=th_rows[:, 4::2].T.copy(),
        n_flex=int(meta["n_flex"]))
    scenario = ScenarioData(grid=grid, homes=homes, battery=batteries, thermal=thermals, n_homes=n,
                            horizon=T, n_days=n_days, seed=int(meta["seed"]))
    violations = validate(scenario)
    stored = grid_rows[:, 3]
    for t in np.nonzero(stored != scenario.cost_coeff)[0]:
        violations.append(Violation("C_g", "stored coefficient disagrees with price + intensity * scc",
                                    step=int(t)))
    mu_raw = stack[:, :, 1]
    for i, t in zip(*np.nonzero(mu_raw != np.round(mu_raw))):
        violations.append(Violation("ev_availability", "must be 0 or 1", home=int(i), step=int(t)))
    if violations:
        raise ScenarioError(f"{len(violations)} scenario violation(s); first: {violations[0]}", violations)
    return scenario
