"""Builders for small hand-specified scenarios."""

from __future__ import annotations

import numpy as np

from flexmarl.profiles import (BatteryParams, GridSignals, HomeProfiles, ScenarioData, ThermalParams,
                               check)

# heating sets the air temperature directly; the mass node decays
IDENTITY_KAPPA = np.array([[0.0, 0.5, 0.0, 0.0, 0.0],
                           [0.0, 0.0, 0.0, 0.0, 1.0]])


def tiny_scenario(price, n_homes=1, n_days=1, intensity=None, scc=0.0, export_charge=0.0, storage_cost=0.0,
                  mu=None, d_ev=None, fixed=None, flex=None, pv=None, ext_temp=None, t_low=None,
                  t_high=None, kappa=IDENTITY_KAPPA, battery=None, n_flex=0, heat_cap=np.inf,
                  initial_temp=0.0, grid_loss=0.0, validate=True):
    price = np.asarray(price, dtype=float)
    N = len(price)
    T = N // n_days

    def per_home(x, default=0.0, dtype=float):
        if x is None:
            return np.full((n_homes, N), default, dtype=dtype)
        return np.broadcast_to(np.asarray(x, dtype=dtype), (n_homes, N)).copy()

    grid = GridSignals(price, np.zeros(N) if intensity is None else np.asarray(intensity, dtype=float),
                       scc, export_charge, storage_cost, grid_loss)
    homes = HomeProfiles(ev_availability=per_home(mu, 0, int), ev_demand=per_home(d_ev),
                         fixed_demand=per_home(fixed), flex_demand=per_home(flex), pv=per_home(pv),
                         ext_temp=np.zeros(N) if ext_temp is None else np.asarray(ext_temp, dtype=float),
                         solar_heat=np.zeros(N), temp_low=per_home(t_low, 0.0),
                         temp_high=per_home(t_high, 100.0), n_flex=n_flex)
    bat = battery or BatteryParams()
    th = ThermalParams(np.asarray(kappa, dtype=float), heat_cap, initial_temp, initial_temp)
    sc = ScenarioData(grid=grid, homes=homes, battery=(bat,) * n_homes, thermal=(th,) * n_homes,
                      n_homes=n_homes, horizon=T, n_days=n_days, seed=0)
    return check(sc) if validate else sc
