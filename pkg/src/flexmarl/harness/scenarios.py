"""Named scenario families used by experiments and the CLI."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from ..profiles import (BatteryParams, GridSignals, HomeProfiles, ProfileTemplate, ScenarioData, check,
                        default_thermal_params, generate_profiles)


def price_spread_scenario(seed: int, n_days: int = 8, n_homes: int = 1) -> ScenarioData:
    """One large deferrable load landing in expensive hours, cheap hours within reach.

    The EV stays away all day without trips and the comfort band is a single
    temperature, so consumption timing is the only lever.
    """
    rng = np.random.default_rng(seed)
    T = 24
    N = T * n_days
    hours = np.arange(T)
    tou = np.where(hours < 6, 0.15, 0.45)
    tou = np.where(hours >= 11, 0.05, tou)
    tou = np.where(hours >= 18, 0.30, tou)
    price = np.tile(tou, n_days) * rng.uniform(0.9, 1.1, N)
    intensity = np.full(N, 0.0002)
    grid = GridSignals(price, intensity, social_cost_carbon=70.0, export_charge=0.03, storage_cost=0.001)
    fixed = np.full((n_homes, N), 0.3)
    flex = np.zeros((n_homes, N))
    for d in range(n_days):
        flex[:, d * T + 8] = rng.uniform(7.0, 9.0, n_homes)
    temps = np.full((n_homes, N), 20.0)
    homes = HomeProfiles(ev_availability=np.zeros((n_homes, N), dtype=int), ev_demand=np.zeros((n_homes, N)),
                         fixed_demand=fixed, flex_demand=flex, pv=np.zeros((n_homes, N)),
                         ext_temp=np.full(N, 5.0), solar_heat=np.zeros(N), temp_low=temps,
                         temp_high=temps.copy(), n_flex=6)
    thermal = replace(default_thermal_params(), initial_mass_temp=20.0, initial_air_temp=20.0)
    sc = ScenarioData(grid=grid, homes=homes, battery=(BatteryParams(),) * n_homes,
                      thermal=(thermal,) * n_homes, n_homes=n_homes, horizon=T, n_days=n_days, seed=seed)
    check(sc)
    return sc


EXPORT_TEMPLATE = ProfileTemplate(pv_share_of_homes=1.0, pv_kwp_range=(5.0, 7.0), pv_yield_peak=0.6,
                                  export_charge=0.10, flex_share=0.5, trip_probability=0.6)


def export_scenario(seed: int, n_days: int = 8, n_homes: int = 3) -> ScenarioData:
    """Homes with large rooftop PV and a steep export charge."""
    return generate_profiles(seed, n_homes, n_days, EXPORT_TEMPLATE)


def default_scenario(seed: int, n_days: int = 8, n_homes: int = 3) -> ScenarioData:
    return generate_profiles(seed, n_homes, n_days)


SCENARIOS = {
    "default": default_scenario,
    "price_spread": price_spread_scenario,
    "export": export_scenario,
}


def make_scenario(name: str, seed: int, n_homes: int, n_days: int) -> ScenarioData:
    if name not in SCENARIOS:
        raise ValueError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")
    return SCENARIOS[name](seed, n_days=n_days, n_homes=n_homes)
