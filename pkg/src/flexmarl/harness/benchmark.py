"""Training-time scaling with the number of homes."""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from ..marl.training import TrainConfig, train
from .scenarios import make_scenario


def fit_growth(sizes, seconds) -> dict:
    """Fit first- and second-order polynomials to timings and pick the better order.

    Timing noise grows with the timing itself, so residuals are measured
    relative to each observation (weights ``1/t``). The quadratic is
    preferred only when its leading coefficient is positive and it has the
    lower Bayesian information criterion. Residual sums are floored so
    exactly polynomial data does not produce ``log(0)``.
    """
    n = np.asarray(sizes, dtype=float)
    t = np.asarray(seconds, dtype=float)
    if len(np.unique(n)) < 3:
        raise ValueError("need at least three distinct sizes")
    if np.any(t <= 0) or not np.all(np.isfinite(t)):
        raise ValueError("timings must be positive and finite")
    w = 1.0 / t
    fits = {}
    for order in (1, 2):
        coef = np.polyfit(n, t, order, w=w)
        rss = float(np.sum((w * (np.polyval(coef, n) - t)) ** 2))
        k = order + 1
        bic = len(t) * math.log(max(rss, 1e-12 * len(t)) / len(t)) + k * math.log(len(t))
        fits[order] = {"coefficients": [float(c) for c in coef], "rss": rss, "bic": bic}
    quad_term = fits[2]["coefficients"][0]
    better = 2 if (quad_term > 0 and fits[2]["bic"] < fits[1]["bic"]) else 1
    slope = float(np.polyfit(np.log(n), np.log(t), 1)[0])
    return {"linear": fits[1], "quadratic": fits[2], "order": better, "loglog_exponent": slope}


def scaling_benchmark(methods, sizes, episodes: int, seeds, scenario: str = "default",
                      config: TrainConfig | None = None) -> dict:
    """Wall-clock training time per method, size and seed, with growth fits.

    Each scenario carries one day per episode, so the demonstrator methods
    solve many day-ahead problems inside the timed loop. One short untimed
    run per method comes first so one-off start-up costs do not land on the
    smallest size.
    """
    sizes = list(sizes)
    if len(set(sizes)) < 3:
        raise ValueError("need at least three distinct sizes")
    config = config or TrainConfig()
    rows = []
    for method in methods:
        warm = make_scenario(scenario, 0, min(sizes), 2)
        train(method, warm, dataclasses.replace(config, episodes=1, seed=0, eval_every=1, warmup_steps=1),
              train_days=[0], eval_days=[1])
        for n in sizes:
            for seed in seeds:
                sc = make_scenario(scenario, seed, n, episodes + 1)
                days = list(range(episodes + 1))
                cfg = dataclasses.replace(config, episodes=episodes, seed=seed, eval_every=max(1, episodes))
                res = train(method, sc, cfg, train_days=days[:-1], eval_days=days[-1:])
                rows.append({"method": method, "n_homes": n, "seed": seed, "seconds": res.train_seconds})
    fits = {}
    for method in methods:
        sel = [r for r in rows if r["method"] == method]
        fits[method] = fit_growth([r["n_homes"] for r in sel], [r["seconds"] for r in sel])
    return {"rows": rows, "fits": fits}
