"""Independent reference computations used to cross-check the package.

None of these import the code under test beyond plain data containers.
"""

from __future__ import annotations

import itertools

import numpy as np


def vertex_enumeration(c, A_eq, b_eq, A_ub, b_ub, lb, ub, tol=1e-9):
    """Minimum of ``c.x`` over a bounded polytope by checking every basic point.

    All constraints are collected as rows ``G x (<= or =) h``; every choice of
    ``n`` linearly independent rows containing all equalities is solved and
    kept if feasible. Returns ``(objective, x)`` or ``(None, None)`` if empty.
    """
    c = np.asarray(c, float)
    n = len(c)
    eye = np.eye(n)
    ineq_G = [A_ub] if len(b_ub) else []
    ineq_h = [b_ub] if len(b_ub) else []
    for j in range(n):
        if np.isfinite(ub[j]):
            ineq_G.append(eye[j:j + 1])
            ineq_h.append([ub[j]])
        if np.isfinite(lb[j]):
            ineq_G.append(-eye[j:j + 1])
            ineq_h.append([-lb[j]])
    G = np.vstack(ineq_G) if ineq_G else np.zeros((0, n))
    h = np.concatenate([np.asarray(x, float) for x in ineq_h]) if ineq_h else np.zeros(0)
    m_eq = len(b_eq)
    best, best_x = None, None
    for rows in itertools.combinations(range(len(h)), n - m_eq):
        M = np.vstack([A_eq, G[list(rows)]]) if m_eq else G[list(rows)]
        rhs = np.concatenate([b_eq, h[list(rows)]]) if m_eq else h[list(rows)]
        if abs(np.linalg.det(M)) < 1e-10:
            continue
        x = np.linalg.solve(M, rhs)
        if m_eq and np.max(np.abs(A_eq @ x - b_eq)) > 1e-7:
            continue
        if len(h) and np.max(G @ x - h) > 1e-7:
            continue
        val = float(c @ x)
        if best is None or val < best - tol:
            best, best_x = val, x
    return best, best_x


def brute_force_battery(E0, cap, e_min, b_in_max, mu, d_ev, step=0.5):
    """Feasible net-charge options per (step, energy) on a grid, by exhaustive search.

    Returns ``options[k][E] = sorted list of feasible net changes`` for every
    grid energy ``E`` from which the end-of-horizon level ``E0`` is reachable.
    Net change ``x`` means charge ``max(x, 0)`` and discharge ``max(-x, 0)``;
    discharge is limited to the same rate as charge.
    """
    T = len(mu)
    levels = np.round(np.arange(0.0, cap + step / 2, step), 9)
    reachable = [set() for _ in range(T + 1)]
    reachable[T] = {round(E0, 9)}
    options = [dict() for _ in range(T)]
    for k in range(T - 1, -1, -1):
        moves = np.round(np.arange(-b_in_max, b_in_max + step / 2, step), 9)
        for E in levels:
            if E < mu[k] * e_min - 1e-9:
                continue
            good = []
            for x in moves:
                if x > 0 and mu[k] == 0:
                    continue
                nxt = round(E + x - d_ev[k], 9)
                if nxt < -1e-9 or nxt > cap + 1e-9 or E + x > cap + 1e-9:
                    continue
                if nxt in reachable[k + 1]:
                    good.append(float(x))
            if good:
                options[k][float(E)] = good
                reachable[k].add(round(float(E), 9))
    return options


def bisect_heating(forward_air, target, lo=0.0, hi=1e3, tol=1e-12):
    """Heating ``h`` with ``forward_air(h) == target`` for an increasing map."""
    f_lo = forward_air(lo)
    if f_lo >= target:
        return lo
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if forward_air(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def value_iteration(P, R, gamma, tol=1e-13):
    """Optimal Q for a deterministic MDP: ``P[s][a]`` next state (None = terminal)."""
    S, A = len(P), len(P[0])
    Q = np.zeros((S, A))
    while True:
        V = Q.max(axis=1)
        new = np.array([[R[s][a] + (0.0 if P[s][a] is None else gamma * V[P[s][a]]) for a in range(A)]
                        for s in range(S)])
        if np.max(np.abs(new - Q)) < tol:
            return new
        Q = new


def flex_grid_search(prices, demand, arrival, window, step=0.1):
    """Cheapest split of one flexible load over its window, on a consumption grid."""
    steps = list(range(arrival, min(arrival + window, len(prices) - 1) + 1))
    units = int(round(demand / step))
    best = None
    for split in itertools.product(range(units + 1), repeat=len(steps) - 1):
        if sum(split) > units:
            continue
        alloc = list(split) + [units - sum(split)]
        cost = sum(prices[t] * a * step for t, a in zip(steps, alloc))
        if best is None or cost < best:
            best = cost
    return best


def central_difference(f, x, eps=1e-6, indices=None):
    """Central-difference gradient of scalar ``f`` at flat ``x`` (optionally only at ``indices``)."""
    x = np.array(x, dtype=float)
    idx = range(x.size) if indices is None else indices
    out = np.zeros(len(idx))
    for k, j in enumerate(idx):
        up, down = x.copy(), x.copy()
        up[j] += eps
        down[j] -= eps
        out[k] = (f(up) - f(down)) / (2 * eps)
    return out


def max_relative_error(a, b, floor=1e-5):
    """Largest ``|a - b| / max(|a| + |b|, floor)``.

    The floor keeps finite-difference round-off (about 1e-10 on O(1) losses
    at step 1e-6) from dominating entries whose true size is near zero.
    """
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(a) + np.abs(b), floor))) if a.size else 0.0


def brute_force_home_day(price, fixed, flex, n_flex, pv, mu, d_ev, capacity, min_level, initial,
                         max_charge, max_discharge, t_low, t_high, export_charge, storage_cost, step=0.5):
    """Cheapest day for one lossless home by dynamic programming on a ``step`` grid.

    Heating sets the air temperature directly (any grid value in the comfort
    band). State is (battery energy, cumulative flexible energy served); a
    flexible arrival at ``k`` is due by ``min(k + n_flex, T - 1)``.
    """
    T = len(price)
    arrived = np.cumsum(flex)
    due = np.zeros(T)
    for k in range(T):
        due[min(k + n_flex, T - 1)] += flex[k]
    due = np.cumsum(due)

    def grid(lo, hi):
        return [round(v, 9) for v in np.arange(lo, hi + step / 2, step)]

    frontier = {(round(initial, 9), 0.0): 0.0}
    for k in range(T):
        nxt = {}
        heats = grid(t_low[k], t_high[k])
        for (E, S), cost in frontier.items():
            if E < mu[k] * min_level - 1e-9:
                continue
            for x in grid(-max_discharge, mu[k] * max_charge):
                E2 = round(E + x - d_ev[k], 9)
                if E2 < -1e-9 or E2 > capacity + 1e-9:
                    continue
                for S2 in grid(S, arrived[k]):
                    if S2 < due[k] - 1e-9:
                        continue
                    c = fixed[k] + (S2 - S) + x - pv[k]
                    best = None
                    for h in heats:
                        p = c + h
                        v = price[k] * p + export_charge * max(-p, 0.0) + storage_cost * abs(x)
                        best = v if best is None else min(best, v)
                    key = (E2, round(S2, 9))
                    total = cost + best
                    if total < nxt.get(key, np.inf):
                        nxt[key] = total
        frontier = nxt
    finals = [v for (E, S), v in frontier.items() if abs(E - initial) < 1e-9 and abs(S - arrived[-1]) < 1e-9]
    return min(finals) if finals else None
