"""Dense two-phase primal simplex.

Pivoting uses Dantzig's most-negative reduced cost while the objective
improves and switches to Bland's smallest-index rule during runs of
degenerate pivots, which rules out cycling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lp import LinearProgram

OPTIMAL, INFEASIBLE, UNBOUNDED, ITERATION_LIMIT = "optimal", "infeasible", "unbounded", "iteration_limit"


class LpError(RuntimeError):
    pass


@dataclass
class LpSolution:
    status: str
    objective: float
    x: np.ndarray
    iterations: int
    lp: LinearProgram | None = None
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL

    def value(self, name: str) -> float:
        return float(self.x[self.lp.index[name]])


def _standard_form(lp: LinearProgram):
    """Rewrite ``lp`` over non-negative columns ``y`` with ``x = shift + M y``."""
    n = lp.n_vars
    cols = []  # (orig index, sign)
    shift = np.zeros(n)
    extra_ub = []  # (column, bound)
    for j in range(n):
        lo, hi = lp.lb[j], lp.ub[j]
        if lo > hi:
            raise LpError(f"empty bounds on {lp.names[j]}")
        if math.isfinite(lo) and lo == hi:
            shift[j] = lo
        elif math.isfinite(lo):
            shift[j] = lo
            cols.append((j, 1.0))
            if math.isfinite(hi):
                extra_ub.append((len(cols) - 1, hi - lo))
        elif math.isfinite(hi):
            shift[j] = hi
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    M = np.zeros((n, len(cols)))
    for k, (j, s) in enumerate(cols):
        M[j, k] = s
    A_eq = lp.A_eq @ M
    b_eq = lp.b_eq - lp.A_eq @ shift
    A_ub = lp.A_ub @ M
    b_ub = lp.b_ub - lp.A_ub @ shift
    if extra_ub:
        rows = np.zeros((len(extra_ub), len(cols)))
        for r, (k, bound) in enumerate(extra_ub):
            rows[r, k] = 1.0
        A_ub = np.vstack([A_ub, rows]) if A_ub.size else rows
        b_ub = np.concatenate([b_ub, [bnd for _, bnd in extra_ub]])
    c = lp.c @ M
    offset = lp.offset + float(lp.c @ shift)
    return c, A_eq, b_eq, A_ub.reshape(-1, len(cols)), b_ub, M, shift, offset


class _Tableau:
    def __init__(self, T, basis, tol):
        self.T = T
        self.basis = basis
        self.tol = tol
        self.iterations = 0

    def pivot(self, r, j):
        # only rows with a nonzero pivot-column entry and columns with a
        # nonzero pivot-row entry change; block-structured tableaus stay sparse
        T = self.T
        T[r] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        rows = np.nonzero(col)[0]
        cols = np.nonzero(T[r])[0]
        if rows.size * cols.size > 0.25 * T.size:
            T[rows] -= np.outer(col[rows], T[r])
        else:
            T[np.ix_(rows, cols)] -= np.outer(col[rows], T[r, cols])
        self.basis[r] = j
        self.iterations += 1

    def run(self, allowed, max_iter, degenerate_switch=50):
        """Optimise the objective in the last row; returns a status string."""
        T, tol = self.T, self.tol
        m = T.shape[0] - 1
        bland = False
        degenerate_run = 0
        while True:
            if self.iterations >= max_iter:
                return ITERATION_LIMIT
            d = np.where(allowed, T[-1, :-1], 0.0)
            candidates = np.nonzero(d < -tol)[0]
            if candidates.size == 0:
                return OPTIMAL
            j = int(candidates[0]) if bland else int(candidates[np.argmin(d[candidates])])
            col = T[:m, j]
            pos = np.nonzero(col > tol)[0]
            if pos.size == 0:
                return UNBOUNDED
            ratios = T[pos, -1] / col[pos]
            best = ratios.min()
            ties = pos[ratios <= best + tol * max(1.0, abs(best))]
            r = int(ties[np.argmin(np.asarray(self.basis)[ties])])
            self.pivot(r, j)
            if best <= tol:
                degenerate_run += 1
                if degenerate_run >= degenerate_switch:
                    bland = True
            else:
                degenerate_run = 0
                bland = False


def solve_lp(lp: LinearProgram, tol: float = 1e-9, max_iter: int | None = None) -> LpSolution:
    """Solve ``lp`` to an optimal basic solution with the two-phase simplex."""
    c, A_eq, b_eq, A_ub, b_ub, M, shift, offset = _standard_form(lp)
    n_y = len(c)
    m_ub, m_eq = len(b_ub), len(b_eq)
    m = m_ub + m_eq
    # columns: y | slacks (one per <= row) | artificials (one per row needing one)
    A = np.zeros((m, n_y + m_ub))
    rhs = np.zeros(m)
    if m_ub:
        A[:m_ub, :n_y] = A_ub
        A[:m_ub, n_y:] = np.eye(m_ub)
        rhs[:m_ub] = b_ub
    if m_eq:
        A[m_ub:, :n_y] = A_eq
        rhs[m_ub:] = b_eq
    neg = rhs < 0
    A[neg] *= -1
    rhs[neg] *= -1
    need_art = [r for r in range(m) if r >= m_ub or neg[r]]
    n_art = len(need_art)
    n_cols = n_y + m_ub + n_art
    T = np.zeros((m + 1, n_cols + 1))
    T[:m, :n_y + m_ub] = A
    T[:m, -1] = rhs
    basis = [0] * m
    for r in range(m_ub):
        basis[r] = n_y + r
    for k, r in enumerate(need_art):
        T[r, n_y + m_ub + k] = 1.0
        basis[r] = n_y + m_ub + k
    art = np.zeros(n_cols, dtype=bool)
    art[n_y + m_ub:] = True
    if max_iter is None:
        max_iter = 50 * (m + n_cols) + 1000

    tab = _Tableau(T, basis, tol)
    empty = np.zeros(lp.n_vars)

    # phase 1: minimise the sum of artificials
    if n_art:
        T[-1, :] = 0.0
        T[-1, n_y + m_ub:n_cols] = 1.0
        for r in need_art:
            T[-1] -= T[r]
        status = tab.run(np.ones(n_cols, dtype=bool), max_iter)
        if status == ITERATION_LIMIT:
            return LpSolution(status, math.nan, empty, tab.iterations, lp, "phase 1 iteration limit")
        infeas = -T[-1, -1]
        scale = max(1.0, float(np.max(np.abs(rhs), initial=0.0)))
        if infeas > 1e-7 * scale:
            return LpSolution(INFEASIBLE, math.nan, empty, tab.iterations, lp,
                              f"phase 1: residual infeasibility {infeas:.3g}")
        # drive remaining artificials out of the basis
        keep = np.ones(m, dtype=bool)
        for r in range(m):
            if basis[r] >= n_y + m_ub:
                row = np.abs(T[r, :n_y + m_ub])
                j = int(np.argmax(row))
                if row[j] > 1e-7:
                    tab.pivot(r, j)
                else:
                    keep[r] = False  # redundant row
        if not keep.all():
            rows = np.concatenate([np.nonzero(keep)[0], [m]])
            tab.T = T = T[rows]
            tab.basis = basis = [basis[r] for r in np.nonzero(keep)[0]]
            m = len(basis)

    # phase 2
    cost = np.zeros(n_cols)
    cost[:n_y] = c
    T[-1, :-1] = cost
    T[-1, -1] = 0.0
    for r in range(m):
        if cost[basis[r]] != 0.0:
            T[-1] -= cost[basis[r]] * T[r]
    status = tab.run(~art, max_iter)
    T = tab.T
    y = np.zeros(n_cols)
    for r, j in enumerate(tab.basis):
        y[j] = T[r, -1]
    x = shift + M @ y[:n_y]
    if status == UNBOUNDED:
        return LpSolution(UNBOUNDED, -math.inf, x, tab.iterations, lp, "phase 2: objective unbounded below")
    if status == ITERATION_LIMIT:
        return LpSolution(status, math.nan, x, tab.iterations, lp, "phase 2 iteration limit")
    return LpSolution(OPTIMAL, lp.objective(x), x, tab.iterations, lp)
