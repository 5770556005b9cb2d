"""Two-phase dense-tableau simplex returning basic optimal solutions.

Pricing is Dantzig's rule until the pivot count passes three times the
number of rows, after which Bland's rule takes over so degenerate
scheduling LPs cannot cycle.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Hashable, Mapping

import numpy as np

from .exceptions import InvalidInputError, SolverFailureError
from .polytope import EQ, GE, LE, Constraint

logger = logging.getLogger(__name__)

OPTIMAL, INFEASIBLE, UNBOUNDED = "optimal", "infeasible", "unbounded"
PIVOT_TOL = 1e-9
FEAS_TOL = 1e-7


@dataclass
class LinearProgram:
    """Objective, rows and per-variable bounds.

    Variables missing from ``bounds`` default to ``[0, 1]``.  ``var_ids``
    lists variables that may appear in no row at all.
    """

    objective: Mapping[Hashable, float] = field(default_factory=dict)
    sense: str = "minimize"
    constraints: list[Constraint] = field(default_factory=list)
    bounds: Mapping[Hashable, tuple[float, float]] = field(default_factory=dict)
    var_ids: list | None = None

    def variables(self) -> list:
        seen: dict = {}
        for v in self.var_ids or ():
            seen.setdefault(v, None)
        for v in self.objective:
            seen.setdefault(v, None)
        for con in self.constraints:
            for v in con.coeffs:
                seen.setdefault(v, None)
        for v in self.bounds:
            seen.setdefault(v, None)
        return list(seen)

    def bound(self, v) -> tuple[float, float]:
        return tuple(self.bounds.get(v, (0.0, 1.0)))


@dataclass
class LpSolution:
    status: str
    values: dict = field(default_factory=dict)
    objective_value: float = float("nan")
    pivots: int = 0

    @property
    def is_optimal(self) -> bool:
        return self.status == OPTIMAL


class _Tableau:
    """Rows ``T[:m]`` hold ``B^-1 [A | b]``; row ``m`` holds reduced costs."""

    def __init__(self, T: np.ndarray, basis: list[int], max_pivots: int):
        self.T = T
        self.basis = basis
        self.pivots = 0
        self.max_pivots = max_pivots

    @property
    def m(self) -> int:
        return self.T.shape[0] - 1

    def pivot(self, r: int, c: int) -> None:
        T = self.T
        T[r] /= T[r, c]
        col = T[:, c].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        T[:, c] = 0.0
        T[r, c] = 1.0
        self.basis[r] = c
        self.pivots += 1

    def run(self, allowed: np.ndarray) -> str:
        """Minimise the cost row over columns flagged in ``allowed``."""
        bland_after = 3 * max(self.m, 1)
        while True:
            if self.pivots > self.max_pivots:
                raise SolverFailureError(f"no convergence after {self.pivots} pivots")
            rc = self.T[-1, :-1]
            cand = np.flatnonzero(allowed & (rc < -PIVOT_TOL))
            if cand.size == 0:
                return OPTIMAL
            if self.pivots >= bland_after:
                c = int(cand[0])
            else:
                c = int(cand[np.argmin(rc[cand])])
            col = self.T[:-1, c]
            rows = np.flatnonzero(col > PIVOT_TOL)
            if rows.size == 0:
                return UNBOUNDED
            ratios = self.T[rows, -1] / col[rows]
            best = ratios.min()
            ties = rows[ratios <= best + PIVOT_TOL * max(1.0, abs(best))]
            r = int(min(ties, key=lambda k: self.basis[k]))
            self.pivot(r, c)


def solve(lp: LinearProgram, max_pivots: int | None = None) -> LpSolution:
    """Solve ``lp``; optimal answers are basic feasible solutions."""
    if lp.sense not in ("minimize", "maximize"):
        raise InvalidInputError(f"unknown sense {lp.sense!r}")
    var_ids = lp.variables()
    index = {v: k for k, v in enumerate(var_ids)}
    n = len(var_ids)
    lo = np.empty(n)
    hi = np.empty(n)
    for v, k in index.items():
        lo[k], hi[k] = lp.bound(v)
    if not (np.all(np.isfinite(lo)) and np.all(~np.isnan(hi))):
        raise InvalidInputError("lower bounds must be finite")
    if np.any(lo > hi):
        return LpSolution(INFEASIBLE)
    cost = np.zeros(n)
    for v, a in lp.objective.items():
        if not np.isfinite(a):
            raise InvalidInputError("objective coefficients must be finite")
        cost[index[v]] += a
    if lp.sense == "maximize":
        cost = -cost

    fixed = hi - lo <= PIVOT_TOL
    free = np.flatnonzero(~fixed)
    col_of = {int(k): c for c, k in enumerate(free)}
    nf = free.size

    rows: list[tuple[np.ndarray, int, float]] = []
    for con in lp.constraints:
        a = np.zeros(nf)
        shift = 0.0
        for v, coef in con.coeffs.items():
            if not np.isfinite(coef):
                raise InvalidInputError("constraint coefficients must be finite")
            k = index[v]
            shift += coef * lo[k]
            if not fixed[k]:
                a[col_of[k]] += coef
        b = con.rhs - shift
        sense = {LE: -1, EQ: 0, GE: 1}[con.relation]
        if not np.any(np.abs(a) > 0):
            ok = (b >= -FEAS_TOL) if sense < 0 else (b <= FEAS_TOL) if sense > 0 else abs(b) <= FEAS_TOL
            if not ok:
                return LpSolution(INFEASIBLE)
            continue
        rows.append((a, sense, b))
    for c, k in enumerate(free):
        if np.isfinite(hi[k]):
            a = np.zeros(nf)
            a[c] = 1.0
            rows.append((a, -1, hi[k] - lo[k]))

    m = len(rows)
    n_slack = sum(1 for _, s, _ in rows if s != 0)
    n_art = sum(1 for a, s, b in rows if s == 0 or (s < 0) == (b < 0))
    width = nf + n_slack + n_art
    T = np.zeros((m + 1, width + 1))
    basis = [0] * m
    is_art = np.zeros(width, dtype=bool)
    s_col, a_col = nf, nf + n_slack
    for r, (a, sense, b) in enumerate(rows):
        sign = -1.0 if b < 0 else 1.0
        T[r, :nf] = sign * a
        T[r, -1] = sign * b
        if sense != 0:
            # slack for <=, surplus for >=, before the sign flip
            T[r, s_col] = sign * (1.0 if sense < 0 else -1.0)
            if T[r, s_col] > 0:
                basis[r] = s_col
                s_col += 1
                continue
            s_col += 1
        T[r, a_col] = 1.0
        is_art[a_col] = True
        basis[r] = a_col
        a_col += 1

    if max_pivots is None:
        max_pivots = 50 * (m + width) + 100
    tab = _Tableau(T, basis, max_pivots)

    # phase 1: minimise the sum of artificials
    art_rows = [r for r in range(m) if is_art[basis[r]]]
    if art_rows:
        T[-1, :] = 0.0
        T[-1, :-1][is_art] = 1.0
        for r in art_rows:
            T[-1] -= T[r]
        tab.run(np.ones(width, dtype=bool))
        scale = max(1.0, float(np.abs(T[:-1, -1]).max(initial=0.0)))
        if -T[-1, -1] > FEAS_TOL * scale:
            return LpSolution(INFEASIBLE, pivots=tab.pivots)
        keep = []
        for r in range(m):
            if is_art[tab.basis[r]]:
                cand = np.flatnonzero(~is_art & (np.abs(T[r, :-1]) > PIVOT_TOL))
                if cand.size == 0:
                    continue  # redundant row
                tab.pivot(r, int(cand[0]))
            keep.append(r)
        if len(keep) < m:
            T = np.vstack([T[keep], T[-1:]])
            tab.T = T
            tab.basis = [tab.basis[r] for r in keep]
            m = len(keep)
        T[:, :-1][:, is_art] = 0.0

    # phase 2
    full_cost = np.zeros(width)
    full_cost[:nf] = cost[free]
    T[-1, :-1] = full_cost
    T[-1, -1] = 0.0
    for r in range(m):
        cb = full_cost[tab.basis[r]]
        if cb:
            T[-1] -= cb * T[r]
    status = tab.run(~is_art)
    if status == UNBOUNDED:
        return LpSolution(UNBOUNDED, pivots=tab.pivots)

    xs = np.zeros(width)
    for r in range(m):
        xs[tab.basis[r]] = T[r, -1]
    x = lo.copy()
    x[free] += xs[:nf]
    x = np.minimum(np.maximum(x, lo), hi)
    values = {v: float(x[k]) for v, k in index.items()}
    obj = sum(a * values[v] for v, a in lp.objective.items())
    logger.debug("simplex finished: %d rows, %d cols, %d pivots", m, width, tab.pivots)
    return LpSolution(OPTIMAL, values, float(obj), tab.pivots)
