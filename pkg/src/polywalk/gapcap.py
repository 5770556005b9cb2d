"""Makespan scheduling with hard per-machine job caps and a cost budget.

The LP relaxation is rounded by an iterated random walk.  Before every
move, machines are grouped by how many floating (strictly fractional)
variables they still have:

* one floating job: the machine's load and cap rows are dropped;
* two floating jobs: the load row is dropped and the cap row becomes
  ``x1 + x2 <= ceil(X1 + X2)``, frozen at the moment of rewriting
  (for utility floors the walk also keeps ``x1 + x2 >= floor(X1 + X2)``);
* three floating jobs with both load and cap rows tight: the load row is
  dropped.

With these rules the current point is never a vertex of the reduced
system, so the walk always makes progress.  Job caps are never exceeded
and each machine's load grows by less than its largest fractionally
assigned processing time.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .exceptions import InfeasibleInstanceError, InternalInvariantError, InvalidInputError
from .instances import GapInstance
from .lpsolve import LinearProgram, LpSolution, solve
from .polytope import DEFAULT_TOL, EQ, GE, LE, Branches, Constraint, Polytope, is_vertex, move_branches

logger = logging.getLogger(__name__)


@dataclass
class Schedule:
    """Integral assignment of jobs to machines.

    Jobs absent from ``assign`` were left unscheduled (only possible for
    outlier instances).
    """

    assign: dict[int, int]
    makespan: float
    cost: float
    loads: np.ndarray
    iterations: int = 0
    profit: float | None = None
    trace: list = field(default_factory=list, repr=False)

    def labels(self, n_jobs: int) -> np.ndarray:
        out = np.full(n_jobs, -1, dtype=int)
        for j, i in self.assign.items():
            out[j] = i
        return out


def schedule_from_matrix(X: np.ndarray, p: np.ndarray, c: np.ndarray, iterations: int = 0) -> Schedule:
    assign = {}
    for i, j in zip(*np.nonzero(X > 0.5)):
        if j in assign:
            raise InternalInvariantError(f"job {j} assigned twice", {"matrix": X.tolist()})
        assign[int(j)] = int(i)
    loads = (p * (X > 0.5)).sum(axis=1)
    cost = float((c * (X > 0.5)).sum())
    return Schedule(assign, float(loads.max(initial=0.0)), cost, loads, iterations)


# --------------------------------------------------------------------------- LP


def allowed_pairs(p: np.ndarray, T: float) -> list[tuple[int, int]]:
    m, n = p.shape
    return [(i, j) for i in range(m) for j in range(n) if p[i, j] <= T]


def build_lp_cap(inst: GapInstance, T: float, objective=None) -> LinearProgram:
    """Feasibility LP over ``x[i, j]`` for pairs with ``p[i, j] <= T``."""
    if T < 0:
        raise InvalidInputError("T must be non-negative")
    m, n = inst.p.shape
    pairs = allowed_pairs(inst.p, T)
    rows: list[Constraint] = []
    if np.isfinite(inst.cost_budget) and pairs:
        rows.append(Constraint({e: inst.c[e] for e in pairs}, LE, inst.cost_budget, "Cost"))
    for j in range(n):
        coeffs = {(i, jj): 1.0 for i, jj in pairs if jj == j}
        if not coeffs:
            # a job no machine can run within T: keep the LP infeasible
            rows.append(Constraint({("void", j): 0.0}, EQ, 1.0, "Assign"))
            continue
        rows.append(Constraint(coeffs, EQ, 1.0, "Assign"))
    for i in range(m):
        mine = [e for e in pairs if e[0] == i]
        if not mine:
            continue
        rows.append(Constraint({e: inst.p[e] for e in mine}, LE, T, "Load", label=i))
        rows.append(Constraint({e: 1.0 for e in mine}, LE, float(inst.b[i]), "Capacity", label=i))
    return LinearProgram(dict(objective or {}), "minimize", rows, var_ids=list(pairs))


def solve_lp_cap(inst: GapInstance, T: float) -> LpSolution:
    return solve(build_lp_cap(inst, T))


def min_feasible_T(inst: GapInstance, precision: float | None = None) -> float:
    """Smallest makespan guess whose LP relaxation is feasible.

    Integral processing times give an exact integer search; otherwise
    bisection stops once the bracket is narrower than ``precision``
    (default ``1e-6 * sum(p)``).
    """
    p = inst.p
    hi = float(p.max(axis=0).sum()) if p.size else 0.0
    if not solve_lp_cap(inst, hi).is_optimal:
        raise InfeasibleInstanceError("LP relaxation infeasible even at the largest makespan")
    lo = float(p.min(axis=0).max()) if p.size else 0.0
    if np.all(p == np.round(p)):
        lo_i, hi_i = int(lo), int(round(hi))
        # invariant: hi_i feasible; everything below lo_i infeasible
        while lo_i < hi_i:
            mid = (lo_i + hi_i) // 2
            if solve_lp_cap(inst, mid).is_optimal:
                hi_i = mid
            else:
                lo_i = mid + 1
        return float(hi_i)
    if precision is None:
        precision = 1e-6 * max(float(p.sum()), 1.0)
    if solve_lp_cap(inst, lo).is_optimal:
        return lo
    while hi - lo > precision:
        mid = 0.5 * (lo + hi)
        if solve_lp_cap(inst, mid).is_optimal:
            hi = mid
        else:
            lo = mid
    return hi


# ------------------------------------------------------------------ the walk


Chooser = Callable[[Branches, np.ndarray], np.ndarray]


def random_chooser(rng: np.random.Generator) -> Chooser:
    def choose(br: Branches, idx: np.ndarray) -> np.ndarray:
        return br.plus if rng.random() < br.prob_plus else br.minus

    return choose


def cost_chooser(costs: np.ndarray) -> Chooser:
    """Conditional expectation: keep the branch not costlier than now.

    The two branches average to the current cost, so the cheaper one never
    increases it.  Ties go to the ``+`` branch.
    """

    def choose(br: Branches, idx: np.ndarray) -> np.ndarray:
        cf = costs[idx]
        return br.plus if cf @ br.plus <= cf @ br.minus else br.minus

    return choose


class CapacitatedWalk:
    """Iterated random moves over an assignment system with machine rows.

    Parameters
    ----------
    pairs : list of (machine, job)
        Variable layout; ``x0[k]`` is the value of ``pairs[k]``.
    weights : (m, n) array
        Coefficients of the per-machine bound rows (processing times or
        utilities).
    bounds : (m,) array
        Right-hand sides of those rows; ``nan`` disables the row.
    bound_relation : str
        ``"<="`` for load ceilings, ``">="`` for utility floors.
    caps : (m,) array
        Job-count caps; ``inf`` disables the row.
    """

    def __init__(self, pairs, x0, weights, bounds, bound_relation, caps, tol=DEFAULT_TOL):
        self.pairs = list(pairs)
        self.x = np.clip(np.asarray(x0, dtype=float).copy(), 0.0, 1.0)
        self.x[self.x <= tol] = 0.0
        self.x[self.x >= 1 - tol] = 1.0
        self.weights = weights
        self.bounds = np.asarray(bounds, dtype=float)
        self.bound_relation = bound_relation
        self.caps = np.asarray(caps, dtype=float)
        self.tol = tol
        m = len(self.bounds)
        self.m = m
        self.machine_of = np.array([i for i, _ in self.pairs], dtype=int)
        self.job_of = np.array([j for _, j in self.pairs], dtype=int)
        self.load_dropped = np.isnan(self.bounds)
        self.cap_dropped = ~np.isfinite(self.caps)
        self.cap_rewrite: list[float | None] = [None] * m
        # utility floors only: x1 + x2 >= floor(X1 + X2) once the floor row goes
        self.count_floor: list[float | None] = [None] * m
        self.iterations = 0
        self.history: list[dict] = []

    def floating(self) -> np.ndarray:
        return (self.x > self.tol) & (self.x < 1 - self.tol)

    def _apply_drop_rules(self, fl: np.ndarray) -> Counter:
        tol = self.tol
        degree = Counter()
        for k in np.flatnonzero(fl):
            degree[self.machine_of[k]] += 1
        for i in range(self.m):
            k = degree.get(i, 0)
            if k == 0:
                continue
            mine = np.flatnonzero(fl & (self.machine_of == i))
            if k == 1:
                self.load_dropped[i] = True
                self.cap_dropped[i] = True
            elif k == 2:
                self.load_dropped[i] = True
                if not self.cap_dropped[i] and self.cap_rewrite[i] is None:
                    self.cap_rewrite[i] = float(math.ceil(self.x[mine].sum() - tol))
                if self.bound_relation == GE and self.count_floor[i] is None:
                    self.count_floor[i] = float(math.floor(self.x[mine].sum() + tol))
            elif k == 3 and not self.load_dropped[i] and not self.cap_dropped[i]:
                if self._load_slack(i, fl) <= tol and self._cap_slack(i, fl) <= tol:
                    self.load_dropped[i] = True
        return degree

    def _settled(self, i: int):
        on = (self.machine_of == i) & (self.x == 1.0)
        ones = int(on.sum())
        w = float(sum(self.weights[i, j] for j in self.job_of[on]))
        return ones, w

    def _load_rhs(self, i: int) -> float:
        _, w = self._settled(i)
        return self.bounds[i] - w

    def _cap_rhs(self, i: int) -> float:
        if self.cap_rewrite[i] is not None:
            return self.cap_rewrite[i]
        ones, _ = self._settled(i)
        return self.caps[i] - ones

    def _load_slack(self, i, fl) -> float:
        mine = np.flatnonzero(fl & (self.machine_of == i))
        act = sum(self.weights[i, self.job_of[k]] * self.x[k] for k in mine)
        rhs = self._load_rhs(i)
        return rhs - act if self.bound_relation == LE else act - rhs

    def _cap_slack(self, i, fl) -> float:
        mine = np.flatnonzero(fl & (self.machine_of == i))
        return self._cap_rhs(i) - self.x[mine].sum()

    def reduced_system(self, fl: np.ndarray) -> Polytope:
        idx = np.flatnonzero(fl)
        rows: list[Constraint] = []
        for j in sorted(set(self.job_of[idx].tolist())):
            mine = [int(k) for k in idx if self.job_of[k] == j]
            settled = float(self.x[(self.job_of == j) & ~fl].sum())
            rows.append(Constraint({k: 1.0 for k in mine}, EQ, 1.0 - settled, "Assign", label=j))
        for i in sorted(set(self.machine_of[idx].tolist())):
            mine = [int(k) for k in idx if self.machine_of[k] == i]
            if not self.load_dropped[i]:
                coeffs = {k: float(self.weights[i, self.job_of[k]]) for k in mine}
                if any(coeffs.values()):
                    tag = "Load" if self.bound_relation == LE else "Utility"
                    rows.append(Constraint(coeffs, self.bound_relation, self._load_rhs(i), tag, label=i))
            if not self.cap_dropped[i]:
                rows.append(Constraint({k: 1.0 for k in mine}, LE, self._cap_rhs(i), "Capacity", label=i))
            if self.count_floor[i] and len(mine) == 2:
                rows.append(Constraint({k: 1.0 for k in mine}, GE, self.count_floor[i], "Capacity", label=i))
        return Polytope(rows, [int(k) for k in idx])

    def _vertex_guard(self, degree: Counter, P: Polytope, fl: np.ndarray):
        sizes = Counter(degree.values())
        caps_tight = all(
            self.cap_dropped[i] or self._cap_slack(i, fl) <= self.tol for i in degree
        )
        counting_case = (
            sizes.get(1, 0) == 0
            and sizes.get(3, 0) == 0
            and all(k in (2, 4) for k in sizes)
            and caps_tight
        )
        diag = {
            "iteration": self.iterations,
            "machine_degree_counts": dict(sorted(sizes.items())),
            "floating_variables": int(fl.sum()),
            "rows": len(P.constraints),
            "counting_case_matches": counting_case,
        }
        logger.error("walk stalled at a vertex: %s", diag)
        raise InternalInvariantError("current point is a vertex of the reduced system", diag)

    def step(self, chooser: Chooser) -> bool:
        """Apply one move; False once every variable is integral."""
        fl = self.floating()
        if not fl.any():
            return False
        degree = self._apply_drop_rules(fl)
        P = self.reduced_system(fl)
        xf = self.x[fl]
        if is_vertex(P, xf, self.tol):
            self._vertex_guard(degree, P, fl)
        br = move_branches(P, xf, self.tol)
        idx = np.flatnonzero(fl)
        self.x[idx] = chooser(br, idx)
        self.iterations += 1
        return True

    def run(self, chooser: Chooser, max_iterations: int) -> np.ndarray:
        while self.step(chooser):
            if self.iterations > max_iterations:
                raise InternalInvariantError(
                    "walk exceeded its iteration budget",
                    {"iterations": self.iterations, "budget": max_iterations},
                )
        return self.x


def _pairs_and_values(inst: GapInstance, x_star, T: float):
    """Normalise a fractional point to (pairs, values)."""
    m, n = inst.p.shape
    if isinstance(x_star, dict):
        pairs = sorted(e for e in x_star if isinstance(e, tuple) and len(e) == 2 and e[0] != "void")
        vals = np.array([x_star[e] for e in pairs], dtype=float)
    else:
        X = np.asarray(x_star, dtype=float)
        if X.shape != (m, n):
            raise InvalidInputError(f"x* has shape {X.shape}, expected {(m, n)}")
        pairs = [(i, j) for i in range(m) for j in range(n) if X[i, j] > 0 or inst.p[i, j] <= T]
        vals = np.array([X[e] for e in pairs])
    if not np.all(np.isfinite(vals)):
        raise InvalidInputError("x* has non-finite values")
    return pairs, vals


def constraint_budget(n_jobs: int, n_machines: int, n_vars: int) -> int:
    """LP rows (cost, assign, load, cap) plus one box bound per variable."""
    return 1 + n_jobs + 2 * n_machines + n_vars


def _to_matrix(pairs, vals, shape) -> np.ndarray:
    X = np.zeros(shape)
    for (i, j), v in zip(pairs, vals):
        X[i, j] = v
    return X


def _round(inst: GapInstance, x_star, T: float, chooser_factory) -> Schedule:
    m, n = inst.p.shape
    pairs, vals = _pairs_and_values(inst, x_star, T)
    walk = CapacitatedWalk(
        pairs, vals, inst.p, np.full(m, float(T)), LE, inst.b.astype(float)
    )
    costs = np.array([inst.c[e] for e in pairs])
    budget = constraint_budget(n, m, len(pairs))
    X = walk.run(chooser_factory(costs), budget)
    sched = schedule_from_matrix(_to_matrix(pairs, X, (m, n)), inst.p, inst.c, walk.iterations)
    if len(sched.assign) != n:
        raise InternalInvariantError("some job ended unassigned", {"assign": sched.assign})
    return sched


def sched_cap_round(inst: GapInstance, x_star, T: float, rng: np.random.Generator) -> Schedule:
    """Randomised rounding of an LP solution; marginals are preserved."""
    return _round(inst, x_star, T, lambda costs: random_chooser(rng))


def derandomize_cost(inst: GapInstance, x_star, T: float) -> Schedule:
    """Deterministic rounding whose cost never exceeds the fractional cost."""
    return _round(inst, x_star, T, cost_chooser)


def fractional_loads(inst: GapInstance, x_star, T: float) -> np.ndarray:
    pairs, vals = _pairs_and_values(inst, x_star, T)
    X = _to_matrix(pairs, vals, inst.p.shape)
    return (inst.p * X).sum(axis=1)


def load_increase_bound(inst: GapInstance, x_star, T: float, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Per machine, the largest p over strictly fractional x* entries (0 if none)."""
    pairs, vals = _pairs_and_values(inst, x_star, T)
    out = np.zeros(inst.machines)
    for (i, j), v in zip(pairs, vals):
        if tol < v < 1 - tol:
            out[i] = max(out[i], inst.p[i, j])
    return out
