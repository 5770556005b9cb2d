"""Scheduling with outliers: a hard profit floor, a cost budget, and
(2 + eps) makespan.

Costly machine/job pairs (cost above ``eps**2 * C``) are guessed up front
and pinned.  The remaining LP solution is rounded by a walk that

* drops the load row of a machine with one floating job,
* folds the assignment rows of singleton jobs into one profit row that
  keeps their joint profit fixed,
* at a vertex, folds non-tight jobs into that profit row too and then
  drops load rows of nearly full degree-2/3 machines,

and finishes with a small combinatorial step once the walk is truly stuck
(which only happens with fewer than ``1/eps`` floating machines).
"""

from __future__ import annotations

import itertools
import logging
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .exceptions import BudgetExceededError, InfeasibleInstanceError, InternalInvariantError, InvalidInputError
from .gapcap import Chooser, Schedule, allowed_pairs, cost_chooser, random_chooser
from .instances import OutlierInstance
from .lpsolve import LinearProgram, LpSolution, solve
from .polytope import DEFAULT_TOL, EQ, GE, LE, Constraint, Polytope, is_vertex, move_branches

logger = logging.getLogger(__name__)

CONFIGS = ("Config1", "Config2", "Config3", "Config4", "Config5")
DEFAULT_GUESS_BUDGET = 20_000


@dataclass(frozen=True)
class Guess:
    """Pinned values for every costly pair; pairs mapped to 1 have distinct jobs."""

    forced: tuple[tuple[tuple[int, int], int], ...] = ()

    @property
    def ones(self) -> list[tuple[int, int]]:
        return [e for e, v in self.forced if v == 1]

    def as_dict(self) -> dict:
        return dict(self.forced)


def expensive_pairs(inst: OutlierInstance) -> list[tuple[int, int]]:
    if not np.isfinite(inst.cost_budget):
        return []
    thresh = inst.eps_sq * inst.cost_budget
    m, n = inst.p.shape
    return [(i, j) for i in range(m) for j in range(n) if inst.c[i, j] > thresh]


def enumerate_guesses(inst: OutlierInstance, budget: int = DEFAULT_GUESS_BUDGET) -> list[Guess]:
    """All pinnings of costly pairs with at most ``floor(1/eps**2)`` ones.

    The all-zero guess comes first, then guesses by increasing size.
    """
    pairs = expensive_pairs(inst)
    limit = math.floor(1 / inst.eps_sq + 1e-12)
    out: list[Guess] = []
    for size in range(0, min(limit, len(pairs)) + 1):
        for ones in itertools.combinations(pairs, size):
            if len({j for _, j in ones}) < size:
                continue
            chosen = set(ones)
            out.append(Guess(tuple((e, int(e in chosen)) for e in pairs)))
            if len(out) > budget:
                raise BudgetExceededError(
                    f"more than {budget} guesses over {len(pairs)} costly pairs; "
                    "use a larger epsilon or a larger guess budget"
                )
    return out


def build_lp_out(inst: OutlierInstance, T: float, g: Guess | None = None) -> LinearProgram:
    """LP over ``x[i, j]`` with ``y_j = sum_i x[i, j]`` substituted out."""
    m, n = inst.p.shape
    pairs = allowed_pairs(inst.p, T)
    pinned = g.as_dict() if g is not None else {}
    bounds = {}
    rows: list[Constraint] = []
    for e, v in pinned.items():
        if e in bounds or v not in (0, 1):
            raise InvalidInputError(f"bad pin {e}: {v}")
        if inst.p[e] > T:
            if v == 1:
                rows.append(Constraint({("void", e): 0.0}, EQ, 1.0, "Assign"))
            continue
        bounds[e] = (float(v), float(v))
    if np.isfinite(inst.cost_budget) and pairs:
        rows.append(Constraint({e: inst.c[e] for e in pairs}, LE, inst.cost_budget, "Cost"))
    for j in range(n):
        coeffs = {e: 1.0 for e in pairs if e[1] == j}
        if coeffs:
            rows.append(Constraint(coeffs, LE, 1.0, "Assign", label=j))
    for i in range(m):
        coeffs = {e: inst.p[e] for e in pairs if e[0] == i}
        if coeffs:
            rows.append(Constraint(coeffs, LE, T, "Load", label=i))
    profit = {e: inst.profits[e[1]] for e in pairs}
    if inst.profit_floor > 0:
        if any(profit.values()):
            rows.append(Constraint(profit, GE, inst.profit_floor, "Profit"))
        else:
            rows.append(Constraint({("void", "profit"): 0.0}, GE, inst.profit_floor, "Profit"))
    return LinearProgram({}, "minimize", rows, bounds, var_ids=list(pairs))


# --------------------------------------------------------------- classification


def degree_profile(edges) -> tuple[Counter, Counter]:
    mdeg, jdeg = Counter(), Counter()
    for i, j in edges:
        mdeg[i] += 1
        jdeg[j] += 1
    return mdeg, jdeg


def classify_config(edges) -> str | None:
    """Name the terminal configuration of a floating machine/job graph.

    ``edges`` is an iterable of floating (machine, job) pairs.
    """
    mdeg, jdeg = degree_profile(edges)
    if not mdeg:
        return None
    n1 = sum(1 for d in jdeg.values() if d == 1)
    big_jobs = Counter(d for d in jdeg.values() if d != 1)
    machines = Counter(mdeg.values())
    jobs_all_two = set(big_jobs) <= {2}
    if n1 == 0:
        if set(machines) == {2} and jobs_all_two:
            return "Config1"
        return None
    if n1 == 2:
        if set(machines) == {2} and jobs_all_two:
            return "Config2"
        return None
    if n1 == 1:
        if set(machines) == {2} and big_jobs.get(3, 0) == 1 and set(big_jobs) <= {2, 3}:
            return "Config3"
        if machines.get(3, 0) == 1 and set(machines) <= {2, 3} and jobs_all_two:
            return "Config4"
        if machines.get(1, 0) == 1 and set(machines) <= {1, 2} and jobs_all_two:
            return "Config5"
    return None


# ----------------------------------------------------------------------- walk


@dataclass
class OutlierWalk:
    inst: OutlierInstance
    pairs: list
    x: np.ndarray
    T: float
    tol: float = DEFAULT_TOL
    load_dropped: np.ndarray = None
    bundle: set = field(default_factory=set)
    iterations: int = 0
    terminal: str | None = None
    events: list = field(default_factory=list)

    def __post_init__(self):
        self.x = np.clip(np.asarray(self.x, dtype=float), 0.0, 1.0)
        self.x[self.x <= self.tol] = 0.0
        self.x[self.x >= 1 - self.tol] = 1.0
        self.machine_of = np.array([i for i, _ in self.pairs], dtype=int)
        self.job_of = np.array([j for _, j in self.pairs], dtype=int)
        if self.load_dropped is None:
            self.load_dropped = np.zeros(self.inst.machines, dtype=bool)

    def floating(self) -> np.ndarray:
        return (self.x > self.tol) & (self.x < 1 - self.tol)

    def _degrees(self, fl):
        idx = np.flatnonzero(fl)
        return degree_profile((self.machine_of[k], self.job_of[k]) for k in idx)

    def _machine_load_rhs(self, i: int) -> float:
        on = (self.machine_of == i) & (self.x == 1.0)
        return self.T - float(self.inst.p[i, self.job_of[on]].sum())

    def system(self, fl: np.ndarray) -> Polytope:
        idx = np.flatnonzero(fl)
        p, profits = self.inst.p, self.inst.profits
        rows: list[Constraint] = []
        by_job: dict[int, list[int]] = {}
        by_machine: dict[int, list[int]] = {}
        for k in idx:
            by_job.setdefault(int(self.job_of[k]), []).append(int(k))
            by_machine.setdefault(int(self.machine_of[k]), []).append(int(k))
        for j, ks in sorted(by_job.items()):
            total = float(self.x[ks].sum())
            if j not in self.bundle:
                rows.append(Constraint({k: 1.0 for k in ks}, EQ, total, "Assign", label=j))
            elif len(ks) >= 2:
                # a folded job must still go to at most one machine
                rows.append(Constraint({k: 1.0 for k in ks}, LE, 1.0, "Assign", label=j))
        for i, ks in sorted(by_machine.items()):
            if self.load_dropped[i]:
                continue
            coeffs = {k: float(p[i, self.job_of[k]]) for k in ks}
            if any(coeffs.values()):
                rows.append(Constraint(coeffs, LE, self._machine_load_rhs(i), "Load", label=i))
        prof = {int(k): float(profits[self.job_of[k]]) for k in idx if self.job_of[k] in self.bundle}
        if any(prof.values()):
            value = sum(a * self.x[k] for k, a in prof.items())
            rows.append(Constraint(prof, EQ, value, "BundleProfit"))
        return Polytope(rows, [int(k) for k in idx])

    def _step3(self, fl: np.ndarray, P: Polytope) -> Polytope:
        """Fold non-tight jobs into the profit row, then drop nearly-full loads."""
        xf = self.x[fl]
        idx = np.flatnonzero(fl)
        sums = Counter()
        for k in idx:
            sums[int(self.job_of[k])] += self.x[k]
        nontight = sorted(j for j, s in sums.items() if s < 1 - self.tol and j not in self.bundle)
        if nontight:
            self.bundle.update(nontight)
            self.events.append(("fold", self.iterations, tuple(nontight)))
            P = self.system(fl)
            if not is_vertex(P, xf, self.tol):
                return P
        mdeg, _ = self._degrees(fl)
        eps = self.inst.epsilon
        while True:
            cands = []
            for i, d in mdeg.items():
                if self.load_dropped[i] or d not in (2, 3):
                    continue
                h = float(self.x[fl & (self.machine_of == i)].sum())
                if h >= d - 1 - eps - self.tol:
                    cands.append((-(h - (d - 1)), i))
            if not cands:
                return P
            _, i = min(cands)
            self.load_dropped[i] = True
            self.events.append(("drop-load", self.iterations, i))
            P = self.system(fl)
            if not is_vertex(P, xf, self.tol):
                return P

    def step(self, chooser: Chooser) -> bool:
        fl = self.floating()
        if not fl.any():
            return False
        mdeg, jdeg = self._degrees(fl)
        for i, d in mdeg.items():
            if d == 1:
                self.load_dropped[i] = True
        for j, d in jdeg.items():
            if d == 1:
                self.bundle.add(j)
        P = self.system(fl)
        xf = self.x[fl]
        if is_vertex(P, xf, self.tol):
            P = self._step3(fl, P)
        if not is_vertex(P, xf, self.tol):
            br = move_branches(P, xf, self.tol)
            self.x[np.flatnonzero(fl)] = chooser(br, np.flatnonzero(fl))
            self.iterations += 1
            return True
        self._finish(fl)
        return False

    def _finish(self, fl: np.ndarray) -> None:
        idx = np.flatnonzero(fl)
        edges = [(int(self.machine_of[k]), int(self.job_of[k])) for k in idx]
        mdeg, jdeg = degree_profile(edges)
        dump = {
            "iteration": self.iterations,
            "floating": {f"{i},{j}": float(self.x[k]) for (i, j), k in zip(edges, idx)},
            "machine_degrees": dict(mdeg),
            "job_degrees": dict(jdeg),
        }
        need = math.ceil(1 / self.inst.epsilon - 1e-12)
        if len(mdeg) >= need:
            raise InternalInvariantError(
                f"walk stalled with {len(mdeg)} floating machines (>= {need})", dump
            )
        config = classify_config(edges)
        if config is None:
            raise InternalInvariantError("unrecognised terminal configuration", dump)
        self.terminal = config
        self.events.append(("terminal", self.iterations, config))
        self._assign_terminal(idx, edges, mdeg, jdeg)

    def _assign_terminal(self, idx, edges, mdeg, jdeg) -> None:
        p, profits = self.inst.p, self.inst.profits
        val = {e: float(self.x[k]) for e, k in zip(edges, idx)}
        pos = {e: int(k) for e, k in zip(edges, idx)}
        live = set(edges)
        chosen: list[tuple[int, int]] = []

        def settle(job, machine):
            nonlocal live
            chosen.append((machine, job))
            live = {e for e in live if e[1] != job}

        singles = sorted(j for j, d in jdeg.items() if d == 1)
        for i, d in sorted(mdeg.items()):
            if d != 3:
                continue
            mine = sorted(j for (ii, j) in live if ii == i)
            single = [j for j in mine if jdeg[j] == 1]
            if len(single) != 1:
                continue
            others = [j for j in mine if j != single[0]]
            cheaper = min(others, key=lambda j: (p[i, j], j))
            settle(single[0], i)
            settle(cheaper, i)
            live = {e for e in live if e[0] != i}
            singles = [j for j in singles if j != single[0]]
            break
        remaining_singles = [j for j in singles if any(e[1] == j for e in live)]
        if len(remaining_singles) == 2:
            (e1,) = [e for e in live if e[1] == remaining_singles[0]]
            (e2,) = [e for e in live if e[1] == remaining_singles[1]]
            if val[e1] + val[e2] < 1 - self.tol:
                # keep the more profitable; on a tie drop the higher index
                j1, j2 = e1[1], e2[1]
                drop = j2 if profits[j1] >= profits[j2] else j1
                live = {e for e in live if e[1] != drop}
                self.events.append(("discard", self.iterations, drop))
        jobs = sorted({j for _, j in live})
        machines = sorted({i for i, _ in live} - {i for i, _ in chosen})
        if jobs:
            big = 1e9
            W = np.full((len(jobs), max(len(machines), 1)), big)
            for a, j in enumerate(jobs):
                for b, i in enumerate(machines):
                    if (i, j) in live:
                        W[a, b] = self.inst.c[i, j]
            rows, cols = linear_sum_assignment(W)
            matched = set()
            for a, b in zip(rows, cols):
                if W[a, b] < big:
                    settle(jobs[a], machines[b])
                    matched.add(jobs[a])
            for j in jobs:
                if j in matched:
                    continue
                options = [e for e in edges if e[1] == j]
                i = min(options, key=lambda e: (p[e], e[0]))[0]
                logger.warning("terminal step: job %d doubled up on machine %d", j, i)
                settle(j, i)
        self.x[idx] = 0.0
        for e in chosen:
            self.x[pos[e]] = 1.0

    def run(self, chooser: Chooser, max_iterations: int) -> np.ndarray:
        while self.step(chooser):
            if self.iterations > max_iterations:
                raise InternalInvariantError(
                    "walk exceeded its iteration budget",
                    {"iterations": self.iterations, "budget": max_iterations},
                )
        return self.x


def _schedule(inst: OutlierInstance, pairs, X, iterations) -> Schedule:
    assign = {}
    for (i, j), v in zip(pairs, X):
        if v > 0.5:
            if j in assign:
                raise InternalInvariantError(f"job {j} assigned twice")
            assign[j] = i
    loads = np.zeros(inst.machines)
    cost = 0.0
    for j, i in assign.items():
        loads[i] += inst.p[i, j]
        cost += inst.c[i, j]
    profit = float(sum(inst.profits[j] for j in assign))
    return Schedule(assign, float(loads.max(initial=0.0)), cost, loads, iterations, profit)


def _normalise(inst: OutlierInstance, x_star):
    if isinstance(x_star, dict):
        pairs = sorted(e for e in x_star if isinstance(e, tuple) and len(e) == 2 and e[0] != "void")
        vals = np.array([x_star[e] for e in pairs], dtype=float)
    else:
        X = np.asarray(x_star, dtype=float)
        if X.shape != inst.p.shape:
            raise InvalidInputError(f"x* has shape {X.shape}, expected {inst.p.shape}")
        pairs = [(i, j) for i in range(inst.machines) for j in range(inst.jobs) if X[i, j] > 0]
        vals = np.array([X[e] for e in pairs])
    return pairs, vals


def initial_constraint_count(inst: OutlierInstance, n_vars: int) -> int:
    """LP rows (cost, assign, load, profit) plus one box bound per variable."""
    return 2 + inst.jobs + inst.machines + n_vars


def _round(inst, x_star, T, chooser_factory) -> Schedule:
    pairs, vals = _normalise(inst, x_star)
    walk = OutlierWalk(inst, pairs, vals, T)
    costs = np.array([inst.c[e] for e in pairs])
    X = walk.run(chooser_factory(costs), initial_constraint_count(inst, len(pairs)))
    sched = _schedule(inst, pairs, X, walk.iterations)
    sched.trace = walk.events
    return sched


def sched_outlier_round(inst: OutlierInstance, x_star, T: float, rng: np.random.Generator) -> Schedule:
    """Randomised rounding of a solution to the outlier relaxation."""
    return _round(inst, x_star, T, lambda costs: random_chooser(rng))


def derandomized_outlier_round(inst: OutlierInstance, x_star, T: float) -> Schedule:
    """Cost-derandomised rounding; cost stays at most the LP cost until the last step."""
    return _round(inst, x_star, T, cost_chooser)


@dataclass
class OutlierLp:
    T: float
    guess: Guess
    solution: LpSolution


def _feasible_at(inst: OutlierInstance, T: float, guesses: list[Guess]) -> OutlierLp | None:
    relaxed = solve(build_lp_out(inst, T, None))
    if not relaxed.is_optimal:
        return None
    for g in guesses:
        sol = solve(build_lp_out(inst, T, g))
        if sol.is_optimal:
            return OutlierLp(T, g, sol)
    return None


def min_feasible_outlier_lp(
    inst: OutlierInstance, precision: float | None = None, guess_budget: int = DEFAULT_GUESS_BUDGET
) -> OutlierLp:
    """Smallest makespan guess for which some pinning makes the outlier relaxation feasible."""
    guesses = enumerate_guesses(inst, guess_budget)
    p = inst.p
    hi = float(p.max(axis=0).sum())
    best = _feasible_at(inst, hi, guesses)
    if best is None:
        raise InfeasibleInstanceError("no guess makes the LP feasible even at the largest makespan")
    lo = 0.0
    if np.all(p == np.round(p)):
        lo_i, hi_i = 0, int(round(hi))
        while lo_i < hi_i:
            mid = (lo_i + hi_i) // 2
            found = _feasible_at(inst, float(mid), guesses)
            if found is not None:
                hi_i, best = mid, found
            else:
                lo_i = mid + 1
        return best
    if precision is None:
        precision = 1e-6 * max(float(p.sum()), 1.0)
    found = _feasible_at(inst, lo, guesses)
    if found is not None:
        return found
    while hi - lo > precision:
        mid = 0.5 * (lo + hi)
        found = _feasible_at(inst, mid, guesses)
        if found is not None:
            hi, best = mid, found
        else:
            lo = mid
    return best


def solve_outlier(
    inst: OutlierInstance,
    rng: np.random.Generator | None = None,
    precision: float | None = None,
    guess_budget: int = DEFAULT_GUESS_BUDGET,
) -> tuple[Schedule, OutlierLp]:
    """LP search plus rounding; derandomised for cost unless ``rng`` is given."""
    lp = min_feasible_outlier_lp(inst, precision, guess_budget)
    if rng is None:
        sched = derandomized_outlier_round(inst, lp.solution.values, lp.T)
    else:
        sched = sched_outlier_round(inst, lp.solution.values, lp.T, rng)
    return sched, lp
