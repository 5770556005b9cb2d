"""Exhaustive solvers for tiny instances, in exact rational arithmetic.

These serve as ground truth for the approximation tests, so they share
no tolerances or LP code with the rounding algorithms.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .exceptions import BudgetExceededError, InfeasibleInstanceError
from .gapcap import Schedule
from .instances import GapInstance, MaxMinInstance, OutlierInstance

ENUMERATION_BUDGET = 10_000_000


def _exact(a) -> list:
    """Nested lists of :class:`Fraction` (exact for any float input)."""
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 0:
        return Fraction(float(arr)) if np.isfinite(arr) else arr.item()
    return [_exact(row) for row in arr]


def _check_budget(base: int, power: int, budget: int) -> None:
    if base ** power > budget:
        raise BudgetExceededError(f"{base}^{power} assignments exceed the budget of {budget}")


def exact_gap_cap(inst: GapInstance, budget: int = ENUMERATION_BUDGET) -> Schedule:
    """Minimum makespan over assignments meeting job caps and the cost budget.

    Depth-first search with makespan bounding; raises
    :class:`InfeasibleInstanceError` when nothing is feasible.
    """
    m, n = inst.machines, inst.jobs
    _check_budget(m, n, budget)
    p, c = _exact(inst.p), _exact(inst.c)
    C = Fraction(inst.cost_budget) if np.isfinite(inst.cost_budget) else None
    caps = [int(b) for b in inst.b]
    # cheapest completion cost of jobs j.. for cost pruning
    tail = [Fraction(0)] * (n + 1)
    for j in range(n - 1, -1, -1):
        tail[j] = tail[j + 1] + min(c[i][j] for i in range(m))

    best: list = [None, None]
    loads = [Fraction(0)] * m
    counts = [0] * m
    choice = [0] * n

    def dfs(j: int, cost: Fraction, span: Fraction) -> None:
        if best[0] is not None and span >= best[0]:
            return
        if C is not None and cost + tail[j] > C:
            return
        if j == n:
            best[0], best[1] = span, list(choice)
            return
        for i in range(m):
            if counts[i] >= caps[i]:
                continue
            loads[i] += p[i][j]
            counts[i] += 1
            choice[j] = i
            dfs(j + 1, cost + c[i][j], max(span, loads[i]))
            loads[i] -= p[i][j]
            counts[i] -= 1

    dfs(0, Fraction(0), Fraction(0))
    if best[0] is None:
        raise InfeasibleInstanceError("no assignment satisfies the caps and cost budget")
    assign = {j: i for j, i in enumerate(best[1])}
    X = np.zeros((m, n))
    for j, i in assign.items():
        X[i, j] = 1
    return Schedule(
        assign,
        float(best[0]),
        float(sum(c[i][j] for j, i in assign.items())),
        (inst.p * X).sum(axis=1),
    )


@dataclass(frozen=True)
class OutlierPoint:
    """One Pareto-optimal outcome: high profit, low cost, low makespan."""

    profit: Fraction
    cost: Fraction
    makespan: Fraction
    assign: tuple  # machine per job, -1 when dropped


def _dominates(a: OutlierPoint, b: OutlierPoint) -> bool:
    return a.profit >= b.profit and a.cost <= b.cost and a.makespan <= b.makespan


def exact_outlier(inst: OutlierInstance, T: float | None = None, budget: int = ENUMERATION_BUDGET) -> list[OutlierPoint]:
    """Pareto frontier over all partial assignments (each job on a machine or dropped).

    With ``T`` given, only assignments of makespan at most ``T`` count.
    """
    m, n = inst.machines, inst.jobs
    _check_budget(m + 1, n, budget)
    p, c, pi = _exact(inst.p), _exact(inst.c), _exact(inst.profits)
    cap = None if T is None else Fraction(float(T))
    frontier: list[OutlierPoint] = []
    for combo in itertools.product(range(-1, m), repeat=n):
        loads = [Fraction(0)] * m
        cost = profit = Fraction(0)
        for j, i in enumerate(combo):
            if i >= 0:
                loads[i] += p[i][j]
                cost += c[i][j]
                profit += pi[j]
        span = max(loads, default=Fraction(0))
        if cap is not None and span > cap:
            continue
        pt = OutlierPoint(profit, cost, span, combo)
        if any(_dominates(q, pt) for q in frontier):
            continue
        frontier = [q for q in frontier if not _dominates(pt, q)] + [pt]
    return sorted(frontier, key=lambda q: (q.makespan, q.cost, -q.profit, q.assign))


def exact_outlier_optimum(inst: OutlierInstance, budget: int = ENUMERATION_BUDGET) -> OutlierPoint:
    """Smallest makespan with profit at least the floor and cost within budget."""
    C = Fraction(inst.cost_budget) if np.isfinite(inst.cost_budget) else None
    floor = Fraction(inst.profit_floor)
    ok = [
        q for q in exact_outlier(inst, budget=budget)
        if q.profit >= floor and (C is None or q.cost <= C)
    ]
    if not ok:
        raise InfeasibleInstanceError("no partial assignment meets the profit floor within the cost budget")
    return ok[0]


def exact_maxmin(inst: MaxMinInstance, budget: int = ENUMERATION_BUDGET) -> int:
    """Largest achievable minimum utility (goods may stay unallocated)."""
    k, m = inst.persons, inst.goods
    _check_budget(k, m, budget)
    u = inst.u.tolist()
    caps = [m] * k if inst.caps is None else [int(x) for x in inst.caps]
    best = -1
    util = [0] * k
    counts = [0] * k
    # remaining utility each person could still collect from goods j..
    rest = [[0] * (m + 1) for _ in range(k)]
    for i in range(k):
        for j in range(m - 1, -1, -1):
            rest[i][j] = rest[i][j + 1] + u[i][j]

    def dfs(j: int) -> None:
        nonlocal best
        if min(util[i] + rest[i][j] for i in range(k)) <= best:
            return
        if j == m:
            best = min(util)
            return
        for i in range(k):
            if counts[i] < caps[i] and u[i][j] > 0:
                util[i] += u[i][j]
                counts[i] += 1
                dfs(j + 1)
                util[i] -= u[i][j]
                counts[i] -= 1
        dfs(j + 1)

    dfs(0)
    return max(best, 0)
