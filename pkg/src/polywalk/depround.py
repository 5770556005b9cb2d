"""Bipartite dependent rounding along alternating cycles and maximal paths.

Each step picks an even cycle (or, failing that, a maximal path) of
fractional edges, splits it into two alternating matchings and shifts
mass between them so that one edge settles at 0 or 1 while every edge
keeps its expectation.  Repeating until nothing is fractional leaves each
vertex with degree equal to the floor or ceiling of its fractional degree.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable

import numpy as np

from .exceptions import InvalidInputError, NothingToRoundError

TOL = 1e-9


@dataclass
class BipartiteFractional:
    """Edge values in [0, 1] between ``left`` and ``right`` vertex lists."""

    left: list
    right: list
    edges: dict = field(default_factory=dict)

    def __post_init__(self):
        self.left = list(self.left)
        self.right = list(self.right)
        lset, rset = set(self.left), set(self.right)
        for (u, v), x in self.edges.items():
            if u not in lset or v not in rset:
                raise InvalidInputError(f"edge {(u, v)!r} has an endpoint outside the graph")
            if not np.isfinite(x) or x < -TOL or x > 1 + TOL:
                raise InvalidInputError(f"edge {(u, v)!r} value {x} outside [0, 1]")

    def copy(self, edges=None) -> "BipartiteFractional":
        return BipartiteFractional(self.left, self.right, dict(self.edges if edges is None else edges))

    def fractional_edges(self, tol: float = TOL) -> list:
        return [e for e, x in self.edges.items() if tol < x < 1 - tol]

    def degree(self, vertex, side: str) -> float:
        k = 0 if side == "left" else 1
        return sum(x for e, x in self.edges.items() if e[k] == vertex)

    def is_integral(self, tol: float = TOL) -> bool:
        return not self.fractional_edges(tol)


def _node_order(g: BipartiteFractional) -> dict:
    order = {("L", u): k for k, u in enumerate(g.left)}
    order.update({("R", v): len(g.left) + k for k, v in enumerate(g.right)})
    return order


def find_cycle_or_path(adj: dict[Hashable, list], start) -> tuple[list, bool]:
    """Walk from ``start`` without reusing edges.

    Returns ``(nodes, is_cycle)``.  For a cycle the first node is repeated
    at the end.  A path is extended in both directions until each end has
    no unused edge, so it is maximal.  ``adj`` lists neighbours in the
    order they should be tried.
    """
    path = [start]
    pos = {start: 0}
    used: set = set()
    reversed_once = False
    while True:
        cur = path[-1]
        nxt = None
        for w in adj[cur]:
            if frozenset((cur, w)) not in used:
                nxt = w
                break
        if nxt is None:
            if reversed_once or len(path) == 1 and not adj[cur]:
                return path, False
            reversed_once = True
            path.reverse()
            pos = {v: k for k, v in enumerate(path)}
            continue
        used.add(frozenset((cur, nxt)))
        if nxt in pos:
            return path[pos[nxt]:] + [nxt], True
        pos[nxt] = len(path)
        path.append(nxt)


def _pick_walk(g: BipartiteFractional, frac: list):
    order = _node_order(g)
    adj: dict = {}
    for u, v in frac:
        a, b = ("L", u), ("R", v)
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    for nbrs in adj.values():
        nbrs.sort(key=order.__getitem__)
    start = min(adj, key=order.__getitem__)
    nodes, is_cycle = find_cycle_or_path(adj, start)
    edges = []
    for a, b in zip(nodes, nodes[1:]):
        edges.append((a[1], b[1]) if a[0] == "L" else (b[1], a[1]))
    return edges, is_cycle


def step_amounts(values_m1, values_m2) -> tuple[float, float]:
    """The two shift sizes: ``alpha`` raises M1/lowers M2, ``beta`` the reverse."""
    alpha = min([1 - x for x in values_m1] + [x for x in values_m2])
    beta = min([x for x in values_m1] + [1 - x for x in values_m2])
    return alpha, beta


def round_step(g: BipartiteFractional, rng: np.random.Generator, tol: float = TOL) -> BipartiteFractional:
    """One rounding step; returns a new graph with at least one more settled edge."""
    frac = g.fractional_edges(tol)
    if not frac:
        raise NothingToRoundError("no fractional edge left to round")
    walk, _ = _pick_walk(g, frac)
    m1, m2 = walk[0::2], walk[1::2]
    alpha, beta = step_amounts([g.edges[e] for e in m1], [g.edges[e] for e in m2])
    if rng.random() < beta / (alpha + beta):
        delta = alpha
    else:
        delta = -beta
    new = dict(g.edges)
    for e in m1:
        new[e] = _snap(new[e] + delta, tol)
    for e in m2:
        new[e] = _snap(new[e] - delta, tol)
    return g.copy(new)


def _snap(x: float, tol: float) -> float:
    if x <= tol:
        return 0.0
    if x >= 1 - tol:
        return 1.0
    return x


def round_all(g: BipartiteFractional, rng: np.random.Generator, tol: float = TOL) -> BipartiteFractional:
    """Round every edge to 0/1, preserving marginals and degree floors/ceilings."""
    g = g.copy({e: _snap(x, tol) for e, x in g.edges.items()})
    for _ in range(len(g.edges) + 1):
        if g.is_integral(tol):
            return g
        g = round_step(g, rng, tol)
    if not g.is_integral(tol):  # pragma: no cover - each step settles an edge
        raise RuntimeError("dependent rounding failed to terminate")
    return g
