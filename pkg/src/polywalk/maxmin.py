"""Max-min fair allocation by rounding the configuration LP.

Pipeline (uncapacitated):

1. search the largest threshold ``T`` whose configuration LP is feasible;
2. round the big-item ("matching") edges with dependent rounding, so each
   person or good is matched with probability equal to its matching mass;
3. every unmatched person samples one small bundle in proportion to its LP
   weight and claims its goods, minus goods already matched and goods
   whose matching mass is at least ``1 - eps1``;
4. conflicting claims are settled by a utility-aware rounding walk that
   keeps each interior person's utility fixed.

The capacitated variant rounds an assignment-LP solution with the same
walk used for capacitated scheduling, persons playing machines and
utility floors playing load ceilings.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .depround import BipartiteFractional, find_cycle_or_path, round_all
from .exceptions import BudgetExceededError, InternalInvariantError, InvalidInputError
from .gapcap import CapacitatedWalk, constraint_budget, random_chooser
from .instances import MaxMinInstance
from .lpsolve import LinearProgram, solve
from .polytope import DEFAULT_TOL, EQ, GE, LE, Constraint

logger = logging.getLogger(__name__)

CONFIG_BUDGET = 200_000
TOL = 1e-9


def default_parameters(k: int) -> tuple[float, float]:
    """``(lam, eps1)`` for ``k`` persons.

    Uses ``lam = 2 sqrt(k) sqrt(log k / log log k)`` and
    ``eps1 = sqrt(log k / log log k) / sqrt(k)`` whenever that makes
    ``eps1 < 1``; small ``k`` falls back to ``(2, 0.5)``.
    """
    if k >= 3:
        ratio = math.log(k) / math.log(math.log(k))
        eps1 = math.sqrt(ratio / k)
        if eps1 < 1:
            return 2 * math.sqrt(k * ratio), eps1
    return 2.0, 0.5


def enumerate_valid_configs(u_row, T: float, lam: float, budget: int = CONFIG_BUDGET) -> list[tuple[int, ...]]:
    """Big-item singletons plus all minimal small-item bundles worth ``>= T``."""
    u_row = np.asarray(u_row, dtype=float)
    big_cut = T / lam
    configs = [(j,) for j in range(u_row.size) if u_row[j] >= big_cut and u_row[j] > 0]
    small = [j for j in range(u_row.size) if 0 < u_row[j] < big_cut]
    visited = 0
    stack: list[tuple[int, tuple[int, ...], float]] = [(0, (), 0.0)]
    found = []
    while stack:
        start, chosen, total = stack.pop()
        for pos in range(start, len(small)):
            visited += 1
            if visited > budget:
                raise BudgetExceededError(
                    f"configuration enumeration passed {budget} nodes; "
                    "use fewer goods or a larger threshold"
                )
            j = small[pos]
            s = total + u_row[j]
            nxt = chosen + (j,)
            if s >= T:
                if s - min(u_row[list(nxt)]) < T:
                    found.append(nxt)
            else:
                stack.append((pos + 1, nxt, s))
    return configs + sorted(found)


@dataclass
class ConfigLp:
    T: float
    lam: float
    configs: list[list[tuple[int, ...]]]
    x: dict  # (person, config) -> value

    def weights(self, shape) -> np.ndarray:
        """Per person/good mass ``w[i, j] = sum over configs containing j``."""
        w = np.zeros(shape)
        for (i, C), v in self.x.items():
            for j in C:
                w[i, j] += v
        return w


def solve_config_lp(inst: MaxMinInstance, T: float, lam: float, budget: int = CONFIG_BUDGET) -> ConfigLp | None:
    """Explicit configuration LP at threshold ``T``; None when infeasible.

    Among feasible points the solver maximises total configuration
    utility, which never hurts feasibility.
    """
    k, m = inst.u.shape
    configs = [enumerate_valid_configs(inst.u[i], T, lam, budget) for i in range(k)]
    if any(not cs for cs in configs):
        return None
    rows = []
    objective = {}
    for i, cs in enumerate(configs):
        rows.append(Constraint({(i, C): 1.0 for C in cs}, EQ, 1.0, "Assign", label=i))
        for C in cs:
            objective[(i, C)] = float(inst.u[i, list(C)].sum())
    for j in range(m):
        coeffs = {(i, C): 1.0 for i, cs in enumerate(configs) for C in cs if j in C}
        if coeffs:
            rows.append(Constraint(coeffs, LE, 1.0, "Capacity", label=j))
    sol = solve(LinearProgram(objective, "maximize", rows))
    if not sol.is_optimal:
        return None
    x = {key: v for key, v in sol.values.items() if v > TOL}
    return ConfigLp(T, lam, configs, x)


def search_threshold(inst: MaxMinInstance, lam: float, epsilon: float = 0.05) -> ConfigLp:
    """Largest feasible integer threshold, to within a ``1 - epsilon`` factor."""
    lo_lp = solve_config_lp(inst, 1.0, lam)
    if lo_lp is None:
        # some person values everything at zero: only T = 0 is attainable
        k = inst.persons
        return ConfigLp(0.0, lam, [[()] for _ in range(k)], {(i, ()): 1.0 for i in range(k)})
    lo, best = 1, lo_lp
    hi = int(inst.u.sum(axis=1).min())
    while hi > lo and (hi - lo > 1 and lo < (1 - epsilon) * hi):
        mid = (lo + hi) // 2
        found = solve_config_lp(inst, float(mid), lam)
        if found is not None:
            lo, best = mid, found
        else:
            hi = mid - 1
    if hi > lo:
        top = solve_config_lp(inst, float(hi), lam)
        if top is not None:
            best = top
    return best


@dataclass
class FlowMatchGraph:
    """Person/good masses split into big-item (matching) and small-item (flow) edges."""

    w: np.ndarray
    is_matching: np.ndarray
    m_person: np.ndarray
    m_good: np.ndarray

    @classmethod
    def from_lp(cls, lp: ConfigLp, u: np.ndarray) -> "FlowMatchGraph":
        w = lp.weights(u.shape)
        big = (u >= lp.T / lp.lam) & (w > TOL)
        wm = np.where(big, w, 0.0)
        return cls(w, big, wm.sum(axis=1), wm.sum(axis=0))

    @property
    def f_person(self) -> np.ndarray:
        return 1.0 - self.m_person

    @property
    def f_good(self) -> np.ndarray:
        return 1.0 - self.m_good

    def matching_graph(self) -> BipartiteFractional:
        k, m = self.w.shape
        edges = {(i, j): float(min(self.w[i, j], 1.0)) for i, j in zip(*np.nonzero(self.is_matching))}
        return BipartiteFractional(list(range(k)), list(range(m)), edges)


def sample_matching(g: FlowMatchGraph, rng: np.random.Generator) -> dict[int, int]:
    """Dependent rounding of the matching edges; returns ``person -> good``."""
    rounded = round_all(g.matching_graph(), rng)
    out: dict[int, int] = {}
    for (i, j), v in sorted(rounded.edges.items()):
        if v == 1.0:
            if i in out or j in out.values():
                raise InternalInvariantError("matching rounding produced a shared endpoint")
            out[int(i)] = int(j)
    return out


def claim_bundles(
    g: FlowMatchGraph,
    lp: ConfigLp,
    unmatched,
    eps1: float,
    rng: np.random.Generator,
    taken=(),
) -> dict[int, frozenset]:
    """Each unmatched person draws one small bundle with probability ``x / f``."""
    taken = set(taken)
    pruned = {int(j) for j in np.flatnonzero(g.m_good >= 1 - eps1)}
    claims: dict[int, frozenset] = {}
    for i in sorted(unmatched):
        options = [
            (C, v) for (ii, C), v in sorted(lp.x.items())
            if ii == i and len(C) > 0 and not (len(C) == 1 and g.is_matching[i, C[0]])
        ]
        f = sum(v for _, v in options)
        if f <= DEFAULT_TOL:
            if g.f_person[i] > 1e-6:
                raise InternalInvariantError(f"person {i} has flow mass {g.f_person[i]} but no bundle")
            claims[i] = frozenset()
            continue
        probs = np.array([v for _, v in options]) / f
        C = options[int(rng.choice(len(options), p=probs))][0]
        claims[i] = frozenset(j for j in C if j not in pruned and j not in taken)
    return claims


def contention_values(g: FlowMatchGraph, claims: dict[int, frozenset], u: np.ndarray) -> dict:
    """Claimed-edge values ``w / f_person`` with each good's total capped at 1.

    Zero-utility edges are left out.
    """
    vals = {}
    for i, goods in claims.items():
        f = g.f_person[i]
        for j in goods:
            if u[i, j] > 0 and f > DEFAULT_TOL:
                vals[(i, j)] = min(1.0, g.w[i, j] / f)
    per_good: dict[int, float] = {}
    for (i, j), v in vals.items():
        per_good[j] = per_good.get(j, 0.0) + v
    for (i, j) in list(vals):
        if per_good[j] > 1:
            vals[(i, j)] /= per_good[j]
    return vals


def _walk_multipliers(nodes, u) -> list[float]:
    """Increment ratios along a walk: goods flip the sign, persons keep utility."""
    mult = [1.0]
    for t in range(1, len(nodes) - 1):
        kind, v = nodes[t]
        if kind == "G":
            mult.append(-mult[-1])
        else:
            prev_good, next_good = nodes[t - 1][1], nodes[t + 1][1]
            mult.append(-mult[-1] * u[v, prev_good] / u[v, next_good])
    return mult


def _edge(a, b):
    return (a[1], b[1]) if a[0] == "P" else (b[1], a[1])


def _travel(y, g) -> float:
    steps = [(1 - yy) / gg if gg > 0 else yy / -gg for yy, gg in zip(y, g) if gg != 0]
    return min(steps)


def contention_step(values: dict, u: np.ndarray, rng: np.random.Generator, tol: float = TOL) -> dict:
    """One rounding move on the fractional claimed edges."""
    frac = [e for e, v in values.items() if tol < v < 1 - tol]
    if not frac:
        return values
    k = u.shape[0]
    order = lambda node: (0 if node[0] == "P" else 1, node[1])
    adj: dict = {}
    for i, j in frac:
        adj.setdefault(("P", i), []).append(("G", j))
        adj.setdefault(("G", j), []).append(("P", i))
    for nb in adj.values():
        nb.sort(key=order)
    start = min(adj, key=order)
    nodes, is_cycle = find_cycle_or_path(adj, start)
    if is_cycle and nodes[0][0] != "P":
        nodes = nodes[1:] + [nodes[1]]
    edges = [_edge(a, b) for a, b in zip(nodes, nodes[1:])]
    g = _walk_multipliers(nodes, u)
    y = [values[e] for e in edges]
    mu = _travel(y, g)
    gamma = _travel(y, [-x for x in g])
    if is_cycle:
        v0 = nodes[0][1]
        # net utility change of the closing person per unit of z1
        slope = u[v0, nodes[1][1]] * g[0] + u[v0, nodes[-2][1]] * g[-1]
        z1 = -gamma if slope < 0 else mu
    else:
        z1 = mu if rng.random() < gamma / (mu + gamma) else -gamma
    new = dict(values)
    for e, yy, gg in zip(edges, y, g):
        v = yy + z1 * gg
        new[e] = 0.0 if v <= tol else 1.0 if v >= 1 - tol else v
    return new


def resolve_contention(values: dict, u: np.ndarray, rng: np.random.Generator, tol: float = TOL) -> dict[int, int]:
    """Round claimed edges to an allocation ``good -> person``."""
    u = np.asarray(u)
    vals = {}
    for (i, j), v in values.items():
        if not (-tol <= v <= 1 + tol):
            raise InvalidInputError(f"edge {(i, j)} value {v} outside [0, 1]")
        if u[i, j] <= 0:
            continue
        vals[(i, j)] = float(min(max(v, 0.0), 1.0))
    per_good: dict = {}
    for (i, j), v in vals.items():
        per_good[j] = per_good.get(j, 0.0) + v
    over = {j: s for j, s in per_good.items() if s > 1 + 1e-7}
    if over:
        raise InvalidInputError(f"goods with total claimed mass above 1: {over}")
    for _ in range(len(vals) + 1):
        if not any(tol < v < 1 - tol for v in vals.values()):
            break
        vals = contention_step(vals, u, rng, tol)
    alloc: dict[int, int] = {}
    for (i, j), v in sorted(vals.items()):
        if v == 1.0:
            if j in alloc:
                raise InternalInvariantError(f"good {j} allocated twice")
            alloc[int(j)] = int(i)
    return alloc


def fractional_utilities(values: dict, u: np.ndarray) -> np.ndarray:
    out = np.zeros(u.shape[0])
    for (i, j), v in values.items():
        out[i] += v * u[i, j]
    return out


@dataclass
class Allocation:
    """Final owner per good (``-1`` when unallocated) and per-person utility."""

    owner: np.ndarray
    utilities: np.ndarray
    T: float
    lam: float = float("nan")
    eps1: float = float("nan")
    matched: dict = field(default_factory=dict)
    claims: dict = field(default_factory=dict)

    @property
    def min_utility(self) -> float:
        return float(self.utilities.min()) if self.utilities.size else 0.0

    @property
    def ratio(self) -> float:
        return self.min_utility / self.T if self.T > 0 else float("inf")

    def counts(self, k: int) -> np.ndarray:
        return np.bincount(self.owner[self.owner >= 0], minlength=k)


def _utilities(owner: np.ndarray, u: np.ndarray) -> np.ndarray:
    out = np.zeros(u.shape[0])
    for j, i in enumerate(owner):
        if i >= 0:
            out[i] += u[i, j]
    return out


def maxmin_solve(
    inst: MaxMinInstance,
    epsilon: float = 0.05,
    rng: np.random.Generator | None = None,
    lam: float | None = None,
    eps1: float | None = None,
    assign_leftovers: bool = True,
) -> Allocation:
    """Full uncapacitated pipeline: threshold search, matching, claims, contention."""
    if rng is None:
        rng = np.random.Generator(np.random.Philox(0))
    k, m = inst.u.shape
    d_lam, d_eps1 = default_parameters(k)
    lam = d_lam if lam is None else lam
    eps1 = d_eps1 if eps1 is None else eps1
    if lam <= 1 or not 0 < eps1 < 1:
        raise InvalidInputError("need lam > 1 and eps1 in (0, 1)")
    lp = search_threshold(inst, lam, epsilon)
    owner = np.full(m, -1, dtype=int)
    if lp.T <= 0:
        return Allocation(owner, np.zeros(k), 0.0, lam, eps1)
    g = FlowMatchGraph.from_lp(lp, inst.u)
    matched = sample_matching(g, rng)
    for i, j in matched.items():
        owner[j] = i
    unmatched = [i for i in range(k) if i not in matched]
    claims = claim_bundles(g, lp, unmatched, eps1, rng, taken=matched.values())
    vals = contention_values(g, claims, inst.u)
    for j, i in resolve_contention(vals, inst.u, rng).items():
        owner[j] = i
    if assign_leftovers:
        util = _utilities(owner, inst.u)
        for j in range(m):
            if owner[j] < 0 and inst.u[:, j].max() > 0:
                fans = np.flatnonzero(inst.u[:, j] > 0)
                i = int(fans[np.argmin(util[fans])])
                owner[j] = i
                util[i] += inst.u[i, j]
    return Allocation(owner, _utilities(owner, inst.u), lp.T, lam, eps1, matched, claims)


# ------------------------------------------------------------- capacitated


def solve_capacitated_lp(inst: MaxMinInstance) -> tuple[float, np.ndarray]:
    """Maximise the common utility floor ``t`` of the assignment LP with caps."""
    k, m = inst.u.shape
    caps = inst.caps if inst.caps is not None else np.full(k, m)
    pairs = [(i, j) for i in range(k) for j in range(m)]
    rows = []
    for j in range(m):
        rows.append(Constraint({(i, j): 1.0 for i in range(k)}, LE, 1.0, "Assign", label=j))
    for i in range(k):
        rows.append(Constraint({(i, j): 1.0 for j in range(m)}, LE, float(caps[i]), "Capacity", label=i))
        coeffs = {(i, j): float(inst.u[i, j]) for j in range(m)}
        coeffs["t"] = -1.0
        rows.append(Constraint(coeffs, GE, 0.0, "Utility", label=i))
    top = float(inst.u.sum(axis=1).max(initial=0))
    lp = LinearProgram({"t": 1.0}, "maximize", rows, {"t": (0.0, top)}, var_ids=pairs + ["t"])
    sol = solve(lp)
    if not sol.is_optimal:  # pragma: no cover - x = 0, t = 0 is always feasible
        raise InternalInvariantError("capacitated assignment LP not solvable")
    X = np.zeros((k, m))
    for (i, j) in pairs:
        X[i, j] = sol.values[(i, j)]
    return sol.values["t"], X


def maxmin_cap_round(
    inst: MaxMinInstance, x_star, T: float, rng: np.random.Generator | None = None
) -> Allocation:
    """Round a capped fractional allocation; caps hold and utility > T - max u."""
    if rng is None:
        rng = np.random.Generator(np.random.Philox(0))
    u = inst.u.astype(float)
    k, m = u.shape
    X = np.asarray(x_star, dtype=float)
    if X.shape != (k, m):
        raise InvalidInputError(f"x* has shape {X.shape}, expected {(k, m)}")
    caps = inst.caps.astype(float) if inst.caps is not None else np.full(k, np.inf)
    spill = 1.0 - X.sum(axis=0)
    if np.any(spill < -1e-7):
        raise InvalidInputError("a good is allocated more than once fractionally")
    pairs, vals = [], []
    for i in range(k):
        for j in range(m):
            if X[i, j] > 0:
                pairs.append((i, j))
                vals.append(X[i, j])
    # the extra row k absorbs unallocated mass; it has no rows of its own
    for j in range(m):
        if spill[j] > DEFAULT_TOL:
            pairs.append((k, j))
            vals.append(spill[j])
    weights = np.vstack([u, np.zeros((1, m))])
    bounds = np.append(np.full(k, float(T)), np.nan)
    walk = CapacitatedWalk(pairs, np.array(vals), weights, bounds, GE, np.append(caps, np.inf))
    vals = walk.run(random_chooser(rng), constraint_budget(m, k + 1, len(pairs)))
    owner = np.full(m, -1, dtype=int)
    for (i, j), v in zip(pairs, vals):
        if v == 1.0 and i < k:
            if owner[j] >= 0:
                raise InternalInvariantError(f"good {j} allocated twice")
            owner[j] = i
    return Allocation(owner, _utilities(owner, inst.u), float(T))
