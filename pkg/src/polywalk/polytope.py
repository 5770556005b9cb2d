"""Constraint systems over [0, 1]-boxed variables and the random move.

A :class:`Polytope` is a list of linear rows over named variables, every
variable implicitly confined to ``[0, 1]``.  :func:`rand_move` takes a
non-vertex point, picks a direction in the nullspace of the rows that are
tight there, and jumps to one of the two boundary points along that line
with probabilities that keep every coordinate's expectation fixed.

Points may be passed either as a mapping ``var_id -> value`` or as an
array ordered like ``Polytope.var_ids``; results come back in the same
form.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Mapping, NamedTuple, Sequence

import numpy as np

from .exceptions import (
    AtVertexError,
    DegenerateDirectionError,
    InfeasiblePointError,
    InvalidInputError,
)
from .linalg import nullspace_basis, rank

LE, EQ, GE = "<=", "=", ">="
RELATIONS = (LE, EQ, GE)
TAGS = (
    "Assign",
    "Load",
    "Capacity",
    "Cost",
    "Profit",
    "BundleProfit",
    "Utility",
    "Box",
)
DEFAULT_TOL = 1e-7


@dataclass(frozen=True)
class Constraint:
    """``sum(coeffs[v] * x[v]) <relation> rhs``."""

    coeffs: Mapping[Hashable, float]
    relation: str
    rhs: float
    tag: str = "Assign"
    label: Hashable = None

    def __post_init__(self):
        if not self.coeffs:
            raise InvalidInputError("constraint needs at least one coefficient")
        if self.relation not in RELATIONS:
            raise InvalidInputError(f"unknown relation {self.relation!r}")
        if not np.isfinite(self.rhs):
            raise InvalidInputError("constraint rhs must be finite")
        if self.tag not in TAGS:
            raise InvalidInputError(f"unknown tag {self.tag!r}")

    def activity(self, values: Mapping[Hashable, float]) -> float:
        return sum(a * values[v] for v, a in self.coeffs.items())

    def slack(self, values: Mapping[Hashable, float]) -> float:
        """Non-negative when satisfied; zero when tight."""
        act = self.activity(values)
        if self.relation == LE:
            return self.rhs - act
        if self.relation == GE:
            return act - self.rhs
        return -abs(act - self.rhs)


def box_upper(var) -> Constraint:
    return Constraint({var: 1.0}, LE, 1.0, "Box", label=("upper", var))


def box_lower(var) -> Constraint:
    return Constraint({var: 1.0}, GE, 0.0, "Box", label=("lower", var))


@dataclass
class Polytope:
    """Rows plus the implicit box ``0 <= x <= 1`` on every variable."""

    constraints: list[Constraint]
    var_ids: list = field(default=None)

    def __post_init__(self):
        if self.var_ids is None:
            seen: dict = {}
            for con in self.constraints:
                for v in con.coeffs:
                    seen.setdefault(v, None)
            self.var_ids = list(seen)
        else:
            self.var_ids = list(self.var_ids)
        self.index = {v: k for k, v in enumerate(self.var_ids)}
        if len(self.index) != len(self.var_ids):
            raise InvalidInputError("duplicate variable ids")
        n_rows, n_vars = len(self.constraints), len(self.var_ids)
        A = np.zeros((n_rows, n_vars))
        for r, con in enumerate(self.constraints):
            for v, a in con.coeffs.items():
                if v not in self.index:
                    raise InvalidInputError(f"constraint references unknown variable {v!r}")
                A[r, self.index[v]] += a
        self.A = A
        self.rhs = np.array([c.rhs for c in self.constraints], dtype=float)
        self.sense = np.array(
            [{LE: -1, EQ: 0, GE: 1}[c.relation] for c in self.constraints], dtype=int
        )

    @property
    def n_vars(self) -> int:
        return len(self.var_ids)

    def to_array(self, x) -> np.ndarray:
        if isinstance(x, Mapping):
            if set(x) != set(self.var_ids):
                raise InvalidInputError("point keys must equal the polytope's var_ids")
            arr = np.array([x[v] for v in self.var_ids], dtype=float)
        else:
            arr = np.array(x, dtype=float).reshape(-1)
            if arr.shape[0] != self.n_vars:
                raise InvalidInputError(
                    f"point has {arr.shape[0]} coordinates, polytope has {self.n_vars}"
                )
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("point has non-finite values")
        return arr

    def from_array(self, arr: np.ndarray, like) -> dict | np.ndarray:
        if isinstance(like, Mapping):
            return {v: float(arr[k]) for k, v in enumerate(self.var_ids)}
        return arr

    def slacks(self, x: np.ndarray) -> np.ndarray:
        act = self.A @ x
        out = np.where(self.sense < 0, self.rhs - act, act - self.rhs)
        return np.where(self.sense == 0, -np.abs(act - self.rhs), out)

    def check_feasible(self, x: np.ndarray, tol: float) -> np.ndarray:
        """Return the row slacks, raising if ``x`` lies outside by more than tol."""
        if np.any(x < -tol) or np.any(x > 1 + tol):
            k = int(np.argmax(np.maximum(-x, x - 1)))
            raise InfeasiblePointError(
                f"variable {self.var_ids[k]!r} = {x[k]} outside [0, 1]"
            )
        s = self.slacks(x)
        if s.size and s.min() < -tol:
            r = int(np.argmin(s))
            raise InfeasiblePointError(
                f"constraint {r} ({self.constraints[r].tag}) violated by {-s[r]:.3g}"
            )
        return s

    def tight_rows(self, x: np.ndarray, tol: float) -> np.ndarray:
        s = self.check_feasible(x, tol)
        return (self.sense == 0) | (np.abs(s) <= tol)

    def floating(self, x: np.ndarray, tol: float) -> np.ndarray:
        return (x > tol) & (x < 1 - tol)


def tight_set(P: Polytope, x, tol: float = DEFAULT_TOL) -> list[Constraint]:
    """Rows and box bounds satisfied with equality at ``x``."""
    arr = P.to_array(x)
    tight = P.tight_rows(arr, tol)
    out = [con for con, t in zip(P.constraints, tight) if t]
    for k, v in enumerate(P.var_ids):
        if abs(arr[k]) <= tol:
            out.append(box_lower(v))
        elif abs(arr[k] - 1) <= tol:
            out.append(box_upper(v))
    return out


def _reduced_tight_matrix(P: Polytope, x: np.ndarray, tol: float):
    tight = P.tight_rows(x, tol)
    free = np.flatnonzero(P.floating(x, tol))
    B = P.A[np.ix_(np.flatnonzero(tight), free)]
    if B.size:
        B = B[np.abs(B).max(axis=1) > 0]
    return B, free, tight


def is_vertex(P: Polytope, x, tol: float = DEFAULT_TOL) -> bool:
    """True iff the tight rows pin down every floating variable."""
    arr = P.to_array(x)
    B, free, _ = _reduced_tight_matrix(P, arr, tol)
    if free.size == 0:
        return True
    if B.shape[0] == 0:
        return False
    return rank(B) == free.size


def _max_step(P: Polytope, x, d, slack, tight, free, tol) -> float:
    step = np.inf
    ad = P.A @ d
    loose = ~tight
    eps = 1e-12
    # rows of the form a.x <= rhs limit movement when a.d > 0
    le = loose & (P.sense < 0) & (ad > eps)
    if le.any():
        step = min(step, float(np.min(slack[le] / ad[le])))
    ge = loose & (P.sense > 0) & (ad < -eps)
    if ge.any():
        step = min(step, float(np.min(slack[ge] / -ad[ge])))
    df = d[free]
    xf = x[free]
    up = df > eps
    if up.any():
        step = min(step, float(np.min((1 - xf[up]) / df[up])))
    down = df < -eps
    if down.any():
        step = min(step, float(np.min(xf[down] / -df[down])))
    return step


class Branches(NamedTuple):
    """The two endpoints a random move may jump to."""

    direction: np.ndarray
    step_plus: float
    step_minus: float
    plus: np.ndarray
    minus: np.ndarray

    @property
    def prob_plus(self) -> float:
        return self.step_minus / (self.step_plus + self.step_minus)


def snap(x: np.ndarray, tol: float) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    x[x <= tol] = 0.0
    x[x >= 1 - tol] = 1.0
    return x


def move_branches(P: Polytope, x, tol: float = DEFAULT_TOL) -> Branches:
    """Direction and both travel lengths for a move at ``x``.

    Candidate directions come from the free columns of the reduced tight
    system in order; the first that permits positive travel both ways wins.
    """
    arr = P.to_array(x)
    B, free, tight = _reduced_tight_matrix(P, arr, tol)
    if free.size == 0:
        raise AtVertexError("no floating variables")
    if B.shape[0] == 0:
        basis = [np.eye(free.size)[0]]
    else:
        basis = nullspace_basis(B)
    if not basis:
        raise AtVertexError("tight rows have full column rank on the floating variables")
    slack = P.slacks(arr)
    for r_free in basis:
        d = np.zeros(P.n_vars)
        d[free] = r_free
        fp = _max_step(P, arr, d, slack, tight, free, tol)
        fm = _max_step(P, arr, -d, slack, tight, free, tol)
        if fp > 0 and fm > 0 and np.isfinite(fp) and np.isfinite(fm):
            return Branches(d, fp, fm, snap(arr + fp * d, tol), snap(arr - fm * d, tol))
    raise DegenerateDirectionError(
        f"every nullspace direction is blocked ({len(basis)} tried)"
    )


def rand_move(P: Polytope, x, rng: np.random.Generator, tol: float = DEFAULT_TOL):
    """One random move: ``x + f(r) r`` w.p. ``f(-r)/(f(r)+f(-r))``, else ``x - f(-r) r``."""
    br = move_branches(P, x, tol)
    y = br.plus if rng.random() < br.prob_plus else br.minus
    return P.from_array(y, x)
