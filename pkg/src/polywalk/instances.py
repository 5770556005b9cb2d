"""Problem instances, their validation helpers and the JSON file format.

Instance files are JSON objects with a ``kind`` field:

``gap-cap``
    ``machines``, ``jobs``, ``p``, ``c`` (machines x jobs, nested or flat
    row-major), ``b`` (per-machine job caps, optional), ``C`` and
    optionally ``T``.
``outlier``
    ``machines``, ``jobs``, ``p``, ``c``, ``profits``, ``Pi``, ``C``,
    ``epsilon``.
``maxmin``
    ``persons``, ``goods``, ``u`` (persons x goods, non-negative
    integers) and optionally ``caps``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import InvalidInputError, ParseError


def check_matrix(a, name: str, shape=None, nonneg: bool = True) -> np.ndarray:
    """Finite (and by default non-negative) 2-d float array."""
    a = np.asarray(a, dtype=float)
    if shape is not None and a.ndim == 1 and a.size == shape[0] * shape[1]:
        a = a.reshape(shape)
    if a.ndim != 2:
        raise InvalidInputError(f"{name} must be a 2-d array")
    if shape is not None and a.shape != tuple(shape):
        raise InvalidInputError(f"{name} has shape {a.shape}, expected {tuple(shape)}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} has non-finite entries")
    if nonneg and np.any(a < 0):
        raise InvalidInputError(f"{name} must be non-negative")
    return a


def check_vector(v, name: str, size: int, nonneg: bool = True, integral: bool = False) -> np.ndarray:
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size != size:
        raise InvalidInputError(f"{name} has length {v.size}, expected {size}")
    if not np.all(np.isfinite(v)):
        raise InvalidInputError(f"{name} has non-finite entries")
    if nonneg and np.any(v < 0):
        raise InvalidInputError(f"{name} must be non-negative")
    if integral:
        if np.any(v != np.round(v)):
            raise InvalidInputError(f"{name} must be integral")
        return v.astype(int)
    return v


def check_scalar(x, name: str, nonneg: bool = True) -> float:
    x = float(x)
    if not np.isfinite(x) or (nonneg and x < 0):
        raise InvalidInputError(f"{name} must be a finite non-negative number")
    return x


@dataclass
class GapInstance:
    """Assignment of ``n`` jobs to ``m`` machines with caps and a cost budget.

    ``p[i, j]`` and ``c[i, j]`` are processing time and cost of job ``j``
    on machine ``i``; ``b[i]`` caps the number of jobs on machine ``i``
    (``None`` means uncapacitated).
    """

    p: np.ndarray
    c: np.ndarray | None = None
    b: np.ndarray | None = None
    cost_budget: float = float("inf")
    makespan_target: float | None = None

    def __post_init__(self):
        self.p = check_matrix(self.p, "p")
        m, n = self.p.shape
        self.c = np.zeros((m, n)) if self.c is None else check_matrix(self.c, "c", (m, n))
        if self.b is None:
            self.b = np.full(m, n, dtype=int)
        else:
            self.b = check_vector(self.b, "b", m, integral=True)
        if self.cost_budget != float("inf"):
            self.cost_budget = check_scalar(self.cost_budget, "cost_budget")
        if self.makespan_target is not None:
            self.makespan_target = check_scalar(self.makespan_target, "makespan_target")

    @property
    def machines(self) -> int:
        return self.p.shape[0]

    @property
    def jobs(self) -> int:
        return self.p.shape[1]

    def to_dict(self) -> dict:
        d = {
            "kind": "gap-cap",
            "machines": self.machines,
            "jobs": self.jobs,
            "p": self.p.tolist(),
            "c": self.c.tolist(),
            "b": self.b.tolist(),
        }
        if np.isfinite(self.cost_budget):
            d["C"] = self.cost_budget
        if self.makespan_target is not None:
            d["T"] = self.makespan_target
        return d


@dataclass
class OutlierInstance:
    """Jobs may be left out; scheduled profit must reach ``profit_floor``."""

    p: np.ndarray
    c: np.ndarray | None = None
    profits: np.ndarray | None = None
    profit_floor: float = 0.0
    cost_budget: float = float("inf")
    epsilon: float = 0.5

    def __post_init__(self):
        self.p = check_matrix(self.p, "p")
        m, n = self.p.shape
        self.c = np.zeros((m, n)) if self.c is None else check_matrix(self.c, "c", (m, n))
        self.profits = np.ones(n) if self.profits is None else check_vector(self.profits, "profits", n)
        self.profit_floor = check_scalar(self.profit_floor, "profit_floor")
        if self.cost_budget != float("inf"):
            self.cost_budget = check_scalar(self.cost_budget, "cost_budget")
        if not 0 < self.epsilon < 1:
            raise InvalidInputError("epsilon must lie in (0, 1)")
        if self.profit_floor > self.profits.sum() + 1e-9:
            raise InvalidInputError("profit_floor exceeds the total profit of all jobs")

    @property
    def machines(self) -> int:
        return self.p.shape[0]

    @property
    def jobs(self) -> int:
        return self.p.shape[1]

    @property
    def eps_sq(self) -> float:
        return self.epsilon ** 2

    def to_dict(self) -> dict:
        d = {
            "kind": "outlier",
            "machines": self.machines,
            "jobs": self.jobs,
            "p": self.p.tolist(),
            "c": self.c.tolist(),
            "profits": self.profits.tolist(),
            "Pi": self.profit_floor,
            "epsilon": self.epsilon,
        }
        if np.isfinite(self.cost_budget):
            d["C"] = self.cost_budget
        return d


@dataclass
class MaxMinInstance:
    """Persons x goods integer utilities, optional per-person good caps."""

    u: np.ndarray
    caps: np.ndarray | None = None

    def __post_init__(self):
        u = check_matrix(self.u, "u")
        if np.any(u != np.round(u)):
            raise InvalidInputError("utilities must be integers")
        self.u = u.astype(int)
        if self.caps is not None:
            self.caps = check_vector(self.caps, "caps", self.persons, integral=True)

    @property
    def persons(self) -> int:
        return self.u.shape[0]

    @property
    def goods(self) -> int:
        return self.u.shape[1]

    def to_dict(self) -> dict:
        d = {"kind": "maxmin", "persons": self.persons, "goods": self.goods, "u": self.u.tolist()}
        if self.caps is not None:
            d["caps"] = self.caps.tolist()
        return d


def check_gap_instance(X, **kwargs) -> GapInstance:
    """Accept a :class:`GapInstance` or a processing-time matrix plus keywords."""
    if isinstance(X, GapInstance):
        return X
    return GapInstance(X, **kwargs)


def check_outlier_instance(X, **kwargs) -> OutlierInstance:
    if isinstance(X, OutlierInstance):
        return X
    return OutlierInstance(X, **kwargs)


def check_maxmin_instance(X, **kwargs) -> MaxMinInstance:
    if isinstance(X, MaxMinInstance):
        return X
    return MaxMinInstance(X, **kwargs)


def _field(doc: dict, key: str, required: bool = True, default=None):
    if key not in doc:
        if required:
            raise ParseError("missing required field", field=key)
        return default
    return doc[key]


def _dims(doc, rows_key, cols_key):
    try:
        rows, cols = int(_field(doc, rows_key)), int(_field(doc, cols_key))
    except (TypeError, ValueError) as exc:
        raise ParseError(f"dimensions must be integers: {exc}", field=rows_key) from exc
    return rows, cols


def instance_from_dict(doc: dict):
    """Build an instance from a parsed document, raising :class:`ParseError`."""
    if not isinstance(doc, dict):
        raise ParseError("top level must be an object")
    kind = _field(doc, "kind")
    current = "kind"
    try:
        if kind == "gap-cap":
            m, n = _dims(doc, "machines", "jobs")
            current = "p"
            p = check_matrix(_field(doc, "p"), "p", (m, n))
            current = "c"
            c = _field(doc, "c", False)
            c = None if c is None else check_matrix(c, "c", (m, n))
            current = "b"
            b = _field(doc, "b", False)
            b = None if b is None else check_vector(b, "b", m, integral=True)
            current = "C"
            C = _field(doc, "C", False, float("inf"))
            C = C if C == float("inf") else check_scalar(C, "C")
            current = "T"
            return GapInstance(p, c, b, C, _field(doc, "T", False))
        if kind == "outlier":
            m, n = _dims(doc, "machines", "jobs")
            current = "p"
            p = check_matrix(_field(doc, "p"), "p", (m, n))
            current = "c"
            c = _field(doc, "c", False)
            c = None if c is None else check_matrix(c, "c", (m, n))
            current = "profits"
            profits = check_vector(_field(doc, "profits"), "profits", n)
            current = "C"
            C = _field(doc, "C", False, float("inf"))
            C = C if C == float("inf") else check_scalar(C, "C")
            current = "epsilon"
            eps = float(_field(doc, "epsilon", False, 0.5))
            if not 0 < eps < 1:
                raise InvalidInputError("epsilon must lie in (0, 1)")
            current = "Pi"
            return OutlierInstance(p, c, profits, check_scalar(_field(doc, "Pi"), "Pi"), C, eps)
        if kind == "maxmin":
            k, g = _dims(doc, "persons", "goods")
            current = "u"
            u = check_matrix(_field(doc, "u"), "u", (k, g))
            if np.any(u != np.round(u)):
                raise InvalidInputError("utilities must be integers")
            current = "caps"
            return MaxMinInstance(u, _field(doc, "caps", False))
    except ParseError:
        raise
    except (InvalidInputError, TypeError, ValueError) as exc:
        raise ParseError(str(exc), field=current) from exc
    raise ParseError(f"unknown kind {kind!r}", field="kind")


def load_instance(path):
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from exc
    return instance_from_dict(doc)


def dump_instance(inst, path) -> None:
    Path(path).write_text(json.dumps(inst.to_dict(), indent=2, sort_keys=True) + "\n")
