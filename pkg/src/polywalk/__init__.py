"""Randomised polytope walks for scheduling and fair allocation.

Rounds LP relaxations of three problems:

* makespan scheduling with hard per-machine job caps and a cost budget
  (:class:`CapacitatedScheduler`);
* scheduling with outliers, where jobs may be dropped as long as the
  scheduled profit reaches a floor (:class:`OutlierScheduler`);
* max-min fair allocation of indivisible goods, optionally with
  per-person caps (:class:`MaxMinAllocator`,
  :class:`CapacitatedMaxMinAllocator`).
"""

__version__ = "0.1.0"

from .estimators import (
    CapacitatedMaxMinAllocator,
    CapacitatedScheduler,
    MaxMinAllocator,
    OutlierScheduler,
    check_generator,
)
from .exceptions import (
    AtVertexError,
    BudgetExceededError,
    DegenerateDirectionError,
    InfeasibleInstanceError,
    InfeasiblePointError,
    InternalInvariantError,
    InvalidInputError,
    NothingToRoundError,
    ParseError,
    PolywalkError,
    SolverFailureError,
)
from .instances import GapInstance, MaxMinInstance, OutlierInstance, dump_instance, load_instance

__all__ = [
    "AtVertexError",
    "BudgetExceededError",
    "CapacitatedMaxMinAllocator",
    "CapacitatedScheduler",
    "DegenerateDirectionError",
    "GapInstance",
    "InfeasibleInstanceError",
    "InfeasiblePointError",
    "InternalInvariantError",
    "InvalidInputError",
    "MaxMinAllocator",
    "MaxMinInstance",
    "NothingToRoundError",
    "OutlierInstance",
    "OutlierScheduler",
    "ParseError",
    "PolywalkError",
    "SolverFailureError",
    "check_generator",
    "dump_instance",
    "load_instance",
]
