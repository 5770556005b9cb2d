"""Scikit-learn style front ends.

Each estimator is fitted on a single problem instance (a processing-time
or utility matrix plus keyword data) and exposes the rounded solution as
``labels_``: the machine of each job, or the owner of each good, with
``-1`` for dropped jobs and unallocated goods.

>>> import numpy as np
>>> from polywalk import CapacitatedScheduler
>>> p = np.array([[2, 3, 1], [1, 2, 4]])
>>> CapacitatedScheduler().fit(p, b=[2, 2]).labels_
array([0, 1, 0])
"""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_is_fitted

from .gapcap import derandomize_cost, min_feasible_T, sched_cap_round, solve_lp_cap
from .instances import check_gap_instance, check_maxmin_instance, check_outlier_instance
from .maxmin import maxmin_cap_round, maxmin_solve, solve_capacitated_lp
from .outlier import DEFAULT_GUESS_BUDGET, solve_outlier


def check_generator(random_state) -> np.random.Generator:
    """Turn ``None``, an int or a Generator into a :class:`numpy.random.Generator`.

    Integers seed a Philox stream so results match the command line tool.
    """
    if random_state is None:
        return np.random.Generator(np.random.Philox())
    if isinstance(random_state, np.random.Generator):
        return random_state
    if isinstance(random_state, numbers.Integral):
        return np.random.Generator(np.random.Philox(int(random_state)))
    raise ValueError(f"{random_state!r} cannot seed a numpy Generator")


class _ScheduleMixin:
    def _store_schedule(self, sched, n_jobs):
        self.schedule_ = sched
        self.labels_ = sched.labels(n_jobs)
        self.makespan_ = sched.makespan
        self.cost_ = sched.cost
        self.loads_ = sched.loads
        self.n_iter_ = sched.iterations


class CapacitatedScheduler(_ScheduleMixin, ClusterMixin, BaseEstimator):
    """Makespan scheduling with hard job caps and a cost budget.

    Parameters
    ----------
    derandomize : bool, default=True
        Round deterministically so that cost never exceeds the LP cost.
        When False, the rounding is random and preserves LP marginals.
    precision : float, optional
        Bisection width for non-integral processing times.
    random_state : int, Generator or None
        Only used when ``derandomize`` is False.

    Attributes
    ----------
    lp_makespan_ : float
        Smallest makespan guess with a feasible relaxation.
    lp_solution_ : dict
        Fractional assignment ``(machine, job) -> value``.
    labels_ : ndarray of shape (n_jobs,)
    makespan_, cost_ : float
    loads_ : ndarray of shape (n_machines,)
    n_iter_ : int
        Random-walk moves used by the rounding.
    """

    def __init__(self, derandomize=True, precision=None, random_state=None):
        self.derandomize = derandomize
        self.precision = precision
        self.random_state = random_state

    def fit(self, X, y=None, c=None, b=None, cost_budget=float("inf")):
        """Round the relaxation of instance ``X``.

        ``X`` is a (machines, jobs) processing-time matrix or a
        :class:`GapInstance`; ``c``, ``b`` and ``cost_budget`` complete it.
        """
        inst = check_gap_instance(X, c=c, b=b, cost_budget=cost_budget)
        T = inst.makespan_target
        if T is None:
            T = min_feasible_T(inst, self.precision)
        sol = solve_lp_cap(inst, T)
        self.lp_makespan_ = float(T)
        self.lp_solution_ = {e: v for e, v in sol.values.items() if isinstance(e, tuple)}
        if self.derandomize:
            sched = derandomize_cost(inst, self.lp_solution_, T)
        else:
            sched = sched_cap_round(inst, self.lp_solution_, T, check_generator(self.random_state))
        self._store_schedule(sched, inst.jobs)
        return self


class OutlierScheduler(_ScheduleMixin, ClusterMixin, BaseEstimator):
    """Scheduling that may drop jobs while keeping scheduled profit above a floor.

    Parameters
    ----------
    epsilon : float, default=0.5
        Accuracy in (0, 1); smaller values guess more expensive pairs.
    derandomize : bool, default=True
    precision : float, optional
    guess_budget : int
        Cap on the number of pinning guesses tried.
    random_state : int, Generator or None

    Attributes
    ----------
    lp_makespan_ : float
    labels_ : ndarray of shape (n_jobs,)
        ``-1`` marks dropped jobs.
    makespan_, cost_, profit_ : float
    n_iter_ : int
    """

    def __init__(self, epsilon=0.5, derandomize=True, precision=None,
                 guess_budget=DEFAULT_GUESS_BUDGET, random_state=None):
        self.epsilon = epsilon
        self.derandomize = derandomize
        self.precision = precision
        self.guess_budget = guess_budget
        self.random_state = random_state

    def fit(self, X, y=None, c=None, profits=None, profit_floor=0.0, cost_budget=float("inf")):
        inst = check_outlier_instance(
            X, c=c, profits=profits, profit_floor=profit_floor,
            cost_budget=cost_budget, epsilon=self.epsilon,
        )
        rng = None if self.derandomize else check_generator(self.random_state)
        sched, lp = solve_outlier(inst, rng, self.precision, self.guess_budget)
        self.lp_makespan_ = lp.T
        self.guess_ = lp.guess
        self.profit_ = sched.profit
        self._store_schedule(sched, inst.jobs)
        return self


class MaxMinAllocator(ClusterMixin, BaseEstimator):
    """Max-min fair allocation of goods to persons.

    Parameters
    ----------
    epsilon : float, default=0.05
        Relative gap at which the threshold search stops.
    lam, eps1 : float, optional
        Big-item cut ``T / lam`` and pruning level; default to the
        values chosen from the number of persons.
    random_state : int, Generator or None

    Attributes
    ----------
    threshold_ : float
        Configuration-LP threshold.
    labels_ : ndarray of shape (n_goods,)
        Owner of each good, ``-1`` if unallocated.
    utilities_ : ndarray of shape (n_persons,)
    min_utility_ : float
    """

    def __init__(self, epsilon=0.05, lam=None, eps1=None, random_state=None):
        self.epsilon = epsilon
        self.lam = lam
        self.eps1 = eps1
        self.random_state = random_state

    def fit(self, X, y=None):
        inst = check_maxmin_instance(X)
        alloc = maxmin_solve(inst, self.epsilon, check_generator(self.random_state), self.lam, self.eps1)
        self.allocation_ = alloc
        self.threshold_ = alloc.T
        self.labels_ = alloc.owner
        self.utilities_ = alloc.utilities
        self.min_utility_ = alloc.min_utility
        return self

    def score(self, X=None, y=None):
        """Smallest utility of any person."""
        check_is_fitted(self)
        return self.min_utility_


class CapacitatedMaxMinAllocator(MaxMinAllocator):
    """Max-min allocation where person ``i`` may receive at most ``caps[i]`` goods.

    Rounds the assignment LP, so each person ends above the LP floor
    minus their most valued good.
    """

    def __init__(self, random_state=None):
        self.random_state = random_state

    def fit(self, X, y=None, caps=None):
        inst = check_maxmin_instance(X, caps=caps)
        T, Xf = solve_capacitated_lp(inst)
        alloc = maxmin_cap_round(inst, Xf, T, check_generator(self.random_state))
        self.lp_solution_ = Xf
        self.allocation_ = alloc
        self.threshold_ = alloc.T
        self.labels_ = alloc.owner
        self.utilities_ = alloc.utilities
        self.min_utility_ = alloc.min_utility
        return self
