import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polywalk.exceptions import InfeasibleInstanceError, InvalidInputError
from polywalk.gapcap import (
    CapacitatedWalk,
    build_lp_cap,
    constraint_budget,
    cost_chooser,
    derandomize_cost,
    fractional_loads,
    load_increase_bound,
    min_feasible_T,
    random_chooser,
    sched_cap_round,
    solve_lp_cap,
)
from polywalk.instances import GapInstance
from polywalk.oracle import exact_gap_cap
from polywalk.polytope import LE, Branches, Polytope
from generators import band, gap_instance, philox

HALF = np.full((2, 2), 0.5)


def test_pruned_pair_leaves_assign_row_infeasible():
    inst = GapInstance([[1.0]])
    lp = build_lp_cap(inst, 0.5)
    assert not [v for v in lp.variables() if isinstance(v, tuple) and v[0] != "void"]
    assert not solve_lp_cap(inst, 0.5).is_optimal


def test_single_pair_feasible():
    inst = GapInstance([[1.0]], [[1.0]], [1], 1.0)
    sol = solve_lp_cap(inst, 1.0)
    assert sol.is_optimal and sol.values[(0, 0)] == pytest.approx(1.0)


def test_identity_point_in_lp_cap():
    inst = GapInstance(np.ones((2, 2)), b=[1, 1])
    lp = build_lp_cap(inst, 1.0)
    P = Polytope(lp.constraints, lp.variables())
    P.check_feasible(P.to_array({(0, 0): 1.0, (0, 1): 0.0, (1, 0): 0.0, (1, 1): 1.0}), 1e-9)


def test_lp_cap_rows():
    inst = GapInstance([[1, 3], [2, 1]], [[1, 1], [1, 1]], [1, 2], 5.0)
    tags = sorted(c.tag for c in build_lp_cap(inst, 2.0).constraints)
    assert tags == ["Assign"] * 2 + ["Capacity"] * 2 + ["Cost"] + ["Load"] * 2


@pytest.mark.parametrize(
    "p, b, expected",
    [([[1.0, 1.0]], [2], 2.0), (np.ones((2, 2)), [1, 1], 1.0)],
)
def test_min_feasible_T(p, b, expected):
    assert min_feasible_T(GapInstance(p, b=b)) == expected


def test_min_feasible_T_fractional_bisection():
    inst = GapInstance([[1.5, 1.5]], b=[2])
    assert min_feasible_T(inst) == pytest.approx(3.0, abs=1e-5)


def test_infeasible_caps():
    # cost makes machine 0 unusable, machine 1 has no room
    inst = GapInstance(np.ones((2, 2)), [[100, 100], [0, 0]], [2, 0], 1.0)
    with pytest.raises(InfeasibleInstanceError):
        min_feasible_T(inst)


def test_integral_input_unchanged():
    inst = GapInstance(np.ones((2, 2)), b=[1, 1])
    sched = sched_cap_round(inst, np.eye(2), 1.0, philox(0))
    assert sched.assign == {0: 0, 1: 1} and sched.iterations == 0


def test_half_point_gives_one_job_each():
    inst = GapInstance(np.ones((2, 2)), b=[1, 1])
    outcomes = set()
    for s in range(30):
        sched = sched_cap_round(inst, HALF, 1.0, philox(s))
        assert sched.makespan == 1
        outcomes.add(tuple(sorted(sched.assign.items())))
    assert outcomes == {((0, 0), (1, 1)), ((0, 1), (1, 0))}


def test_cost_chooser_prefers_cheaper_branch():
    # current cost 4, branches 3 and 5
    br = Branches(np.array([1.0]), 1.0, 1.0, np.array([5.0]), np.array([3.0]))
    assert cost_chooser(np.array([1.0]))(br, np.array([0]))[0] == 3.0
    tie = Branches(np.array([1.0]), 1.0, 1.0, np.array([4.0]), np.array([4.0]))
    assert cost_chooser(np.array([1.0]))(tie, np.array([0]))[0] == 4.0


def test_derandomized_cost_not_above_fractional():
    inst = GapInstance(np.ones((2, 2)), [[0, 1], [1, 0]], [1, 1], 1.0)
    sched = derandomize_cost(inst, HALF, 1.0)
    assert sched.cost <= 1.0
    assert sched.cost == 0.0  # the diagonal is the cheaper outcome


@pytest.mark.parametrize("cap", [1, 2])
def test_three_floating_jobs_with_tight_cap(cap):
    # machine 0 holds three jobs at cap/3 each; machine 1 takes the rest
    v = cap / 3
    pairs = [(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2)]
    x0 = np.array([v, v, v, 1 - v, 1 - v, 1 - v])
    p = np.array([[3.0, 4.0, 5.0], [2.0, 2.0, 2.0]])
    frac_load = p[0] @ x0[:3]
    for s in range(200):
        walk = CapacitatedWalk(pairs, x0, p, np.array([frac_load, 6.0]), LE, np.array([cap, 3.0]))
        x = walk.run(random_chooser(philox(s)), constraint_budget(3, 2, 6))
        assert x[:3].sum() <= cap
        assert p[0] @ x[:3] < frac_load + 5.0


def test_marginals_on_fixed_instance():
    inst = GapInstance([[4, 2, 3, 5], [3, 4, 2, 2], [2, 3, 5, 4]], b=[2, 2, 1])
    T = min_feasible_T(inst)
    x = {e: v for e, v in solve_lp_cap(inst, T).values.items() if isinstance(e, tuple)}
    assert sum(0 < v < 1 for v in x.values()) >= 4
    keys = sorted(x)
    N = 10_000
    hits = np.zeros(len(keys))
    for t in range(N):
        lab = sched_cap_round(inst, x, T, philox(3, t)).labels(inst.jobs)
        hits += [lab[j] == i for i, j in keys]
    assert np.abs(hits / N - [x[k] for k in keys]).max() <= band(N)


def test_bad_x_star_shape():
    inst = GapInstance(np.ones((2, 2)))
    with pytest.raises(InvalidInputError):
        sched_cap_round(inst, np.ones((3, 3)), 1.0, philox(0))


@settings(max_examples=40)
@given(st.integers(0, 2**32), st.integers(1, 4), st.integers(1, 8))
def test_rounding_guarantees(seed, m, n):
    rng = philox(seed)
    inst = gap_instance(rng, m, n, budget_slack=20)
    try:
        T = min_feasible_T(inst)
    except InfeasibleInstanceError:
        return
    x = solve_lp_cap(inst, T).values
    frac = fractional_loads(inst, x, T)
    bump = load_increase_bound(inst, x, T)
    n_vars = sum(1 for e in x if isinstance(e, tuple))
    for sched in (sched_cap_round(inst, x, T, rng), derandomize_cost(inst, x, T)):
        counts = np.bincount(sched.labels(n), minlength=m)
        assert np.all(counts <= inst.b)
        assert len(sched.assign) == n
        # strict when some job was fractional, otherwise nothing moved
        assert np.all((sched.loads < frac + bump + 1e-9) | (bump == 0))
        assert np.all(sched.loads[bump == 0] <= frac[bump == 0] + 1e-9)
        assert sched.makespan < 2 * T + 1e-9
        assert sched.iterations <= constraint_budget(n, m, n_vars)
    assert derandomize_cost(inst, x, T).cost <= inst.cost_budget + 1e-6


def test_ratio_against_oracle_small():
    rng = philox(99)
    for _ in range(10):
        inst = gap_instance(rng, 2, 5, budget_slack=15)
        try:
            T = min_feasible_T(inst)
        except InfeasibleInstanceError:
            continue
        opt = exact_gap_cap(inst)
        assert T <= opt.makespan
        assert derandomize_cost(inst, solve_lp_cap(inst, T).values, T).makespan <= 2 * opt.makespan
