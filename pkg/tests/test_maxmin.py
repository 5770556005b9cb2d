import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polywalk.exceptions import BudgetExceededError, InvalidInputError
from polywalk.instances import MaxMinInstance
from polywalk.maxmin import (
    ConfigLp,
    FlowMatchGraph,
    claim_bundles,
    contention_step,
    default_parameters,
    enumerate_valid_configs,
    fractional_utilities,
    maxmin_cap_round,
    maxmin_solve,
    resolve_contention,
    sample_matching,
    search_threshold,
    solve_capacitated_lp,
    solve_config_lp,
)
from polywalk.oracle import exact_maxmin
from generators import maxmin_instance, philox


def brute_force_configs(u, T, lam):
    u = np.asarray(u, float)
    big = [(j,) for j in range(u.size) if u[j] >= T / lam and u[j] > 0]
    small = [j for j in range(u.size) if 0 < u[j] < T / lam]
    out = []
    for r in range(1, len(small) + 1):
        for S in itertools.combinations(small, r):
            tot = u[list(S)].sum()
            if tot >= T and all(tot - u[j] < T for j in S):
                out.append(S)
    return sorted(big), sorted(out)


def test_two_big_singletons():
    assert enumerate_valid_configs([6, 6], 6, 2) == [(0,), (1,)]


def test_three_halves_give_pairs():
    # a good worth T/2 is big once lam >= 2 and small below that
    assert enumerate_valid_configs([5, 5, 5], 10, 2.5) == [(0,), (1,), (2,)]
    configs = enumerate_valid_configs([5, 5, 5], 10, 1.5)
    assert configs == brute_force_configs([5, 5, 5], 10, 1.5)[1] == [(0, 1), (0, 2), (1, 2)]


def test_zero_utilities_have_no_configs():
    assert enumerate_valid_configs([0, 0, 0], 1, 2) == []
    assert solve_config_lp(MaxMinInstance([[0, 0]]), 1, 2) is None


@settings(max_examples=40)
@given(st.lists(st.integers(0, 9), min_size=1, max_size=9), st.integers(1, 30), st.sampled_from([2.0, 3.0, 4.5]))
def test_enumeration_matches_brute_force(u, T, lam):
    big, small = brute_force_configs(u, T, lam)
    assert enumerate_valid_configs(u, T, lam) == big + small


def test_enumeration_budget():
    with pytest.raises(BudgetExceededError, match="fewer goods or a larger threshold"):
        enumerate_valid_configs([1] * 30, 15, 1.01, budget=1000)


def test_single_person_single_good():
    lp = solve_config_lp(MaxMinInstance([[5]]), 5, 2)
    assert lp.x == {(0, (0,)): pytest.approx(1.0)}


def test_shared_big_good_infeasible():
    inst = MaxMinInstance([[5], [5]])
    assert solve_config_lp(inst, 1, 2) is None


def test_symmetric_small_goods_split():
    inst = MaxMinInstance([[3, 3, 3, 3], [3, 3, 3, 3]])
    lp = solve_config_lp(inst, 6, 4)
    assert lp is not None
    _check_config_lp(inst, lp)
    # the symmetric point (every 2-subset at 1/6 for both persons) is feasible too
    share = {S: 1 / 6 for S in itertools.combinations(range(4), 2)}
    for j in range(4):
        assert 2 * sum(v for S, v in share.items() if j in S) <= 1 + 1e-12


def _check_config_lp(inst, lp, tol=1e-7):
    k, m = inst.u.shape
    for i in range(k):
        assert abs(sum(v for (ii, _), v in lp.x.items() if ii == i) - 1) <= tol
    for j in range(m):
        assert sum(v for (_, C), v in lp.x.items() if j in C) <= 1 + tol
    for (i, C), v in lp.x.items():
        u = inst.u[i, list(C)]
        if len(C) == 1 and u[0] >= lp.T / lp.lam:
            continue
        assert np.all(u < lp.T / lp.lam) and u.sum() >= lp.T


@settings(max_examples=15)
@given(st.integers(0, 2**32))
def test_threshold_search_feasible_and_bounded(seed):
    inst = maxmin_instance(philox(seed), 3, 6)
    lam, _ = default_parameters(3)
    lp = search_threshold(inst, lam, 0.0)
    if lp.T > 0:
        _check_config_lp(inst, lp)
    # the configuration LP relaxes the integral problem
    assert lp.T >= exact_maxmin(inst)


def test_default_parameters():
    assert default_parameters(1) == (2.0, 0.5)
    lam, eps1 = default_parameters(1000)
    assert 0 < eps1 < 1 and lam > 2


def graph_from(w, big):
    w = np.asarray(w, float)
    big = np.asarray(big, bool)
    wm = np.where(big, w, 0)
    return FlowMatchGraph(w, big, wm.sum(axis=1), wm.sum(axis=0))


def test_full_matching_edge_always_matched():
    g = graph_from([[1.0]], [[True]])
    assert all(sample_matching(g, philox(s)) == {0: 0} for s in range(20))


def test_partial_matching_edge_frequency():
    g = graph_from([[0.3]], [[True]])
    N = 4000
    hits = sum(sample_matching(g, philox(1, t)) == {0: 0} for t in range(N))
    assert abs(hits / N - 0.3) <= 4 * np.sqrt(0.25 / N)


def test_two_persons_one_big_good():
    g = graph_from([[0.5], [0.5]], [[True], [True]])
    winners = [sample_matching(g, philox(2, t)) for t in range(400)]
    assert all(len(w) == 1 for w in winners)
    assert 150 < sum(0 in w for w in winners) < 250


def test_claim_single_config():
    lp = ConfigLp(4, 2, [[(0, 1)]], {(0, (0, 1)): 1.0})
    g = graph_from([[1.0, 1.0]], [[False, False]])
    assert claim_bundles(g, lp, [0], 0.5, philox(0)) == {0: frozenset({0, 1})}


def test_claim_all_pruned():
    lp = ConfigLp(4, 2, [[(0, 1)]], {(0, (0, 1)): 1.0})
    g = graph_from([[1.0, 1.0]], [[False, False]])
    g.m_good[:] = 0.9  # both goods carry heavy matching mass elsewhere
    assert claim_bundles(g, lp, [0], 0.5, philox(0)) == {0: frozenset()}


def test_claim_normalisation():
    lp = ConfigLp(4, 2, [[(0,), (1, 2), (3, 4)]], {(0, (0,)): 0.5, (0, (1, 2)): 0.3, (0, (3, 4)): 0.2})
    w = np.array([[0.5, 0.3, 0.3, 0.2, 0.2]])
    g = graph_from(w, [[True, False, False, False, False]])
    N = 4000
    first = sum(claim_bundles(g, lp, [0], 0.5, philox(4, t))[0] == {1, 2} for t in range(N))
    assert abs(first / N - 0.6) <= 4 * np.sqrt(0.25 / N)


def test_contention_single_edge():
    N = 4000
    got = [resolve_contention({(0, 0): 0.7}, np.array([[10]]), philox(5, t)) for t in range(N)]
    assert abs(sum(a == {0: 0} for a in got) / N - 0.7) <= 4 * np.sqrt(0.25 / N)


def test_contention_two_persons_one_good():
    u = np.array([[3], [3]])
    got = [resolve_contention({(0, 0): 0.5, (1, 0): 0.5}, u, philox(6, t)) for t in range(400)]
    assert all(len(a) == 1 for a in got)
    assert 150 < sum(a[0] == 0 for a in got) < 250


def test_contention_cycle_sign_rule():
    # person 0 values good 1 four times good 0; the ratio product is 4 > 1
    u = np.array([[1, 4], [1, 1]])
    vals = {(0, 0): 0.5, (0, 1): 0.5, (1, 0): 0.5, (1, 1): 0.5}
    outs = {tuple(sorted(resolve_contention(vals, u, philox(s)).items())) for s in range(20)}
    assert outs == {((0, 1), (1, 0))}  # person 0 keeps good 1 every time
    step = contention_step(vals, u, philox(0))
    assert fractional_utilities(step, u)[0] == 4 > fractional_utilities(vals, u)[0]
    assert fractional_utilities(step, u)[1] == fractional_utilities(vals, u)[1]


def test_contention_rejects_overfull_goods():
    with pytest.raises(InvalidInputError):
        resolve_contention({(0, 0): 0.7, (1, 0): 0.7}, np.array([[1], [1]]), philox(0))


def test_zero_utility_edges_ignored():
    got = resolve_contention({(0, 0): 0.5, (1, 0): 0.5}, np.array([[0], [2]]), philox(0))
    assert got in ({}, {0: 1})


@st.composite
def contention_cases(draw):
    k, m = draw(st.integers(1, 4)), draw(st.integers(1, 4))
    u = np.array(draw(st.lists(st.lists(st.integers(0, 6), min_size=m, max_size=m), min_size=k, max_size=k)))
    vals = {}
    for j in range(m):
        room = 1.0
        for i in range(k):
            if draw(st.booleans()):
                v = draw(st.sampled_from([0.1, 0.2, 0.3, 0.5]))
                if v <= room:
                    vals[(i, j)] = v
                    room -= v
    return u, vals, draw(st.integers(0, 2**32))


@given(contention_cases())
def test_contention_step_keeps_interior_utilities(case):
    u, vals, seed = case
    live = {e: v for e, v in vals.items() if u[e] > 0}
    if not live:
        return
    before = fractional_utilities(live, u)
    after = fractional_utilities(contention_step(live, u, philox(seed)), u)
    changed = np.flatnonzero(np.abs(after - before) > 1e-9)
    assert len(changed) <= 2  # only walk endpoints move
    alloc = resolve_contention(vals, u, philox(seed))
    assert all(u[i, j] > 0 for j, i in alloc.items())


def test_single_person_gets_everything():
    alloc = maxmin_solve(MaxMinInstance([[3, 3, 4]]))
    assert alloc.min_utility == 10 and alloc.ratio == 1.0


def test_two_persons_symmetric_big_goods():
    inst = MaxMinInstance([[10, 10], [10, 10]])
    for s in range(20):
        alloc = maxmin_solve(inst, rng=philox(s))
        assert len(alloc.matched) == 2
        assert np.all(alloc.utilities >= alloc.T / alloc.lam)


def test_random_three_by_twelve_matched_persons():
    rng = philox(77)
    inst = maxmin_instance(rng, 3, 12, hi=20)
    for s in range(10):
        alloc = maxmin_solve(inst, rng=philox(s))
        assert alloc.owner.shape == (12,) and np.all((alloc.owner >= -1) & (alloc.owner < 3))
        recount = np.zeros(3)
        for j, i in enumerate(alloc.owner):
            if i >= 0:
                recount[i] += inst.u[i, j]
        assert np.array_equal(recount, alloc.utilities)
        for i in alloc.matched:
            assert alloc.utilities[i] >= alloc.T / alloc.lam


def test_bad_parameters():
    with pytest.raises(InvalidInputError):
        maxmin_solve(MaxMinInstance([[1]]), lam=1.0)


def test_cap_round_integral_unchanged():
    inst = MaxMinInstance([[3, 0], [0, 4]], [1, 1])
    alloc = maxmin_cap_round(inst, np.eye(2), 3)
    assert alloc.owner.tolist() == [0, 1]


def test_cap_round_single_person_two_halves():
    inst = MaxMinInstance([[5, 5]], [1])
    for s in range(20):
        alloc = maxmin_cap_round(inst, np.array([[0.5, 0.5]]), 5.0, philox(s))
        assert alloc.counts(1)[0] == 1
        assert alloc.utilities[0] == 5 > 5.0 - 5


def test_cap_round_keeps_one_of_two_heavy_halves():
    # two fractional goods summing above one: losing both would cost more than max u
    inst = MaxMinInstance([[3, 7, 5, 3], [5, 8, 4, 7], [2, 7, 4, 6]], [2, 2, 2])
    X = np.array([[0, 0.4, 1, 0], [1, 0, 0, 0.4], [0, 0.6, 0, 0.6]])
    for s in range(50):
        alloc = maxmin_cap_round(inst, X, 7.8, philox(s))
        assert np.all(alloc.counts(3) <= inst.caps)
        assert np.all(alloc.utilities > 7.8 - inst.u.max(axis=1) - 1e-6)


def test_cap_round_slack_caps():
    rng = philox(8)
    for s in range(10):
        inst = maxmin_instance(rng, 3, 6)
        inst.caps = np.full(3, 6)
        T, X = solve_capacitated_lp(inst)
        alloc = maxmin_cap_round(inst, X, T, philox(s))
        assert np.all(alloc.utilities > T - inst.u.max(axis=1) - 1e-6)


def test_capacitated_lp_bounds_oracle():
    rng = philox(9)
    for _ in range(10):
        inst = maxmin_instance(rng, 2, 5, caps=True)
        T, X = solve_capacitated_lp(inst)
        assert T >= exact_maxmin(inst) - 1e-7
        assert np.all(X.sum(axis=0) <= 1 + 1e-7)
        assert np.all(X.sum(axis=1) <= inst.caps + 1e-7)
