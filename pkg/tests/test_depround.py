import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from polywalk.depround import BipartiteFractional, find_cycle_or_path, round_all, round_step, step_amounts
from polywalk.exceptions import InvalidInputError, NothingToRoundError
from generators import band, philox


def graph(edges, left=None, right=None):
    left = left or sorted({u for u, _ in edges})
    right = right or sorted({v for _, v in edges})
    return BipartiteFractional(left, right, dict(edges))


def test_single_edge_goes_to_zero_or_one():
    g = graph({(0, 0): 0.5})
    outcomes = {round_step(g, philox(s)).edges[(0, 0)] for s in range(40)}
    assert outcomes == {0.0, 1.0}


def test_four_cycle_gives_perfect_matchings():
    g = graph({(0, 0): 0.5, (0, 1): 0.5, (1, 0): 0.5, (1, 1): 0.5})
    seen = set()
    for s in range(200):
        out = round_step(g, philox(s)).edges
        assert out[(0, 0)] == out[(1, 1)] and out[(0, 1)] == out[(1, 0)]
        assert out[(0, 0)] + out[(0, 1)] == 1
        seen.add(out[(0, 0)])
    assert seen == {0.0, 1.0}


def test_step_amounts_four_cycle():
    assert step_amounts([0.5, 0.5], [0.5, 0.5]) == (0.5, 0.5)
    # alpha raises the first matching until an edge hits a bound
    assert step_amounts([0.3], [0.7]) == pytest.approx((0.7, 0.3))


def test_star_center_degree_one():
    g = graph({("c", 0): 0.3, ("c", 1): 0.7})
    for s in range(100):
        out = round_all(g, philox(s))
        assert sum(out.edges.values()) == 1


def test_binary_input_unchanged():
    g = graph({(0, 0): 1.0, (0, 1): 0.0, (1, 1): 1.0})
    assert round_all(g, philox(0)).edges == g.edges


def test_path_through_right_vertex():
    g = graph({(0, "v"): 0.5, (1, "v"): 0.5})
    for s in range(50):
        assert sum(round_all(g, philox(s)).edges.values()) == 1


def test_complete_two_by_two():
    g = graph({(a, b): 0.5 for a in range(2) for b in range(2)})
    for s in range(50):
        out = round_all(g, philox(s))
        for v in range(2):
            assert out.degree(v, "left") == 1 and out.degree(v, "right") == 1


def test_errors():
    with pytest.raises(NothingToRoundError):
        round_step(graph({(0, 0): 1.0}), philox(0))
    with pytest.raises(InvalidInputError):
        graph({(0, 0): 1.5})
    with pytest.raises(InvalidInputError):
        BipartiteFractional([0], [0], {(0, 9): 0.5})


def test_find_cycle_or_path():
    adj = {"a": ["b"], "b": ["a", "c"], "c": ["b"]}
    nodes, cyc = find_cycle_or_path(adj, "b")
    assert not cyc and sorted(nodes) == ["a", "b", "c"]
    adj = {1: [2, 4], 2: [1, 3], 3: [2, 4], 4: [3, 1]}
    nodes, cyc = find_cycle_or_path(adj, 1)
    assert cyc and nodes[0] == nodes[-1] and len(nodes) == 5


@st.composite
def fractional_graphs(draw):
    nl, nr = draw(st.integers(1, 4)), draw(st.integers(1, 4))
    edges = {}
    for u in range(nl):
        for v in range(nr):
            if draw(st.booleans()):
                edges[(u, v)] = draw(st.sampled_from([0.0, 0.1, 0.25, 0.5, 0.6, 0.75, 1.0]))
    return BipartiteFractional(range(nl), range(nr), edges)


@given(fractional_graphs(), st.integers(0, 2**32))
def test_degree_floor_ceiling(g, seed):
    out = round_all(g, philox(seed))
    assert out.is_integral(0)
    for side, verts in (("left", g.left), ("right", g.right)):
        for v in verts:
            frac, got = g.degree(v, side), out.degree(v, side)
            assert math.floor(frac + 1e-9) <= got <= math.ceil(frac - 1e-9)


def test_marginals_and_negative_correlation():
    edges = {(0, 0): 0.3, (0, 1): 0.4, (1, 1): 0.5, (1, 2): 0.2, (2, 0): 0.6, (2, 2): 0.7, (3, 1): 0.1}
    g = BipartiteFractional(range(4), range(3), edges)
    N = 10_000
    keys = sorted(edges)
    hits = np.zeros(len(keys))
    sat = np.zeros((N, 3), bool)
    for t in range(N):
        out = round_all(g, philox(5, t))
        hits += [out.edges[k] for k in keys]
        for v in range(3):
            sat[t, v] = out.degree(v, "right") >= 1
    assert np.abs(hits / N - [edges[k] for k in keys]).max() <= band(N)
    # saturation of right vertices is negatively correlated
    p = sat.mean(axis=0)
    for S in ([0, 1], [0, 2], [1, 2], [0, 1, 2]):
        joint = sat[:, S].all(axis=1).mean()
        slack = 3 * math.sqrt(0.25 / N)
        assert joint <= np.prod(p[S]) + slack
