import math
import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dfgprint.graph import DataFlowGraph, SizeGuardError, graphs_isomorphic, validate
from dfgprint.simplify import (
    SimplifyParams,
    approx_simplify,
    auto_bandwidth,
    cluster_1d,
    exact_simplify,
    exact_visit_probability,
    merge_groups,
    monte_carlo_visits,
)
from oracles import random_dag, walk_probabilities
from test_graph import dags


def test_exact_probability_examples(diamond):
    edge = DataFlowGraph({1: "x", 2: "y"}, [(1, 2)])
    assert exact_visit_probability(edge) == {1: 1.0, 2: 0.5}
    assert exact_visit_probability(diamond) == {1: 1.0, 2: 0.375, 3: 0.375, 4: 0.25}
    assert exact_visit_probability(DataFlowGraph({9: "x"}, [])) == {9: 1.0}


@given(dags(max_n=8))
def test_exact_probability_matches_walk_enumeration(g):
    p = exact_visit_probability(g)
    oracle = walk_probabilities(g)
    for v in g.vertices:
        assert p[v] == pytest.approx(float(oracle[v]), abs=1e-12)
        assert 0 < p[v] <= 1


def test_walk_enumeration_oracle_on_diamond(diamond):
    assert walk_probabilities(diamond) == {1: 1, 2: Fraction(3, 8), 3: Fraction(3, 8), 4: Fraction(1, 4)}


def test_monte_carlo_examples(diamond):
    edge = DataFlowGraph({1: "x", 2: "y"}, [(1, 2)])
    n = 10000
    s = monte_carlo_visits(edge, n, seed=1)
    assert s.frequency[1] == 1.0
    assert abs(s.frequency[2] - 0.5) <= 3 * math.sqrt(0.25 / n)
    s = monte_carlo_visits(diamond, n, seed=1)
    assert s.frequency[1] == 1.0
    assert abs(s.frequency[2] - 0.375) <= 3 * math.sqrt(0.375 * 0.625 / n)
    assert s.walks_performed == n
    assert all(0 <= c <= n for c in s.visits.values())


@given(dags(max_n=10), st.integers(0, 2**32))
def test_source_mass_is_conserved(g, seed):
    p = exact_visit_probability(g)
    assert math.fsum(p[v] for v in g.sources()) == pytest.approx(1.0, abs=1e-12)
    s = monte_carlo_visits(g, 500, seed)
    assert sum(s.visits[v] for v in g.sources()) == 500


def test_monte_carlo_deterministic_and_backend_independent():
    from dfgprint import kernels

    g = random_dag(random.Random(4), 40, 0.15)
    runs = [monte_carlo_visits(g, 20000, 9, backend=b).visits for b in kernels.BACKENDS]
    assert all(r == runs[0] for r in runs)
    assert monte_carlo_visits(g, 20000, 9).visits == runs[0]
    assert monte_carlo_visits(g, 20000, 10).visits != runs[0]


def test_cluster_examples():
    assert cluster_1d([0.10, 0.101, 0.50], 0.01) == [0, 0, 1]
    assert cluster_1d([0.3, 0.3, 0.3], 0.01) == [0, 0, 0]
    assert cluster_1d([0.2, 0.3], 0.01) == [0, 1]
    assert cluster_1d([], 0.1) == []
    with pytest.raises(ValueError):
        cluster_1d([0.1], 0)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=40), st.floats(1e-4, 0.2))
def test_cluster_span_and_order(values, bw):
    c = cluster_1d(values, bw)
    assert c == cluster_1d(values, bw)
    groups = {}
    for v, k in zip(values, c):
        groups.setdefault(k, []).append(v)
    for vs in groups.values():
        assert max(vs) - min(vs) <= 2 * bw + 1e-12
    # ids increase with value
    lows = [min(groups[k]) for k in sorted(groups)]
    assert lows == sorted(lows)
    # equal values share a cluster
    for i, a in enumerate(values):
        for j, b in enumerate(values):
            if a == b:
                assert c[i] == c[j]


def test_auto_bandwidth():
    assert auto_bandwidth([1.0, 0.0], 100) == 1 / 100
    assert auto_bandwidth([0.5], 10000) == pytest.approx(3 * 0.5 / 100)


def test_params_validation():
    with pytest.raises(ValueError):
        SimplifyParams(bandwidth=0)
    with pytest.raises(ValueError):
        SimplifyParams(walks=0)
    assert SimplifyParams().walks_for(DataFlowGraph({i: "x" for i in range(500)}, [])) == 50000


def test_approx_examples(diamond):
    exact = SimplifyParams(use_exact_p=True)
    out = approx_simplify(diamond, exact)
    assert len(out) == 3 and out.num_edges == 2
    mixed = DataFlowGraph({1: "other", 2: "xor", 3: "and", 4: "and"}, diamond.edges)
    assert approx_simplify(mixed, exact) == mixed
    assert len(approx_simplify(diamond, SimplifyParams(seed=3))) == 3


def _parallel_cones(k):
    # k copies of the cone  x -> (a, s), a -> s  feeding one consumer 0
    labels, edges = {0: "other"}, []
    for i in range(k):
        x, a, s = 10 * i + 1, 10 * i + 2, 10 * i + 3
        labels.update({x: "xor", a: "and", s: "shr"})
        edges += [(0, x), (x, a), (x, s), (a, s)]
    return DataFlowGraph(labels, edges)


@pytest.mark.parametrize("k", [2, 3, 6])
def test_parallel_cones_collapse(k):
    g = _parallel_cones(k)
    out = approx_simplify(g, SimplifyParams(use_exact_p=True))
    assert graphs_isomorphic(out, _parallel_cones(1))
    assert graphs_isomorphic(exact_simplify(g), out)


def test_exact_simplify_examples(diamond, chain):
    out = exact_simplify(diamond)
    assert out == DataFlowGraph({1: "other", 2: "xor", 4: "and"}, [(1, 2), (2, 4)])
    assert exact_simplify(out) == out
    assert exact_simplify(chain) == chain
    twins = DataFlowGraph({1: "x", 2: "y", 3: "x", 4: "y"}, [(1, 2), (3, 4)])
    assert len(exact_simplify(twins)) == 2
    with pytest.raises(SizeGuardError):
        exact_simplify(DataFlowGraph({i: "x" for i in range(20)}, []), max_vertices=10)


def test_exact_strict_mode():
    # twin cones 2->4, 3->5, but 4 has an extra parent
    g = DataFlowGraph({1: "o", 2: "x", 3: "x", 4: "a", 5: "a", 6: "o"}, [(1, 2), (1, 3), (2, 4), (3, 5), (6, 4)])
    assert len(exact_simplify(g)) < len(g)
    strict = exact_simplify(g, strict=True)
    assert validate(strict) == []


@given(dags(max_n=10, labels=("x", "y")), st.booleans(), st.booleans())
def test_approx_output_is_smaller_dag(g, exact_p, fixpoint):
    out = approx_simplify(g, SimplifyParams(use_exact_p=exact_p, fixpoint=fixpoint, walks=2000))
    assert validate(out) == []
    assert len(out) <= len(g) and out.num_edges <= g.num_edges


def test_approx_deterministic():
    g = random_dag(random.Random(8), 60, 0.08, labels=("x",))
    a = approx_simplify(g, SimplifyParams(seed=5))
    b = approx_simplify(g, SimplifyParams(seed=5))
    assert a.canonical_text() == b.canonical_text()


def test_fixpoint_never_grows():
    g = random_dag(random.Random(2), 40, 0.1, labels=("x",))
    once = approx_simplify(g, SimplifyParams(use_exact_p=True))
    fix = approx_simplify(g, SimplifyParams(use_exact_p=True, fixpoint=True))
    assert len(fix) <= len(once)
    assert merge_groups(fix, SimplifyParams(use_exact_p=True)) == []


def test_merge_groups_depth_override(diamond):
    params = SimplifyParams(use_exact_p=True)
    assert merge_groups(diamond, params) == [[2, 3]]
    assert merge_groups(diamond, params, depths={1: 0, 2: 1, 3: 2, 4: 3}) == []


def test_frequencies_close_to_exact():
    g = random_dag(random.Random(5), 30, 0.2)
    p = exact_visit_probability(g)
    s = monte_carlo_visits(g, 40000, 1)
    err = np.array([abs(s.frequency[v] - p[v]) / max(math.sqrt(p[v] * (1 - p[v]) / 40000), 1e-12)
                    for v in g.vertices if p[v] < 1])
    assert (err <= 4).mean() >= 0.95
