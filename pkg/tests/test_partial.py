import numpy as np
import pytest
from hypothesis import given, strategies as st

from mlconstructive.partial import (InvariantViolation, PartialSolution, canon,
                                    insertion_feasible)


def path_abc():
    return PartialSolution.from_edges(4, [(0, 1), (1, 2)])


def test_empty_partial_accepts_any_edge():
    ps = PartialSolution(5)
    assert all(insertion_feasible(ps, (u, v)) for u in range(5) for v in range(u + 1, 5))


def test_cycle_and_degree_rejections():
    ps = path_abc()
    assert not insertion_feasible(ps, (0, 2))    # closes a cycle
    assert not insertion_feasible(ps, (1, 3))    # degree of 1 already 2
    assert insertion_feasible(ps, (2, 3))


def test_self_loop_is_an_argument_error():
    with pytest.raises(ValueError):
        PartialSolution(3).feasible(1, 1)


def test_insert_checks_feasibility():
    ps = path_abc()
    with pytest.raises(InvariantViolation):
        ps.insert(0, 2)


def test_fragments_and_endpoints():
    ps = PartialSolution.from_edges(6, [(0, 1), (1, 2), (4, 5)])
    frags = sorted(sorted(f) for f in ps.fragments())
    assert frags == [[0, 1, 2], [3], [4, 5]]
    assert ps.endpoints().tolist() == [0, 2, 3, 4, 5]
    assert ps.fixed_edges == {(0, 1), (1, 2), (4, 5)}
    ps.validate()


def test_validate_detects_cycle():
    ps = PartialSolution.from_edges(3, [(0, 1), (1, 2)])
    ps.insert(0, 2, check=False)
    with pytest.raises(InvariantViolation):
        ps.validate()


def test_copy_is_independent():
    ps = path_abc()
    other = ps.copy()
    other.insert(2, 3)
    assert ps.n_edges == 2 and other.n_edges == 3
    assert not ps.has_edge(2, 3)


def reference_feasible(edges, n, u, v):
    """Graph-search oracle: degrees below 2 and no existing u-v path."""
    adj = {i: set() for i in range(n)}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    if len(adj[u]) >= 2 or len(adj[v]) >= 2:
        return False
    seen, stack = {u}, [u]
    while stack:
        x = stack.pop()
        for y in adj[x]:
            if y not in seen:
                seen.add(y)
                stack.append(y)
    return v not in seen


@given(st.integers(3, 30), st.lists(st.tuples(st.integers(0, 29), st.integers(0, 29)),
                                    max_size=80))
def test_greedy_insertion_matches_graph_oracle(n, proposals):
    ps = PartialSolution(n)
    edges = []
    for u, v in proposals:
        u, v = u % n, v % n
        if u == v:
            continue
        expected = reference_feasible(edges, n, u, v)
        assert ps.feasible(u, v) == expected
        if expected:
            ps.insert(u, v, fixed=True)
            edges.append(canon(u, v))
        assert np.all(ps.degree <= 2)
    ps.validate()
    assert ps.edges() == set(edges) == ps.fixed_edges
    assert sum(len(f) - 1 for f in ps.fragments()) == len(edges)
