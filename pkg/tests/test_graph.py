import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from causalbma.errors import ContractViolation, InvalidInputError
from causalbma.graph import (Dag, ancestors, children, creates_cycle, d_separated, d_separated_sets,
                             descendants, enumerate_dags, is_acyclic, mutilate, parents,
                             skeleton_and_vstructures, topological_order)

CHAIN = Dag.from_edges(3, [(0, 1), (1, 2)])
COLLIDER = Dag.from_edges(3, [(0, 2), (1, 2)])


def test_is_acyclic_examples():
    assert is_acyclic([[0, 1], [0, 0]])
    assert not is_acyclic([[0, 1], [1, 0]])
    assert not is_acyclic([[0, 1, 0], [0, 0, 1], [1, 0, 0]])


def test_is_acyclic_rejects_bad_input():
    with pytest.raises(InvalidInputError):
        is_acyclic([[0, 1, 0], [0, 0, 1]])
    with pytest.raises(InvalidInputError):
        is_acyclic([[0, 2], [0, 0]])


def test_self_loop_is_cyclic():
    assert not is_acyclic([[1, 0], [0, 0]])
    with pytest.raises(InvalidInputError):
        Dag([[1, 0], [0, 0]])


def test_dag_rejects_cycle():
    with pytest.raises(InvalidInputError):
        Dag([[0, 1], [1, 0]])


def test_dag_is_immutable():
    g = Dag.from_edges(2, [(0, 1)])
    with pytest.raises(ValueError):
        g.adj[1, 0] = 1


def test_topological_order_examples():
    assert topological_order(CHAIN) == [0, 1, 2]
    assert topological_order(Dag.empty(3)) == [0, 1, 2]
    assert topological_order(COLLIDER) == [0, 1, 2]
    assert topological_order(Dag.from_edges(3, [(2, 0), (1, 0)])) == [1, 2, 0]


def test_topological_order_cyclic_is_contract_violation():
    bad = Dag(np.array([[0, 1], [1, 0]], dtype=np.uint8), _checked=True)
    with pytest.raises(ContractViolation):
        topological_order(bad)


def test_parents_examples():
    assert parents(CHAIN, 1) == {0}
    assert parents(CHAIN, 0) == frozenset()
    assert parents(COLLIDER, 2) == {0, 1}
    assert children(CHAIN, 0) == {1}
    with pytest.raises(InvalidInputError):
        parents(CHAIN, 3)


def test_d_separation_examples():
    assert d_separated(CHAIN, 0, 2, {1})
    assert not d_separated(CHAIN, 0, 2, set())
    assert d_separated(COLLIDER, 0, 1, set())
    assert not d_separated(COLLIDER, 0, 1, {2})


def test_collider_descendant_opens_path():
    g = Dag.from_edges(4, [(0, 2), (1, 2), (2, 3)])
    assert d_separated(g, 0, 1, set())
    assert not d_separated(g, 0, 1, {3})


def test_d_separation_argument_errors():
    with pytest.raises(InvalidInputError):
        d_separated(CHAIN, 0, 0, set())
    with pytest.raises(InvalidInputError):
        d_separated(CHAIN, 0, 2, {0})
    with pytest.raises(InvalidInputError):
        d_separated(CHAIN, 0, 5, set())
    with pytest.raises(InvalidInputError):
        d_separated_sets(CHAIN, {0}, {0, 2})


@pytest.mark.parametrize("d,count", [(1, 1), (2, 3), (3, 25), (4, 543)])
def test_enumerate_dags_counts(d, count):
    dags = enumerate_dags(d)
    assert len(dags) == count
    assert len({g.key for g in dags}) == count
    for g in dags:
        assert is_acyclic(g.adj)
        order = topological_order(g)
        pos = {n: k for k, n in enumerate(order)}
        assert all(pos[i] < pos[j] for i, j in g.edges())


def test_enumerate_dags_refuses_large_d():
    with pytest.raises(InvalidInputError):
        enumerate_dags(6)


def _brute_dsep(g, x, y, z):
    """Enumerate every simple path in the skeleton and test it for activity."""
    a = g.adj
    d = g.d
    desc = {k: descendants(g, [k]) for k in range(d)}

    def active(path):
        for k in range(1, len(path) - 1):
            u, m, v = path[k - 1], path[k], path[k + 1]
            collider = a[u, m] and a[v, m]
            if collider:
                if not (desc[m] & z):
                    return False
            elif m in z:
                return False
        return True

    def walk(path):
        u = path[-1]
        if u == y:
            yield path
            return
        for v in range(d):
            if v not in path and (a[u, v] or a[v, u]):
                yield from walk(path + [v])

    return not any(active(p) for p in walk([x]))


def test_d_separation_matches_path_enumeration_on_all_d4_dags():
    for g in enumerate_dags(4):
        for x, y in itertools.combinations(range(4), 2):
            rest = [k for k in range(4) if k not in (x, y)]
            for r in range(len(rest) + 1):
                for z in itertools.combinations(rest, r):
                    z = set(z)
                    got = d_separated(g, x, y, z)
                    assert got == _brute_dsep(g, x, y, z), (g, x, y, z)
                    assert got == d_separated(g, y, x, z)


def test_local_markov_property_on_d4():
    # non-adjacent x, y are separated by pa(x) | pa(y) when neither is an ancestor of the other
    for g in enumerate_dags(4):
        for x, y in itertools.combinations(range(4), 2):
            if g.adj[x, y] or g.adj[y, x]:
                continue
            if x in ancestors(g, [y]) or y in ancestors(g, [x]):
                continue
            z = (parents(g, x) | parents(g, y)) - {x, y}
            assert d_separated(g, x, y, z)


def _random_dag(draw_bits, d):
    a = np.zeros((d, d), dtype=np.uint8)
    k = 0
    for i in range(d):
        for j in range(i + 1, d):
            a[i, j] = draw_bits[k]
            k += 1
    perm = np.arange(d)[::-1]
    return Dag(a[np.ix_(perm, perm)])


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 6).flatmap(lambda d: st.tuples(st.just(d), st.lists(st.integers(0, 1), min_size=d * (d - 1) // 2,
                                                                            max_size=d * (d - 1) // 2))))
def test_single_toggle_changes_one_parent_set(arg):
    d, bits = arg
    g = _random_dag(bits, d)
    for i in range(d):
        for j in range(d):
            if i == j:
                continue
            adj = g.toggled(i, j)
            if not is_acyclic(adj):
                continue
            h = Dag(adj)
            changed = [k for k in range(d) if parents(g, k) != parents(h, k)]
            assert changed == [j]


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 6).flatmap(lambda d: st.tuples(st.just(d), st.lists(st.integers(0, 1), min_size=d * (d - 1) // 2,
                                                                            max_size=d * (d - 1) // 2))))
def test_creates_cycle_agrees_with_full_check(arg):
    d, bits = arg
    g = _random_dag(bits, d)
    for i in range(d):
        for j in range(d):
            if i != j and not g.adj[i, j]:
                adj = g.adj.copy()
                adj[i, j] = 1
                assert creates_cycle(g.adj, i, j) == (not is_acyclic(adj))


def test_ancestors_descendants_include_start():
    assert descendants(CHAIN, [1]) == {1, 2}
    assert ancestors(CHAIN, [1]) == {0, 1}


def test_mutilate_removes_incoming_only():
    g = mutilate(CHAIN, [1])
    assert g.edges() == [(1, 2)]
    assert CHAIN.edges() == [(0, 1), (1, 2)]


def test_serialization_round_trips():
    g = Dag.from_edges(4, [(0, 2), (1, 2), (2, 3)])
    assert Dag.from_json(json.loads(json.dumps(g.to_json()))) == g
    text = g.to_edge_list(["a", "b", "c", "d"])
    assert text == "a -> c\nb -> c\nc -> d\n"
    assert Dag.from_edge_list(text, 4, ["a", "b", "c", "d"]) == g
    assert Dag.from_edge_list("# comment\n0 -> 1\n", 2) == Dag.from_edges(2, [(0, 1)])
    with pytest.raises(InvalidInputError):
        Dag.from_edge_list("0 - 1", 2)


def test_markov_equivalence_signature():
    fork = Dag.from_edges(3, [(1, 0), (1, 2)])
    assert skeleton_and_vstructures(CHAIN) == skeleton_and_vstructures(fork)
    assert skeleton_and_vstructures(CHAIN) != skeleton_and_vstructures(COLLIDER)
