import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from disassembly_planner.ccc import (
    _build_one,
    build_graph,
    collision_free,
    constraint_free,
    distance_layers,
    initialize_population,
    random_population,
    write_graph,
)
from disassembly_planner.exceptions import InitializationStalled
from disassembly_planner.model import load_model
from disassembly_planner.sequence import check_feasible, check_stable

from helpers import FIG3, build, chain_model, part


def test_fig3_graph(fig3):
    g = build_graph(fig3)
    assert g.nodes == frozenset(range(1, 8))
    assert g.base == 6
    assert {tuple(sorted(e)) for e in g.contact} == {(5, 6), (6, 7)}
    assert len(g.connection) == 8
    assert g.constraint == frozenset({(5, 1), (5, 2), (5, 7)})


def test_graph_without_constraints():
    m = build([part(1, "base"), part(2, "screw", (0, 0, 5))], connection=[(1, 2)])
    g = build_graph(m)
    assert len(g.nodes) == 2 and len(g.connection) == 1 and not g.constraint
    assert constraint_free(g) == {2}


def test_fig3_layers(fig3):
    assert distance_layers(build_graph(fig3)) == [frozenset({1, 2, 3, 4, 5, 7})]


def test_chain_layers():
    assert distance_layers(build_graph(chain_model())) == [{4}, {3}, {2}]


def test_unreachable_first():
    m = build([part(1, "base"), part(2, com=(0, 0, 5)), part(3, com=(9, 9, 9))], contact=[(1, 2)])
    assert distance_layers(build_graph(m)) == [{3}, {2}]
    isolated = build([part(1, "base"), part(2, com=(0, 0, 5))])
    assert distance_layers(build_graph(isolated)) == [{2}]


def test_fig3_constraint_free(fig3):
    g = build_graph(fig3)
    assert constraint_free(g) == {3, 4, 5}
    assert constraint_free(g.without(5)) == {1, 2, 3, 4, 7}


def test_collision_free_single_blocker():
    parts = [part(1, "base"), part(2, com=(0, 0, 5), dirs=("+Z", "-X")), part(3, com=(0, 0, 9))]
    m = build(parts, contact=[(1, 2), (2, 3)], interference=[(2, 3, "+Z"), (2, 3, "-X")])
    g = build_graph(m)
    assert collision_free({2, 3}, g, m) == {3}
    assert collision_free({2}, g.without(3), m) == {2}


def test_fig3_plate_covers_screws(fig3):
    g = build_graph(fig3)
    assert 1 not in collision_free({1, 2, 3}, g, fig3)
    assert 1 in collision_free({1}, g.without(5), fig3)


def _precedes(order, first, then):
    removal = list(reversed(order))
    return all(removal.index(a) < removal.index(b) for a in first for b in then)


@pytest.mark.parametrize("seed", range(10))
def test_fig3_initialization(fig3, seed):
    (order,) = initialize_population(fig3, 1, seed)
    assert order[-1] in (3, 4)
    assert _precedes(order, {3, 4}, {5})
    assert _precedes(order, {5}, {1, 2})
    assert _precedes(order, {1, 2}, {7})


def test_single_screw_model():
    m = build([part(1, "base"), part(2, "screw", (0, 0, 5))], connection=[(1, 2)])
    for seed in range(5):
        assert initialize_population(m, 3, seed) == [[2], [2], [2]]


def test_stalls_when_blocked_forever():
    parts = [part(1, "base"), part(2, com=(0, 0, 5))]
    m = build(parts, contact=[(1, 2)], interference=[(2, 1, "+Z")])
    with pytest.raises(InitializationStalled):
        initialize_population(m, 1, 0)


def test_fifty_genes_all_admissible(fig3):
    pop = initialize_population(fig3, 50, 3)
    assert len(pop) == 50
    assert all(check_feasible(x, fig3) and check_stable(x, fig3) for x in pop)


def test_deterministic_and_prefix_stable(fig3):
    assert initialize_population(fig3, 8, 5) == initialize_population(fig3, 8, 5)
    assert initialize_population(fig3, 8, 5)[:3] == initialize_population(fig3, 3, 5)
    assert random_population(fig3, 4, 1) == random_population(fig3, 4, 1)


def test_corpus_precedence_properties(corpus):
    for _, model in corpus[:10]:
        rel = model.relations
        for order in initialize_population(model, 5, 0):
            assert sorted(order) == sorted(model.removable_ids)
            step = {p: i for i, p in enumerate(reversed(order))}
            for u, v in zip(*np.nonzero(rel.constraint)):
                assert step[u + 1] < step[v + 1]
            for u, v in zip(*np.nonzero(rel.connection)):
                a, b = int(u) + 1, int(v) + 1
                if model.part(a).is_fastener and b != model.base_id:
                    assert step[a] < step[b]


def _set_based_build(model, rng):
    """The picking rule written against the set-based graph helpers."""
    g = build_graph(model)
    order = []
    while g.nodes - {g.base}:
        pick = None
        free = constraint_free(g)
        for layer in distance_layers(g):
            candidates = sorted(collision_free(layer, g, model) & free)
            if not candidates:
                continue
            pool = [u for u in candidates if u in g.fasteners]
            if not pool:
                pool = [
                    u for u in candidates
                    if model.part(u).label.kind == "regular"
                    and not any(u in e for e in g.connection)
                ]
            if pool:
                pick = int(rng.choice(pool))
                if pick not in g.fasteners:
                    attached = sorted(g.attached_fasteners(pick))
                    if attached:
                        pick = int(rng.choice(attached))
                break
        if pick is None:
            return None
        order.insert(0, pick)
        g = g.without(pick)
    return order


def test_bitmask_builder_matches_set_helpers(fig3, corpus):
    for model in [fig3] + [m for _, m in corpus[:8]]:
        for seed in range(5):
            fast = _build_one(model, np.random.default_rng(seed))
            slow = _set_based_build(model, np.random.default_rng(seed))
            assert fast == slow


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_any_seed_gives_admissible_fig3_orders(seed):
    model = load_model(FIG3)
    for order in initialize_population(model, 3, seed):
        assert check_feasible(order, model) and check_stable(order, model)


def test_graphml_dump(tmp_path, fig3):
    path = tmp_path / "g.graphml"
    write_graph(build_graph(fig3), path, fig3)
    g = nx.read_graphml(path)
    assert g.number_of_nodes() == 7
    assert g.number_of_edges() == 2 + 8 + 3
    assert {d["tag"] for *_, d in g.edges(data=True)} == {"contact", "connection", "constraint"}
    assert g.nodes["6"]["kind"] == "base"
