import numpy as np
import pytest

from evanscompat import graph
from evanscompat.acceptance import random_dag


def test_evans_structure():
    g = graph.evans_dag()
    assert set(g.observables) == {"A", "B", "C"}
    assert set(g.parents("B")) == {"L", "M"}
    assert set(g.children("B")) == {"A", "C"}
    order = g.topological_order()
    assert order.index("B") < order.index("A") and order.index("B") < order.index("C")


def test_cycle_rejected():
    with pytest.raises(graph.CycleError):
        graph.CausalDag.build(["X", "Y"], [], [("X", "Y"), ("Y", "X")])


def test_latent_with_parent_rejected_when_exogenous():
    with pytest.raises(graph.GraphError):
        graph.CausalDag.build(["X"], ["L"], [("X", "L")], exogenous_latents=True)


def test_evans_separations():
    g = graph.evans_dag()
    assert not graph.d_separated(g, "A", "C")
    assert not graph.d_separated(g, "A", "C", ["B"])
    assert graph.e_separated(g, "A", "C", [], ["B"])
    assert graph.d_separated(g, "L", "M")
    assert not graph.d_separated(g, "L", "M", ["B"])


def test_split_graph_moves_outgoing_edges():
    g = graph.split_node(graph.evans_dag(), "B", suffix="#")
    assert set(g.children("B#")) == {"A", "C"}
    assert g.children("B") == []
    assert set(g.parents("B")) == {"L", "M"}


def test_overlapping_sets_rejected():
    with pytest.raises(graph.GraphError):
        graph.d_separated(graph.evans_dag(), "A", "A")


def test_json_round_trip():
    g = graph.bilocal_dag()
    assert graph.CausalDag.from_json(g.to_json()).to_json() == g.to_json()


def test_bayes_ball_matches_path_oracle_on_random_dags():
    rng = np.random.default_rng(1)
    checked = 0
    for _ in range(600):
        g = random_dag(rng)
        nodes = g.node_ids
        perm = list(rng.permutation(nodes))
        z = [v for v in perm[2:] if rng.random() < 0.4]
        assert graph.d_separated(g, perm[0], perm[1], z) == \
            graph.d_separated_by_paths(g, perm[0], perm[1], z)
        checked += 1
    assert checked >= 500


def test_e_separation_routes_agree_on_random_dags():
    rng = np.random.default_rng(2)
    for _ in range(500):
        g = random_dag(rng)
        perm = list(rng.permutation(g.node_ids))
        rest = perm[2:]
        z = [v for v in rest if rng.random() < 0.3]
        d = [v for v in rest if v not in z and g.kind(v) == "observable" and rng.random() < 0.5]
        # e_separated raises if its deletion and splitting routes disagree
        res = graph.e_separated(g, perm[0], perm[1], z, d)
        assert res == graph.d_separated_by_paths(g.remove_nodes(d), perm[0], perm[1], z)


def test_inflation_graph_order_two():
    inf = graph.inflate_evans_split(2)
    assert len(inf.b_copies()) == 4
