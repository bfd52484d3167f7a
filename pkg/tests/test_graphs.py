"""Observability graph construction and sampling."""

import math

import numpy as np
import pytest

from polyq.graphs import (
    DirectedGraph,
    complete_graph,
    empty_graph,
    erdos_renyi,
    from_edge_list,
    observes,
    out_neighbors,
)


def test_empty_and_complete():
    g0 = empty_graph(4)
    assert g0.num_edges == 0
    g1 = complete_graph(4)
    assert g1.num_edges == 12
    adj = g1.adjacency()
    assert adj.sum() == 12
    assert np.array_equal(np.diag(adj), np.zeros(4, dtype=adj.dtype))


def test_erdos_renyi_extremes():
    rng = np.random.default_rng(0)
    assert erdos_renyi(5, 0.0, rng).num_edges == 0
    assert erdos_renyi(5, 1.0, rng).num_edges == 20
    with pytest.raises(ValueError):
        erdos_renyi(5, -0.1, rng)
    with pytest.raises(ValueError):
        erdos_renyi(5, 1.5, rng)


def test_erdos_renyi_deterministic():
    g1 = erdos_renyi(6, 0.4, np.random.default_rng(42))
    g2 = erdos_renyi(6, 0.4, np.random.default_rng(42))
    assert g1 == g2


def test_erdos_renyi_symmetric():
    g = erdos_renyi(8, 0.5, np.random.default_rng(1), symmetric=True)
    adj = g.adjacency()
    assert np.array_equal(adj, adj.T)


def test_erdos_renyi_edge_count_in_binomial_band():
    # 200 draws of a 6-vertex graph at p = 0.3: 6000 ordered-pair coin flips
    rng = np.random.default_rng(7)
    total = sum(erdos_renyi(6, 0.3, rng).num_edges for _ in range(200))
    trials = 200 * 30
    mean = trials * 0.3
    sigma = math.sqrt(trials * 0.3 * 0.7)
    assert abs(total - mean) < 4 * sigma


def test_directed_graph_validation():
    with pytest.raises(ValueError):
        DirectedGraph(3, ((1,), (0,), (0, 2)))  # self-loop at vertex 2
    with pytest.raises(ValueError):
        DirectedGraph(3, ((1, 1), (), ()))  # duplicate
    with pytest.raises(ValueError):
        DirectedGraph(3, ((2, 1), (), ()))  # unsorted
    with pytest.raises(ValueError):
        DirectedGraph(2, ((1,),))  # wrong row count
    with pytest.raises(ValueError):
        DirectedGraph(2, ((5,), ()))  # out of range


def test_from_edge_list_and_queries():
    g = from_edge_list(4, [(0, 2), (0, 1), (3, 0)])
    assert out_neighbors(g, 0) == [1, 2]
    assert out_neighbors(g, 1) == []
    assert observes(g, 3, 0)
    assert not observes(g, 0, 3)
    with pytest.raises(ValueError):
        observes(g, 1, 1)
    with pytest.raises(ValueError):
        from_edge_list(3, [(0, 0)])


def test_adjacency_matches_edges():
    g = from_edge_list(3, [(0, 1), (2, 0), (2, 1)])
    adj = g.adjacency()
    for i in range(3):
        for j in range(3):
            expected = 1 if i != j and j in g.out_edges[i] else 0
            assert adj[i, j] == expected


def test_graph_serialization_round_trip():
    g = erdos_renyi(5, 0.6, np.random.default_rng(3))
    back = DirectedGraph.from_dict(g.to_dict())
    assert back == g
    assert back.to_dict() == g.to_dict()
