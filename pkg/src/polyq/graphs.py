"""Directed graphs for interaction and observability structure.

An edge (i, j) in an observability graph grants agent i direct access to
agent j's realized actions.  Graphs are immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class DirectedGraph:
    num_vertices: int
    out_edges: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if self.num_vertices < 1:
            raise ValueError("graph needs at least one vertex")
        if len(self.out_edges) != self.num_vertices:
            raise ValueError("out_edges must have one entry per vertex")
        cleaned = []
        for i, nbrs in enumerate(self.out_edges):
            nbrs = tuple(int(j) for j in nbrs)
            if any(j == i for j in nbrs):
                raise ValueError(f"self-loop at vertex {i}")
            if any(not 0 <= j < self.num_vertices for j in nbrs):
                raise ValueError(f"neighbor out of range at vertex {i}")
            if len(set(nbrs)) != len(nbrs) or tuple(sorted(nbrs)) != nbrs:
                raise ValueError(f"out-neighbors of {i} must be sorted and duplicate-free")
            cleaned.append(nbrs)
        object.__setattr__(self, "out_edges", tuple(cleaned))

    @property
    def num_edges(self) -> int:
        return sum(len(nbrs) for nbrs in self.out_edges)

    def adjacency(self) -> np.ndarray:
        """Dense 0/1 matrix; entry [i, j] says whether edge (i, j) exists."""
        adj = np.zeros((self.num_vertices, self.num_vertices), dtype=np.uint8)
        for i, nbrs in enumerate(self.out_edges):
            adj[i, list(nbrs)] = 1
        return adj

    def to_dict(self) -> dict:
        return {
            "num_vertices": self.num_vertices,
            "edges": [[i, j] for i, nbrs in enumerate(self.out_edges) for j in nbrs],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "DirectedGraph":
        return from_edge_list(int(doc["num_vertices"]), doc["edges"])


def from_edge_list(num_vertices: int, edges) -> DirectedGraph:
    nbrs = [set() for _ in range(num_vertices)]
    for i, j in edges:
        nbrs[int(i)].add(int(j))
    return DirectedGraph(num_vertices, tuple(tuple(sorted(s)) for s in nbrs))


def empty_graph(n: int) -> DirectedGraph:
    return DirectedGraph(n, tuple(() for _ in range(n)))


def complete_graph(n: int) -> DirectedGraph:
    return DirectedGraph(
        n, tuple(tuple(j for j in range(n) if j != i) for i in range(n))
    )


def erdos_renyi(
    n: int,
    p: float,
    rng: np.random.Generator | None = None,
    symmetric: bool = False,
) -> DirectedGraph:
    """Sample each ordered pair (i, j), i != j, independently with probability p.

    With ``symmetric=True`` each unordered pair is sampled once and both
    directions are included together (one-way edges never occur).
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"edge probability must be in [0, 1], got {p}")
    if rng is None:
        rng = np.random.default_rng()
    nbrs = [[] for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if symmetric:
                if rng.random() < p:
                    nbrs[i].append(j)
                    nbrs[j].append(i)
            else:
                if rng.random() < p:
                    nbrs[i].append(j)
                if rng.random() < p:
                    nbrs[j].append(i)
    return DirectedGraph(n, tuple(tuple(sorted(v)) for v in nbrs))


def observes(graph: DirectedGraph, i: int, j: int) -> bool:
    """True iff vertex i has an out-edge to j (i can observe j)."""
    if i == j:
        raise ValueError("observability of an agent by itself is undefined")
    if not (0 <= i < graph.num_vertices and 0 <= j < graph.num_vertices):
        raise ValueError(f"vertex pair ({i},{j}) out of range")
    return j in graph.out_edges[i]


def out_neighbors(graph: DirectedGraph, i: int) -> list[int]:
    if not 0 <= i < graph.num_vertices:
        raise ValueError(f"vertex {i} out of range")
    return list(graph.out_edges[i])
