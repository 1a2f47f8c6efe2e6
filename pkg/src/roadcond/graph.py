"""Section adjacency graph and its symmetric normalization.

Sections on the same route are chained in reference-marker order; routes are
never connected to each other. Degrees count the self-loop
(deg(i) = |N(i)| + 1) so that the normalization coefficient of an isolated
node stays finite; set DEGREE_INCLUDES_SELF at call sites to probe the
exclusive variant.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TextIO

import numpy as np

from . import kernels
from .data import NetworkTable
from .errors import DuplicateMarker, ShapeMismatch

DEGREE_INCLUDES_SELF = True


@dataclass(frozen=True)
class RoadGraph:
    """Undirected adjacency as per-node sorted neighbor tuples (self excluded)."""

    n_nodes: int
    neighbors: tuple[tuple[int, ...], ...]

    def degree(self, i: int) -> int:
        return len(self.neighbors[i]) + 1

    @property
    def degrees(self) -> np.ndarray:
        return np.array([self.degree(i) for i in range(self.n_nodes)], dtype=np.int64)

    def edges(self) -> list[tuple[int, int]]:
        """Each undirected edge once, as (i, j) with i < j, sorted."""
        return [(i, j) for i in range(self.n_nodes) for j in self.neighbors[i] if i < j]


def route_chains(table: NetworkTable) -> list[list[int]]:
    """Node indices of each route in ascending ref_marker order.

    Chains come out in first-appearance order of the route ids, so the result
    is deterministic for a fixed table.
    """
    by_route: dict[str, list[int]] = {}
    for idx, rec in enumerate(table.records):
        by_route.setdefault(rec.route_id, []).append(idx)
    chains = []
    for route_id, idxs in by_route.items():
        markers = [table.records[i].ref_marker for i in idxs]
        if len(set(markers)) != len(markers):
            raise DuplicateMarker(f"route {route_id!r} has repeated ref_marker values")
        chains.append([i for _, i in sorted(zip(markers, idxs))])
    return chains


def build_graph(table: NetworkTable) -> RoadGraph:
    """Chain consecutive sections of each route into an undirected path graph."""
    n = len(table)
    nbr_sets: list[set[int]] = [set() for _ in range(n)]
    for chain in route_chains(table):
        for a, b in zip(chain, chain[1:]):
            nbr_sets[a].add(b)
            nbr_sets[b].add(a)
    return RoadGraph(
        n_nodes=n,
        neighbors=tuple(tuple(sorted(s)) for s in nbr_sets),
    )


@dataclass(frozen=True)
class NormalizedAdjacency:
    """CSR coefficients c_ij = 1/(sqrt(deg i) sqrt(deg j)) over N(i) + self.

    Row entries are stored in ascending j (the self entry sits in sorted
    position), which fixes the iteration and accumulation order.
    """

    n_nodes: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    def apply(self, dense: np.ndarray) -> np.ndarray:
        """Multiply the normalized adjacency with an N x F dense matrix."""
        dense = np.ascontiguousarray(dense, dtype=np.float64)
        if dense.ndim != 2 or dense.shape[0] != self.n_nodes:
            raise ShapeMismatch(
                f"expected ({self.n_nodes}, F) matrix, got {dense.shape}"
            )
        return kernels.csr_matmul(self.indptr, self.indices, self.data, dense)

    def iter_entries(self):
        """Yield (i, j, c_ij) by row then ascending column."""
        for i in range(self.n_nodes):
            for k in range(self.indptr[i], self.indptr[i + 1]):
                yield i, int(self.indices[k]), float(self.data[k])


def sym_norm_coeffs(
    graph: RoadGraph, degree_includes_self: bool = DEGREE_INCLUDES_SELF
) -> NormalizedAdjacency:
    """Precompute the symmetric normalization coefficients with self-loops."""
    n = graph.n_nodes
    if degree_includes_self:
        deg = np.array([len(graph.neighbors[i]) + 1 for i in range(n)], dtype=np.float64)
    else:
        deg = np.array([len(graph.neighbors[i]) for i in range(n)], dtype=np.float64)
        if np.any(deg == 0):
            raise ValueError("self-loop-exclusive degree is zero for an isolated node")
    inv_sqrt = 1.0 / np.sqrt(deg)

    indptr = np.zeros(n + 1, dtype=np.int64)
    cols: list[int] = []
    for i in range(n):
        row = sorted((*graph.neighbors[i], i))
        cols.extend(row)
        indptr[i + 1] = indptr[i] + len(row)
    indices = np.array(cols, dtype=np.int64)
    rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(indptr))
    data = inv_sqrt[rows] * inv_sqrt[indices]
    return NormalizedAdjacency(n_nodes=n, indptr=indptr, indices=indices, data=data)


def write_edge_csv(graph: RoadGraph, table: NetworkTable, stream: TextIO) -> None:
    """Debug export: one undirected edge per line as section id pairs."""
    stream.write("src_section_id,dst_section_id\n")
    for i, j in graph.edges():
        stream.write(f"{table.records[i].section_id},{table.records[j].section_id}\n")
