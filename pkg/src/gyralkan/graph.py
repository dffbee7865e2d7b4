"""Immutable GyralNet graphs with exact-distance hop adjacency."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph


class GraphError(ValueError):
    """Raised when a graph violates a structural invariant."""


class Hemisphere(str, enum.Enum):
    LEFT = "left"
    RIGHT = "right"
    UNSPECIFIED = "unspecified"


@dataclass(frozen=True)
class NodeRecord:
    id: int
    roi: int
    hemisphere: Hemisphere = Hemisphere.UNSPECIFIED
    pos: tuple[float, float, float] | None = None


@dataclass(frozen=True)
class GyralNet:
    """Undirected, unweighted graph of 3-hinge nodes with ROI labels.

    Node ids are dense ``0..n-1`` and ``nodes[i].id == i``. Edges are stored
    as sorted ``(u, v)`` pairs with ``u < v``.
    """

    nodes: tuple[NodeRecord, ...]
    edges: tuple[tuple[int, int], ...]
    n_rois: int = 75
    subject_id: str = ""

    def __post_init__(self):
        nodes = tuple(self.nodes)
        if self.n_rois < 1:
            raise GraphError(f"n_rois must be positive, got {self.n_rois}")
        for i, node in enumerate(nodes):
            if node.id != i:
                raise GraphError(f"node ids must be dense 0..n-1; position {i} has id {node.id}")
            if not 0 <= node.roi < self.n_rois:
                raise GraphError(f"node {i}: roi {node.roi} outside [0, {self.n_rois})")
        n = len(nodes)
        seen = set()
        canon = []
        for u, v in self.edges:
            u, v = int(u), int(v)
            if u == v:
                raise GraphError(f"self-loop on node {u}")
            if not (0 <= u < n and 0 <= v < n):
                raise GraphError(f"edge ({u}, {v}) references a missing node (n={n})")
            e = (u, v) if u < v else (v, u)
            if e in seen:
                raise GraphError(f"duplicate edge {e}")
            seen.add(e)
            canon.append(e)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", tuple(sorted(canon)))

    @property
    def n(self) -> int:
        return len(self.nodes)

    @cached_property
    def rois(self) -> np.ndarray:
        return np.array([nd.roi for nd in self.nodes], dtype=np.int64)

    @cached_property
    def adjacency(self) -> sparse.csr_matrix:
        n = self.n
        if not self.edges:
            return sparse.csr_matrix((n, n), dtype=np.int8)
        e = np.asarray(self.edges, dtype=np.int64)
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        data = np.ones(len(rows), dtype=np.int8)
        return sparse.csr_matrix((data, (rows, cols)), shape=(n, n))

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.asarray(self.adjacency.sum(axis=1)).ravel().astype(np.int64)

    @cached_property
    def distances(self) -> np.ndarray:
        """All-pairs hop distances; ``-1`` marks unreachable pairs."""
        if self.n == 0:
            return np.zeros((0, 0), dtype=np.int64)
        d = csgraph.shortest_path(self.adjacency, method="D", directed=False, unweighted=True)
        out = np.full(d.shape, -1, dtype=np.int64)
        finite = np.isfinite(d)
        out[finite] = d[finite].astype(np.int64)
        return out

    def check_node(self, u: int) -> int:
        if not 0 <= int(u) < self.n:
            raise GraphError(f"invalid node id {u} (n={self.n})")
        return int(u)

    def neighbors(self, u: int) -> np.ndarray:
        a = self.adjacency
        return a.indices[a.indptr[u]:a.indptr[u + 1]]


@dataclass(frozen=True)
class HopAdjacency:
    """Binary matrix of node pairs at shortest-path distance exactly ``k``."""

    k: int
    matrix: sparse.csr_matrix = field(repr=False)


@dataclass(frozen=True)
class RoiMatrix:
    matrix: np.ndarray


def make_graph(n_nodes: int, edges: Iterable[Sequence[int]], rois: Sequence[int] | None = None,
               n_rois: int = 75, subject_id: str = "", hemispheres=None, positions=None) -> GyralNet:
    """Convenience constructor from plain lists."""
    if rois is None:
        rois = [0] * n_nodes
    nodes = []
    for i in range(n_nodes):
        hemi = Hemisphere(hemispheres[i]) if hemispheres is not None else Hemisphere.UNSPECIFIED
        pos = tuple(float(c) for c in positions[i]) if positions is not None else None
        nodes.append(NodeRecord(i, int(rois[i]), hemi, pos))
    return GyralNet(tuple(nodes), tuple((int(u), int(v)) for u, v in edges), n_rois, subject_id)


def khop_adjacency(g: GyralNet, k: int) -> HopAdjacency:
    if k < 0:
        raise ValueError(f"hop index must be >= 0, got {k}")
    rows, cols = np.nonzero(g.distances == k)
    data = np.ones(len(rows), dtype=np.int8)
    return HopAdjacency(k, sparse.csr_matrix((data, (rows, cols)), shape=(g.n, g.n)))


def khop_neighborhood(g: GyralNet, u: int, k: int) -> set[int]:
    u = g.check_node(u)
    if k < 0:
        raise ValueError(f"hop index must be >= 0, got {k}")
    return set(np.flatnonzero(g.distances[u] == k).tolist())


def degree_sequence(g: GyralNet, nodes: Iterable[int]) -> list[int]:
    """Degrees of ``nodes`` sorted ascending."""
    ids = [g.check_node(u) for u in nodes]
    return sorted(int(g.degrees[u]) for u in ids)


def roi_onehot(g: GyralNet) -> RoiMatrix:
    f = np.zeros((g.n, g.n_rois), dtype=np.float64)
    f[np.arange(g.n), g.rois] = 1.0
    return RoiMatrix(f)
