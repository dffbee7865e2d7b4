"""Structural similarity of nodes from DTW over ordered neighborhood degrees."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import sparse

from .graph import GyralNet, HopAdjacency, degree_sequence, khop_adjacency


@dataclass(frozen=True)
class SimilarityMatrix:
    """S_k restricted to a support set of node pairs.

    ``matrix`` is a symmetric sparse matrix holding S_k(u, v) at every pair of
    the support (zeros elsewhere are structural, not similarities).
    """

    k: int
    matrix: sparse.csr_matrix = field(repr=False)

    def entry(self, u: int, v: int) -> float:
        return float(self.matrix[u, v])

    @property
    def support(self) -> set[tuple[int, int]]:
        coo = self.matrix.tocoo()
        return set(zip(coo.row.tolist(), coo.col.tolist()))


def dtw_cost(a: int, b: int) -> float:
    """Ratio cost ``max/min - 1`` between two positive degrees."""
    if a < 1 or b < 1:
        raise ValueError(f"dtw_cost needs degrees >= 1, got ({a}, {b})")
    hi, lo = (a, b) if a >= b else (b, a)
    return hi / lo - 1.0


def dtw_distance(m: Sequence[int], n: Sequence[int]) -> float:
    """Minimum cumulative ratio cost over monotone alignments of ``m`` and ``n``."""
    if len(m) == 0 or len(n) == 0:
        raise ValueError("dtw_distance is undefined for empty sequences")
    inf = math.inf
    prev = [inf] * (len(n) + 1)
    for i, a in enumerate(m):
        cur = [inf] * (len(n) + 1)
        for j, b in enumerate(n):
            if i == 0 and j == 0:
                best = 0.0
            else:
                best = min(prev[j + 1], prev[j], cur[j])
            cur[j + 1] = dtw_cost(a, b) + best
        prev = cur
    return prev[-1]


def _similarity_from_sequences(p: list[int], q: list[int]) -> float:
    if p == q:
        return 1.0
    # only g_0 of an isolated node can hold a zero degree; treat like an empty ring
    if not p or not q or p[0] == 0 or q[0] == 0:
        return 0.0
    return math.exp(-dtw_distance(p, q))


def structural_similarity(g: GyralNet, u: int, v: int, k: int) -> float:
    u, v = g.check_node(u), g.check_node(v)
    du, dv = g.distances[u], g.distances[v]
    p = degree_sequence(g, np.flatnonzero(du == k))
    q = degree_sequence(g, np.flatnonzero(dv == k))
    return _similarity_from_sequences(p, q)


def _ring_sequences(g: GyralNet, k: int) -> list[list[int]]:
    deg = g.degrees
    d = g.distances
    return [sorted(deg[d[u] == k].tolist()) for u in range(g.n)]


def similarity_matrix(g: GyralNet, k: int, support: HopAdjacency | None = None) -> SimilarityMatrix:
    """S_k evaluated only on the pairs where ``support`` (A_k) is set."""
    if support is None:
        support = khop_adjacency(g, k)
    if support.k != k:
        raise ValueError(f"support is A_{support.k}, expected A_{k}")
    if support.matrix.shape != (g.n, g.n):
        raise ValueError(f"support shape {support.matrix.shape} does not match graph with n={g.n}")

    seqs = _ring_sequences(g, k)
    coo = sparse.triu(support.matrix, format="coo")
    pairs = sorted(zip(coo.row.tolist(), coo.col.tolist()))
    rows, cols, vals = [], [], []
    for u, v in pairs:
        s = 1.0 if u == v else _similarity_from_sequences(seqs[u], seqs[v])
        rows.append(u)
        cols.append(v)
        vals.append(s)
        if u != v:
            rows.append(v)
            cols.append(u)
            vals.append(s)
    mat = sparse.csr_matrix((np.asarray(vals, dtype=np.float64), (rows, cols)), shape=(g.n, g.n))
    return SimilarityMatrix(k, mat)
