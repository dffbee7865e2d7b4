"""Structural-similarity-weighted multi-hop ROI features."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .graph import GyralNet, HopAdjacency, RoiMatrix, khop_adjacency, roi_onehot
from .structsim import SimilarityMatrix, similarity_matrix


@dataclass
class MultiHopFeature:
    node: int
    subject_id: str
    rows: np.ndarray  # (l+1, R)

    @property
    def l(self) -> int:
        return self.rows.shape[0] - 1


@dataclass
class FeatureDataset:
    """Stacked per-node features of a population.

    ``data`` has shape ``(N, l+1, R)``. ``rois`` and ``hemispheres`` mirror the
    per-sample labels so downstream evaluation does not need the graphs.
    """

    subject_ids: list[str]
    node_ids: np.ndarray
    data: np.ndarray
    rois: np.ndarray
    hemispheres: list[str]
    index: dict[tuple[str, int], int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.index:
            self.index = {(s, int(n)): i for i, (s, n) in enumerate(zip(self.subject_ids, self.node_ids))}
        if len(self.index) != len(self.subject_ids):
            raise ValueError("duplicate (subject, node) keys in dataset")

    def __len__(self) -> int:
        return self.data.shape[0]

    @property
    def l(self) -> int:
        return self.data.shape[1] - 1

    @property
    def n_rois(self) -> int:
        return self.data.shape[2]

    @property
    def subjects(self) -> list[str]:
        return list(dict.fromkeys(self.subject_ids))

    def sample(self, i: int) -> MultiHopFeature:
        return MultiHopFeature(int(self.node_ids[i]), self.subject_ids[i], self.data[i])

    def subset(self, subjects: Sequence[str]) -> "FeatureDataset":
        keep = set(subjects)
        idx = [i for i, s in enumerate(self.subject_ids) if s in keep]
        return FeatureDataset([self.subject_ids[i] for i in idx], self.node_ids[idx], self.data[idx],
                              self.rois[idx], [self.hemispheres[i] for i in idx])

    def subject_slice(self, subject: str) -> np.ndarray:
        return np.array([i for i, s in enumerate(self.subject_ids) if s == subject], dtype=np.int64)


class SubjectCache:
    """Lazily built A_k and S_k for one graph."""

    def __init__(self, g: GyralNet):
        self.g = g
        self._adj: dict[int, HopAdjacency] = {}
        self._sim: dict[int, SimilarityMatrix] = {}
        self.F = roi_onehot(g)

    def adj(self, k: int) -> HopAdjacency:
        if k not in self._adj:
            self._adj[k] = khop_adjacency(self.g, k)
        return self._adj[k]

    def sim(self, k: int) -> SimilarityMatrix:
        if k not in self._sim:
            self._sim[k] = similarity_matrix(self.g, k, self.adj(k))
        return self._sim[k]


def multihop_feature(g: GyralNet, i: int, l: int, sims: Sequence[SimilarityMatrix],
                     adjs: Sequence[HopAdjacency], F: RoiMatrix) -> MultiHopFeature:
    """Row k is ``((S_k * A_k) @ F)[i]``; row 0 is the node's own one-hot ROI.

    ``sims`` and ``adjs`` are indexed by hop, and must cover ``1..l``; a
    ``k=0`` entry is accepted but ignored.
    """
    if l < 1:
        raise ValueError(f"max hop must be >= 1, got {l}")
    i = g.check_node(i)
    f = F.matrix
    if f.shape != (g.n, g.n_rois):
        raise ValueError(f"ROI matrix shape {f.shape} does not match graph ({g.n}, {g.n_rois})")
    sims, adjs = _by_hop(sims), _by_hop(adjs)
    rows = np.zeros((l + 1, g.n_rois))
    rows[0] = f[i]
    for k in range(1, l + 1):
        if k not in sims or k not in adjs:
            raise ValueError(f"missing similarity or adjacency for hop {k}")
        s, a = sims[k].matrix, adjs[k].matrix
        if s.shape != (g.n, g.n) or a.shape != (g.n, g.n):
            raise ValueError(f"hop {k} matrices do not match n={g.n}")
        rows[k] = _roi_sums(s[i].multiply(a[i]), f)[0]
    return MultiHopFeature(i, g.subject_id, rows)


def _roi_sums(w, f: np.ndarray) -> np.ndarray:
    """``w @ f`` for a one-hot ``f``, summing each (row, ROI) bucket in ascending value order.

    The canonical order makes the result independent of node numbering, so
    isomorphic graphs give bit-identical features.
    """
    coo = w.tocoo()
    out = np.zeros((w.shape[0], f.shape[1]))
    if coo.nnz == 0:
        return out
    roi = np.argmax(f, axis=1)[coo.col]
    order = np.lexsort((coo.data, roi, coo.row))
    r, c, v = coo.row[order], roi[order], coo.data[order]
    starts = np.flatnonzero(np.r_[True, (r[1:] != r[:-1]) | (c[1:] != c[:-1])])
    out[r[starts], c[starts]] = np.add.reduceat(v, starts)
    return out


def _by_hop(items) -> dict:
    return {int(it.k): it for it in items}


def encode_subject(g: GyralNet, l: int, cache: SubjectCache | None = None) -> list[MultiHopFeature]:
    if l < 1:
        raise ValueError(f"max hop must be >= 1, got {l}")
    cache = cache or SubjectCache(g)
    f = cache.F.matrix
    out = np.zeros((g.n, l + 1, g.n_rois))
    out[:, 0] = f
    for k in range(1, l + 1):
        out[:, k] = _roi_sums(cache.sim(k).matrix.multiply(cache.adj(k).matrix), f)
    return [MultiHopFeature(i, g.subject_id, out[i]) for i in range(g.n)]


def encode_population(graphs: Sequence[GyralNet], l: int) -> FeatureDataset:
    """Encode every node of every graph; samples ordered by subject id, then node id."""
    if not graphs:
        raise ValueError("no graphs to encode")
    r = {g.n_rois for g in graphs}
    if len(r) != 1:
        raise ValueError(f"graphs disagree on n_rois: {sorted(r)}")
    ids = [g.subject_id for g in graphs]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate subject ids in population")
    subj, nodes, data, rois, hemis = [], [], [], [], []
    for g in sorted(graphs, key=lambda g: g.subject_id):
        feats = encode_subject(g, l)
        for ft, nd in zip(feats, g.nodes):
            subj.append(g.subject_id)
            nodes.append(ft.node)
            data.append(ft.rows)
            rois.append(nd.roi)
            hemis.append(nd.hemisphere.value)
    R = r.pop()
    arr = np.stack(data) if data else np.zeros((0, l + 1, R))
    return FeatureDataset(subj, np.asarray(nodes, dtype=np.int64), arr,
                          np.asarray(rois, dtype=np.int64), hemis)
