"""Synthetic GyralNet populations with known node correspondences.

A template is a sparse geometric graph on the unit sphere with ROI labels
given by spatial patches. Subjects are perturbed copies (node drops, edge
rewiring, id shuffles) so the true template-to-subject map is known.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.sparse import csgraph
from scipy.spatial.distance import pdist

from .graph import GyralNet, Hemisphere, NodeRecord, make_graph
from .seeding import derive_rng


class InfeasibleSpec(ValueError):
    pass


@dataclass
class PopulationSpec:
    n_nodes: int = 200
    n_rois: int = 75
    n_subjects: int = 10
    edge_rewire_frac: float = 0.05
    node_drop_frac: float = 0.05
    degree_target: float = 3.0
    seed: int = 0

    def __post_init__(self):
        for name in ("edge_rewire_frac", "node_drop_frac"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InfeasibleSpec(f"{name} must lie in [0, 1], got {v}")
        if self.n_nodes < 2 or self.n_rois < 1 or self.n_subjects < 1 or self.degree_target <= 0:
            raise InfeasibleSpec(f"counts must be positive (n_nodes >= 2): {self}")
        if self.n_rois > self.n_nodes:
            raise InfeasibleSpec(f"n_rois ({self.n_rois}) exceeds n_nodes ({self.n_nodes})")

    def to_dict(self) -> dict:
        return asdict(self)


def _sphere_points(rng, n):
    p = rng.normal(size=(n, 3))
    return p / np.linalg.norm(p, axis=1, keepdims=True)


def generate_template(spec: PopulationSpec) -> GyralNet:
    """Spanning tree of chord lengths plus the shortest extra chords up to the target mean degree."""
    rng = derive_rng(spec.seed, "template")
    n = spec.n_nodes
    pts = _sphere_points(rng, n)
    d = pdist(pts)
    iu, ju = np.triu_indices(n, k=1)
    dense = np.zeros((n, n))
    dense[iu, ju] = d
    mst = csgraph.minimum_spanning_tree(dense).tocoo()
    chosen = {(min(a, b), max(a, b)) for a, b in zip(mst.row.tolist(), mst.col.tolist())}
    n_edges = min(int(round(n * spec.degree_target / 2)), len(d))
    for idx in np.argsort(d, kind="stable"):
        if len(chosen) >= n_edges:
            break
        chosen.add((int(iu[idx]), int(ju[idx])))
    edges = np.array(sorted(chosen), dtype=np.int64)

    g0 = make_graph(n, edges.tolist())
    _, comp = csgraph.connected_components(g0.adjacency, directed=False)
    largest = np.argmax(np.bincount(comp))
    kept = np.flatnonzero(comp == largest)
    if len(kept) < spec.n_rois:
        raise InfeasibleSpec(f"largest component has {len(kept)} nodes, fewer than n_rois={spec.n_rois}")
    remap = -np.ones(n, dtype=np.int64)
    remap[kept] = np.arange(len(kept))
    sub_edges = [(int(remap[u]), int(remap[v])) for u, v in edges if remap[u] >= 0 and remap[v] >= 0]
    pts = pts[kept]

    # ROI patches are shared by both hemispheres, mirroring per-hemisphere atlases
    folded = pts.copy()
    folded[:, 0] = np.abs(folded[:, 0])
    centers, _ = kmeans2(folded, spec.n_rois, minit="++", seed=derive_rng(spec.seed, "rois"))
    rois = np.argmin(((folded[:, None, :] - centers[None]) ** 2).sum(-1), axis=1)
    hemis = [Hemisphere.LEFT.value if x < 0 else Hemisphere.RIGHT.value for x in pts[:, 0]]
    return make_graph(len(kept), sub_edges, rois.tolist(), spec.n_rois, "template", hemis, pts.tolist())


def derive_subject(template: GyralNet, spec: PopulationSpec, subject_seed: int,
                   subject_id: str | None = None) -> tuple[GyralNet, dict[int, int]]:
    """Perturbed copy of ``template`` and its template-node -> subject-node map."""
    rng = derive_rng(spec.seed, "subject", subject_seed)
    n = template.n
    n_drop = int(round(spec.node_drop_frac * n))
    if n_drop >= n:
        raise InfeasibleSpec(f"node_drop_frac={spec.node_drop_frac} removes every node")
    survivors = np.sort(rng.choice(n, n - n_drop, replace=False))
    alive = np.zeros(n, dtype=bool)
    alive[survivors] = True

    edges = [(u, v) for u, v in template.edges if alive[u] and alive[v]]
    edge_set = set(edges)
    n_rewire = int(round(spec.edge_rewire_frac * len(edges)))
    for idx in sorted(rng.choice(len(edges), n_rewire, replace=False).tolist()) if n_rewire else []:
        old = edges[idx]
        keep = old[int(rng.integers(2))]
        candidates = [int(w) for w in survivors
                      if w != keep and (min(keep, w), max(keep, w)) not in edge_set]
        if not candidates:
            continue
        w = candidates[int(rng.integers(len(candidates)))]
        new = (min(keep, w), max(keep, w))
        edge_set.discard(old)
        edge_set.add(new)
        edges[idx] = new

    perm = rng.permutation(len(survivors))
    new_id = {int(t): int(perm[i]) for i, t in enumerate(survivors)}
    nodes = [None] * len(survivors)
    for t, s in new_id.items():
        src = template.nodes[t]
        nodes[s] = NodeRecord(s, src.roi, src.hemisphere, src.pos)
    sub_edges = tuple((new_id[u], new_id[v]) for u, v in sorted(edge_set))
    sid = subject_id if subject_id is not None else f"subj{subject_seed:03d}"
    return GyralNet(tuple(nodes), sub_edges, template.n_rois, sid), new_id


def generate_population(spec: PopulationSpec):
    """Returns ``(template, subjects, ground_truth)`` with ground truth keyed by subject id."""
    template = generate_template(spec)
    subjects, truth = [], {}
    for i in range(spec.n_subjects):
        g, gt = derive_subject(template, spec, i)
        subjects.append(g)
        truth[g.subject_id] = gt
    return template, subjects, truth
