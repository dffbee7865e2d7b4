"""Cross-subject node matching by cosine similarity of embeddings."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .graph import GyralNet, Hemisphere


class Split(str, enum.Enum):
    TOTAL = "total"
    LEFT = "left"
    RIGHT = "right"


@dataclass(frozen=True)
class Match:
    anchor_node: int
    target_subject: str
    target_node: int
    score: float
    competing: tuple[int, ...] = ()


@dataclass
class CorrespondenceSet:
    anchor_subject: str
    matches: list[Match]
    threshold: float = 0.9
    epsilon: float = 0.02
    n_anchor: int = 0
    target_subjects: list[str] = field(default_factory=list)

    def competing(self, anchor_node: int) -> dict[str, tuple[int, ...]]:
        return {m.target_subject: m.competing for m in self.matches if m.anchor_node == anchor_node}


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine similarity is undefined for a zero vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def _unit_rows(x: np.ndarray, what: str) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError(f"{what} contains a zero embedding; cosine similarity undefined")
    return x / norms


def match_population(anchor: np.ndarray, targets: Mapping[str, np.ndarray], threshold: float = 0.9,
                     epsilon: float = 0.02, anchor_subject: str = "",
                     anchor_ids=None, target_ids: Mapping[str, np.ndarray] | None = None) -> CorrespondenceSet:
    """Best cosine match per (anchor node, target subject), gated by ``threshold``.

    ``anchor`` is ``(n_anchor, d)``; each target is ``(n_t, d)``. Node ids
    default to row positions. Exact ties go to the lowest target node id.
    Competing points are the other target nodes scoring above ``best - epsilon``.
    """
    anchor = np.asarray(anchor, dtype=np.float64)
    a_ids = np.arange(len(anchor)) if anchor_ids is None else np.asarray(anchor_ids)
    au = _unit_rows(anchor, "anchor")
    matches = []
    for subj in sorted(targets):
        t = np.asarray(targets[subj], dtype=np.float64)
        if t.ndim != 2 or len(t) == 0:
            raise ValueError(f"target subject {subj!r} has no embeddings")
        if t.shape[1] != anchor.shape[1]:
            raise ValueError(f"width mismatch: anchor {anchor.shape[1]} vs {subj!r} {t.shape[1]}")
        t_ids = np.arange(len(t)) if target_ids is None else np.asarray(target_ids[subj])
        order = np.argsort(t_ids, kind="stable")
        t_ids = t_ids[order]
        scores = np.clip(au @ _unit_rows(t[order], subj).T, -1.0, 1.0)
        best = np.argmax(scores, axis=1)
        for a in range(len(anchor)):
            s = scores[a, best[a]]
            if s < threshold:
                continue
            comp = np.flatnonzero(scores[a] > s - epsilon)
            comp = tuple(int(t_ids[c]) for c in comp if c != best[a])
            matches.append(Match(int(a_ids[a]), subj, int(t_ids[best[a]]), float(s), comp))
    matches.sort(key=lambda m: (m.anchor_node, m.target_subject))
    return CorrespondenceSet(anchor_subject, matches, threshold, epsilon, len(anchor), sorted(targets))


def roi_hit_rate(corr: CorrespondenceSet, graphs: Mapping[str, GyralNet], split: Split = Split.TOTAL) -> float:
    """Percent of matches whose anchor and target nodes share an ROI label."""
    split = Split(split)
    anchor_g = graphs[corr.anchor_subject]
    hits = total = 0
    for m in corr.matches:
        if m.target_subject not in graphs:
            raise KeyError(f"no graph for target subject {m.target_subject!r}")
        a = anchor_g.nodes[anchor_g.check_node(m.anchor_node)]
        tg = graphs[m.target_subject]
        t = tg.nodes[tg.check_node(m.target_node)]
        if split is Split.LEFT and a.hemisphere is not Hemisphere.LEFT:
            continue
        if split is Split.RIGHT and a.hemisphere is not Hemisphere.RIGHT:
            continue
        total += 1
        hits += a.roi == t.roi
    return 100.0 * hits / total if total else float("nan")


def uniqueness_rate(corr: CorrespondenceSet) -> float:
    """Percent of matched anchor nodes with no competing point in any target subject."""
    ambiguous: dict[int, bool] = {}
    for m in corr.matches:
        ambiguous[m.anchor_node] = ambiguous.get(m.anchor_node, False) or bool(m.competing)
    if not ambiguous:
        return float("nan")
    return 100.0 * sum(not v for v in ambiguous.values()) / len(ambiguous)


def ground_truth_accuracy(corr: CorrespondenceSet, truth: Mapping[tuple[str, int], int | None]) -> float:
    """Percent of matches that hit the true corresponding node.

    ``truth`` maps ``(target_subject, anchor_node)`` to the true target node,
    or ``None`` when the anchor has no counterpart in that subject (such a
    match is counted as wrong).
    """
    if not corr.matches:
        return float("nan")
    correct = 0
    for m in corr.matches:
        key = (m.target_subject, m.anchor_node)
        if key not in truth:
            raise KeyError(f"no ground truth for anchor node {m.anchor_node} in {m.target_subject!r}")
        correct += truth[key] is not None and truth[key] == m.target_node
    return 100.0 * correct / len(corr.matches)


def random_match_accuracy(corr: CorrespondenceSet, truth: Mapping[tuple[str, int], int | None],
                          target_sizes: Mapping[str, int]) -> float:
    """Expected accuracy (percent) of picking a uniformly random target node for each match."""
    if not corr.matches:
        return float("nan")
    p = [(truth.get((m.target_subject, m.anchor_node)) is not None) / target_sizes[m.target_subject]
         for m in corr.matches]
    return 100.0 * float(np.mean(p))


def chance_hit_rate(corr: CorrespondenceSet, graphs: Mapping[str, GyralNet]) -> float:
    """Expected ROI hit rate (percent) when each match picks a uniformly random target node."""
    if not corr.matches:
        return float("nan")
    anchor_g = graphs[corr.anchor_subject]
    frac = {}
    p = []
    for m in corr.matches:
        if m.target_subject not in frac:
            tg = graphs[m.target_subject]
            frac[m.target_subject] = np.bincount(tg.rois, minlength=tg.n_rois) / tg.n
        p.append(frac[m.target_subject][anchor_g.nodes[m.anchor_node].roi])
    return 100.0 * float(np.mean(p))


def compose_truth(gt: Mapping[str, Mapping[int, int]], anchor_subject: str, template_size: int | None = None):
    """Anchor-node -> target-node truth from per-subject template maps.

    Returns ``{(target_subject, anchor_node): target_node or None}`` covering
    every anchor node present in ``gt[anchor_subject]``.
    """
    anchor_map = gt[anchor_subject]
    out = {}
    for subj, tmap in gt.items():
        if subj == anchor_subject:
            continue
        for tnode, anode in anchor_map.items():
            out[(subj, int(anode))] = tmap.get(tnode)
    return out
