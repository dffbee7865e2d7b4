import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gyralkan.correspond import (CorrespondenceSet, Match, Split, chance_hit_rate, compose_truth, cosine_similarity,
                                 ground_truth_accuracy, match_population, random_match_accuracy, roi_hit_rate,
                                 uniqueness_rate)
from gyralkan.graph import make_graph


def test_cosine_examples():
    assert cosine_similarity([1, 0], [0, 1]) == 0.0
    assert cosine_similarity([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0, abs=1e-15)
    assert cosine_similarity([1, 1], [-1, -1]) == pytest.approx(-1.0, abs=1e-15)
    assert cosine_similarity([3, 4], [4, 3]) == pytest.approx(24 / 25)


def test_cosine_errors():
    with pytest.raises(ValueError):
        cosine_similarity([0, 0], [1, 0])
    with pytest.raises(ValueError):
        cosine_similarity([1, 0], [1, 0, 0])


def test_self_match_is_identity():
    x = np.random.default_rng(0).normal(size=(20, 8))
    corr = match_population(x, {"b": x.copy()}, threshold=0.5)
    assert [(m.anchor_node, m.target_node) for m in corr.matches] == [(i, i) for i in range(20)]
    assert all(m.score == pytest.approx(1.0) for m in corr.matches)


def test_threshold_gate_and_empty_result():
    x = np.eye(3)
    t = np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    corr = match_population(x, {"t": t}, threshold=0.9)
    # only anchor 2 has a partner above 0.9
    assert [(m.anchor_node, m.target_node) for m in corr.matches] == [(2, 1)]
    assert match_population(x, {"t": t}, threshold=1.01).matches == []
    assert math.isnan(uniqueness_rate(match_population(x, {"t": t}, threshold=1.01)))


def test_tie_goes_to_lowest_target_id():
    a = np.array([[1.0, 0.0]])
    t = np.array([[1.0, 0.0], [2.0, 0.0], [1.0, 0.0]])
    corr = match_population(a, {"t": t}, target_ids={"t": np.array([7, 3, 5])})
    assert corr.matches[0].target_node == 3
    assert corr.matches[0].competing == (5, 7)


def _brute(anchor, targets, thr, eps):
    out = []
    for a in range(len(anchor)):
        for s in sorted(targets):
            sc = [cosine_similarity(anchor[a], t) for t in targets[s]]
            b = max(range(len(sc)), key=lambda j: (sc[j], -j))
            if sc[b] >= thr:
                comp = tuple(j for j in range(len(sc)) if j != b and sc[j] > sc[b] - eps)
                out.append((a, s, b, comp))
    return out


@pytest.mark.parametrize("seed", range(5))
def test_matches_brute_force_argmax(seed):
    rng = np.random.default_rng(seed)
    anchor = rng.normal(size=(15, 4)) + 2
    targets = {f"s{i}": rng.normal(size=(12, 4)) + 2 for i in range(3)}
    corr = match_population(anchor, targets, threshold=0.8, epsilon=0.05)
    got = [(m.anchor_node, m.target_subject, m.target_node, m.competing) for m in corr.matches]
    assert got == _brute(anchor, targets, 0.8, 0.05)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 1000), st.floats(0.1, 100))
def test_positive_scaling_does_not_change_matches(seed, c):
    rng = np.random.default_rng(seed)
    a, t = rng.normal(size=(6, 3)), rng.normal(size=(5, 3))
    m1 = match_population(a, {"t": t}, threshold=0.0)
    m2 = match_population(a * c, {"t": t}, threshold=0.0)
    assert [(m.anchor_node, m.target_node) for m in m1.matches] == [(m.anchor_node, m.target_node) for m in m2.matches]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 1000), st.floats(-1, 1), st.floats(-1, 1), st.floats(0, 0.5), st.floats(0, 0.5))
def test_threshold_and_epsilon_monotonicity(seed, t1, t2, e1, e2):
    rng = np.random.default_rng(seed)
    a, t = rng.normal(size=(8, 3)), rng.normal(size=(6, 3))
    lo, hi = sorted((t1, t2))
    assert len(match_population(a, {"t": t}, threshold=hi).matches) <= len(
        match_population(a, {"t": t}, threshold=lo).matches)
    el, eh = sorted((e1, e2))
    small = match_population(a, {"t": t}, threshold=-1, epsilon=el)
    big = match_population(a, {"t": t}, threshold=-1, epsilon=eh)
    for ms, mb in zip(small.matches, big.matches):
        assert set(ms.competing) <= set(mb.competing)


def test_zero_embedding_rejected():
    with pytest.raises(ValueError):
        match_population(np.zeros((1, 2)), {"t": np.ones((1, 2))})
    with pytest.raises(ValueError):
        match_population(np.ones((1, 2)), {"t": np.ones((1, 3))})


def _graphs():
    a = make_graph(4, [(0, 1), (1, 2), (2, 3)], [0, 1, 2, 0], n_rois=3, subject_id="a",
                   hemispheres=["left", "left", "right", "right"])
    b = make_graph(3, [(0, 1), (1, 2)], [0, 1, 1], n_rois=3, subject_id="b")
    return {"a": a, "b": b}


def _corr(pairs, comp=None):
    comp = comp or {}
    return CorrespondenceSet("a", [Match(x, "b", y, 1.0, comp.get(x, ())) for x, y in pairs], n_anchor=4,
                             target_subjects=["b"])


def test_roi_hit_rate_counts():
    g = _graphs()
    corr = _corr([(0, 0), (1, 2), (2, 1), (3, 1)])
    # hits: 0->0 (roi 0/0), 1->2 (1/1); misses: 2->1 (2/1), 3->1 (0/1)
    assert roi_hit_rate(corr, g) == 50.0
    assert roi_hit_rate(corr, g, Split.LEFT) == 100.0
    assert roi_hit_rate(corr, g, "right") == 0.0
    assert math.isnan(roi_hit_rate(_corr([]), g))


def test_uniqueness_rate_counts():
    corr = _corr([(0, 0), (1, 2), (2, 1)], comp={1: (0,)})
    assert uniqueness_rate(corr) == pytest.approx(200 / 3)


def test_ground_truth_accuracy_and_baseline():
    corr = _corr([(0, 0), (1, 2), (2, 1)])
    truth = {("b", 0): 0, ("b", 1): 1, ("b", 2): None}
    assert ground_truth_accuracy(corr, truth) == pytest.approx(100 / 3)
    # two matchable anchors out of three, 1/3 chance each
    assert random_match_accuracy(corr, truth, {"b": 3}) == pytest.approx(100 * (2 / 9))
    with pytest.raises(KeyError):
        ground_truth_accuracy(_corr([(3, 0)]), truth)


def test_chance_hit_rate():
    g = _graphs()
    corr = _corr([(0, 0), (1, 0)])
    # roi 0 covers 1/3 of b, roi 1 covers 2/3
    assert chance_hit_rate(corr, g) == pytest.approx(50.0)


def test_compose_truth():
    gt = {"a": {10: 0, 11: 1, 12: 2}, "b": {10: 5, 12: 6}}
    assert compose_truth(gt, "a") == {("b", 0): 5, ("b", 1): None, ("b", 2): 6}
