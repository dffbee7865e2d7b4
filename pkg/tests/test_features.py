import math

import numpy as np
import pytest

from gyralkan.features import SubjectCache, encode_population, encode_subject, multihop_feature
from gyralkan.graph import khop_adjacency, make_graph, roi_onehot
from gyralkan.structsim import similarity_matrix, structural_similarity
from oracles import dense_multihop, random_graph


def _inputs(g, l):
    adjs = [khop_adjacency(g, k) for k in range(l + 1)]
    sims = [similarity_matrix(g, k, adjs[k]) for k in range(l + 1)]
    return sims, adjs, roi_onehot(g)


def test_row0_is_onehot_and_empty_rows_zero(path3):
    sims, adjs, F = _inputs(path3, 3)
    for i in range(3):
        f = multihop_feature(path3, i, 3, sims, adjs, F)
        np.testing.assert_array_equal(f.rows[0], F.matrix[i])
    # node 1 of a 3-path has no distance-2 neighbours
    f = multihop_feature(path3, 1, 2, sims, adjs, F)
    np.testing.assert_array_equal(f.rows[2], np.zeros(3))


def test_hand_built_six_node_graph():
    # triangle 0-1-2 with a tail 0-3-4-5; degrees [3, 2, 2, 2, 2, 1]
    g = make_graph(6, [(0, 1), (0, 2), (1, 2), (0, 3), (3, 4), (4, 5)], [0, 1, 2, 0, 1, 2], n_rois=3)
    sims, adjs, F = _inputs(g, 1)
    # node 0 ring [2,2,2]; each neighbour ring is [2,3]: best alignment costs d(2,3) = 0.5
    f0 = multihop_feature(g, 0, 1, sims, adjs, F)
    np.testing.assert_allclose(f0.rows[1], [math.exp(-0.5)] * 3, rtol=0, atol=1e-15)
    # node 3 ring [2,3]; node 0 ring [2,2,2] -> 0.5, node 4 ring [1,2] -> d(2,1)+d(3,2) = 1.5
    f3 = multihop_feature(g, 3, 1, sims, adjs, F)
    np.testing.assert_allclose(f3.rows[1], [math.exp(-0.5), math.exp(-1.5), 0.0], rtol=0, atol=1e-15)


def test_multihop_errors(path3):
    sims, adjs, F = _inputs(path3, 1)
    with pytest.raises(ValueError):
        multihop_feature(path3, 0, 0, sims, adjs, F)
    with pytest.raises(ValueError):
        multihop_feature(path3, 0, 2, sims, adjs, F)
    bad = roi_onehot(make_graph(2, [], [0, 0], n_rois=3))
    with pytest.raises(ValueError):
        multihop_feature(path3, 0, 1, sims, adjs, bad)


def test_two_node_graph():
    g = make_graph(2, [(0, 1)], [0, 2], n_rois=3)
    feats = encode_subject(g, 1)
    s = structural_similarity(g, 0, 1, 1)
    np.testing.assert_array_equal(feats[0].rows[1], s * np.array([0, 0, 1.0]))
    np.testing.assert_array_equal(feats[1].rows[1], s * np.array([1.0, 0, 0]))


def test_prefix_stability():
    g = random_graph(25, 0.12, 5)
    f1 = encode_subject(g, 1)
    f3 = encode_subject(g, 3)
    for a, b in zip(f1, f3):
        np.testing.assert_array_equal(a.rows, b.rows[:2])


@pytest.mark.parametrize("seed", range(3))
def test_encode_subject_matches_dense_oracle(seed):
    g = random_graph(30, 0.08, seed, n_rois=6)
    dense = dense_multihop(g, 3)
    feats = np.stack([f.rows for f in encode_subject(g, 3)])
    assert np.max(np.abs(feats - dense)) < 1e-12


def test_feature_bounds_and_sparsity():
    g = random_graph(30, 0.1, 8, n_rois=6)
    feats = np.stack([f.rows for f in encode_subject(g, 3)])
    d = g.distances
    F = roi_onehot(g).matrix
    for i in range(g.n):
        for k in range(1, 4):
            counts = (d[i] == k).astype(float) @ F
            assert np.all(feats[i, k] >= 0)
            assert np.all(feats[i, k] <= counts + 1e-12)
            assert np.count_nonzero(feats[i, k]) <= np.count_nonzero(counts)
            assert (not feats[i, k].any()) == (not (d[i] == k).any())


def test_encode_population_counts_and_determinism():
    g = random_graph(12, 0.2, 1, n_rois=4)
    ds = encode_population([g], 2)
    assert len(ds) == g.n
    copies = [make_graph(g.n, g.edges, g.rois.tolist(), 4, f"s{i}") for i in range(3)]
    ds3 = encode_population(copies, 2)
    assert len(ds3) == 3 * g.n
    for i in range(g.n):
        a, b, c = (ds3.data[ds3.index[(f"s{j}", i)]] for j in range(3))
        np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(a, c)


def test_encode_population_order_independent():
    graphs = [random_graph(10 + i, 0.2, i, n_rois=4) for i in range(4)]
    a = encode_population(graphs, 2)
    b = encode_population(graphs[::-1], 2)
    assert a.subject_ids == b.subject_ids
    for key, i in a.index.items():
        np.testing.assert_array_equal(a.data[i], b.data[b.index[key]])


def test_encode_population_rejects_mixed_rois():
    with pytest.raises(ValueError):
        encode_population([make_graph(2, [(0, 1)], n_rois=3, subject_id="a"),
                           make_graph(2, [(0, 1)], n_rois=4, subject_id="b")], 1)


def test_subject_cache_reuses_matrices():
    g = random_graph(10, 0.3, 0)
    c = SubjectCache(g)
    assert c.sim(2) is c.sim(2)
    assert c.adj(1) is c.adj(1)
