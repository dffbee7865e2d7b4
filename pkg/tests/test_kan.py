import numpy as np
import pytest

from gyralkan.kan import (KanLayer, SplineGrid, bspline_basis, bspline_basis_and_derivative, kan_backward,
                          kan_forward, silu, xavier_init)
from oracles import central_diff, cox_de_boor, kan_forward_loops, max_rel_err


def test_knot_vector():
    g = SplineGrid()
    t = g.knots
    assert len(t) == g.intervals + 2 * g.order + 1
    np.testing.assert_allclose(np.diff(t), 0.4)
    assert t[g.order] == -1.0 and t[-g.order - 1] == pytest.approx(1.0)


@pytest.mark.parametrize("grid", [SplineGrid(), SplineGrid(-2, 3, 7, 2), SplineGrid(0, 1, 4, 1)])
def test_partition_of_unity_and_positivity(grid):
    x = np.linspace(grid.g_min, grid.g_max, 1001)
    b = bspline_basis(x, grid)
    assert b.shape == (1001, grid.n_basis)
    assert np.max(np.abs(b.sum(-1) - 1.0)) < 1e-12
    assert np.all(b >= 0)
    mid = grid.g_min + (grid.g_max - grid.g_min) / 2
    assert abs(bspline_basis(mid, grid).sum() - 1.0) < 1e-12


@pytest.mark.parametrize("grid", [SplineGrid(), SplineGrid(-2, 3, 7, 2)])
def test_basis_matches_recursive_definition(grid):
    rng = np.random.default_rng(0)
    t = grid.knots
    xs = rng.uniform(t[0] - 0.5, t[-1] + 0.5, 300)
    ref = np.array([[cox_de_boor(m, grid.order, x, t) for m in range(grid.n_basis)] for x in xs])
    assert np.max(np.abs(bspline_basis(xs, grid) - ref)) < 1e-12


def test_basis_vanishes_far_outside():
    assert not bspline_basis(np.array([-50.0, 50.0]), SplineGrid()).any()


def test_basis_derivative_matches_finite_differences():
    grid = SplineGrid()
    x = np.random.default_rng(1).uniform(-2.1, 2.1, 200)
    _, db = bspline_basis_and_derivative(x, grid)
    h = 1e-6
    fd = (bspline_basis(x + h, grid) - bspline_basis(x - h, grid)) / (2 * h)
    assert np.max(np.abs(db - fd)) < 1e-6


def test_zero_layer_gives_zero():
    layer = KanLayer.zeros(4, 3)
    np.testing.assert_array_equal(kan_forward(layer, np.ones(4)), np.zeros(3))


def test_silu_only_edge():
    layer = KanLayer.zeros(1, 1)
    layer.base_weight[:] = 1.0
    assert kan_forward(layer, np.array([0.0]))[0] == 0.0
    assert kan_forward(layer, np.array([1.5]))[0] == pytest.approx(silu(1.5))


@pytest.mark.parametrize("seed", range(4))
def test_forward_matches_scalar_loops(seed):
    rng = np.random.default_rng(seed)
    layer = xavier_init(3, 4, rng_seed=seed)
    layer.spline_coef[:] = rng.normal(size=layer.spline_coef.shape)
    x = rng.uniform(-2.5, 2.5, 3)
    np.testing.assert_allclose(kan_forward(layer, x), kan_forward_loops(layer, x), rtol=0, atol=1e-12)


def test_batched_forward_equals_rowwise():
    rng = np.random.default_rng(3)
    layer = xavier_init(5, 6, rng_seed=3)
    x = rng.normal(size=(7, 5))
    batched = kan_forward(layer, x)
    for i in range(7):
        np.testing.assert_array_equal(batched[i], kan_forward(layer, x[i]))


def test_forward_is_linear_in_each_parameter_group():
    rng = np.random.default_rng(4)
    a, b = xavier_init(3, 2, rng_seed=1), xavier_init(3, 2, rng_seed=2)
    x = rng.normal(size=3)
    for name in ("spline_coef", "base_weight"):
        other = [n for n in ("spline_coef", "base_weight") if n != name][0]
        la, lb, lab = a.copy(), a.copy(), a.copy()
        setattr(lb, name, getattr(b, name).copy())
        setattr(lab, name, getattr(a, name) + getattr(b, name))
        zero = a.copy()
        setattr(zero, name, np.zeros_like(getattr(a, name)))
        lhs = kan_forward(lab, x) - kan_forward(zero, x)
        rhs = (kan_forward(la, x) - kan_forward(zero, x)) + (kan_forward(lb, x) - kan_forward(zero, x))
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)
        assert other != name
    # spline_weight scales the spline branch linearly
    l2 = a.copy()
    l2.spline_weight = 2 * a.spline_weight
    l0 = a.copy()
    l0.spline_weight = np.zeros_like(a.spline_weight)
    np.testing.assert_allclose(kan_forward(l2, x) - kan_forward(l0, x), 2 * (kan_forward(a, x) - kan_forward(l0, x)))


def test_backward_zero_grad():
    layer = xavier_init(3, 2, rng_seed=0)
    g = kan_backward(layer, np.ones(3), np.zeros(2))
    for arr in (g.spline_coef, g.base_weight, g.spline_weight, g.x):
        assert not arr.any()


def test_coef_gradient_closed_form():
    layer = xavier_init(3, 2, rng_seed=5)
    x = np.array([0.3, -0.7, 1.2])
    go = np.array([0.5, -2.0])
    g = kan_backward(layer, x, go)
    B = bspline_basis(x, layer.grid)
    expected = go[:, None, None] * layer.spline_weight[..., None] * B[None]
    np.testing.assert_allclose(g.spline_coef, expected, rtol=0, atol=1e-15)


def _check_layer_gradients(layer, x, go):
    grads = kan_backward(layer, x, go)
    f = lambda: float(np.sum(go * kan_forward(layer, x)))  # noqa: E731
    worst = 0.0
    for name in KanLayer.PARAM_NAMES:
        fd = central_diff(f, getattr(layer, name))
        worst = max(worst, max_rel_err(getattr(grads, name), fd))
    fdx = central_diff(f, x)
    return max(worst, max_rel_err(grads.x, fdx))


@pytest.mark.parametrize("seed", range(10))
def test_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    d_in, d_out = rng.integers(1, 6, 2)
    layer = xavier_init(int(d_in), int(d_out), rng_seed=seed)
    layer.spline_coef[:] = rng.normal(size=layer.spline_coef.shape)
    x = rng.uniform(-2.0, 2.0, size=(3, int(d_in)))
    go = rng.normal(size=(3, int(d_out)))
    assert _check_layer_gradients(layer, x, go) < 1e-4


def test_xavier_determinism_and_bounds():
    a = xavier_init(8, 5, rng_seed=42)
    b = xavier_init(8, 5, rng_seed=42)
    for n in KanLayer.PARAM_NAMES:
        assert np.array_equal(getattr(a, n), getattr(b, n))
    bound = np.sqrt(6 / 13)
    assert np.all(np.abs(a.base_weight) <= bound)
    assert np.all(np.abs(a.spline_weight) <= bound)
    assert np.all(np.abs(a.spline_coef) <= 0.1 * bound)


def test_xavier_mean_within_three_sigma():
    layer = xavier_init(100, 100, rng_seed=7)
    w = layer.base_weight.ravel()
    bound = np.sqrt(6 / 200)
    sigma = bound / np.sqrt(3) / np.sqrt(w.size)
    assert abs(w.mean()) < 3 * sigma


def test_layer_shape_validation():
    with pytest.raises(ValueError):
        KanLayer(np.zeros((2, 3, 7)), np.zeros((2, 3)), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        kan_forward(KanLayer.zeros(3, 2), np.zeros(4))
