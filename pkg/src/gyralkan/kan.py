"""Kolmogorov-Arnold layer: per-edge B-spline expansions plus a SiLU base path.

Layout follows the efficient-kan convention: for input ``x`` of width
``d_in`` the output is

    y_j = sum_i base_weight[j, i] * silu(x_i)
              + spline_weight[j, i] * sum_m spline_coef[j, i, m] * B_m(x_i)

with ``B_m`` the order-``p`` B-splines on a uniform knot vector that extends
``p`` intervals past each end of ``[g_min, g_max]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SplineGrid:
    g_min: float = -1.0
    g_max: float = 1.0
    intervals: int = 5
    order: int = 3

    def __post_init__(self):
        if self.intervals < 1 or self.order < 0 or not self.g_max > self.g_min:
            raise ValueError(f"invalid grid {self}")

    @property
    def h(self) -> float:
        return (self.g_max - self.g_min) / self.intervals

    @property
    def n_basis(self) -> int:
        return self.intervals + self.order

    @property
    def knots(self) -> np.ndarray:
        p = self.order
        return np.arange(-p, self.intervals + p + 1, dtype=np.float64) * self.h + self.g_min


def _local_bases(x: np.ndarray, grid: SplineGrid, with_derivative: bool):
    """Uniform-knot Cox-de Boor restricted to the ``p+1`` bases that can be non-zero.

    Returns basis values (and derivatives) with trailing axis ``G + p``;
    inputs outside ``[t_0, t_last)`` of the extended knots give all zeros.
    """
    p, h = grid.order, grid.h
    knots = grid.knots
    n_int = len(knots) - 1
    u = (x - knots[0]) / h
    j = np.floor(u)
    valid = (j >= 0) & (j < n_int) & np.isfinite(u)
    j = np.where(valid, j, 0).astype(np.int64)
    f = np.where(valid, u - j, 0.0)
    vals = [np.where(valid, 1.0, 0.0)]
    lower = vals
    for q in range(1, p + 1):
        lower = vals
        new = []
        for r in range(q + 1):
            term = 0.0
            if r >= 1:
                term = term + (f + q - r) / q * vals[r - 1]
            if r < q:
                term = term + (r + 1 - f) / q * vals[r]
            new.append(term)
        vals = new
    n_basis = grid.n_basis
    shape = x.shape + (n_basis + 2 * p + 1,)
    cols = j[..., None] + np.arange(p + 1)
    out = np.zeros(shape)
    np.put_along_axis(out, cols, np.stack(vals, axis=-1), axis=-1)
    b = out[..., p:p + n_basis]
    if not with_derivative:
        return b, None
    if p == 0:
        return b, np.zeros_like(b)
    # B'_{m,p} = (B_{m,p-1} - B_{m+1,p-1}) / h on a uniform grid
    dvals = []
    for r in range(p + 1):
        left = lower[r - 1] if r >= 1 else 0.0
        right = lower[r] if r < p else 0.0
        dvals.append((left - right) / h)
    dout = np.zeros(shape)
    np.put_along_axis(dout, cols, np.stack(dvals, axis=-1), axis=-1)
    return b, dout[..., p:p + n_basis]


def bspline_basis(x, grid: SplineGrid) -> np.ndarray:
    """Basis values at ``x`` (scalar or array); trailing axis has length ``G + p``."""
    return _local_bases(np.asarray(x, dtype=np.float64), grid, False)[0]


def bspline_basis_and_derivative(x, grid: SplineGrid) -> tuple[np.ndarray, np.ndarray]:
    return _local_bases(np.asarray(x, dtype=np.float64), grid, True)


def silu(x):
    return x / (1.0 + np.exp(-x))


def silu_grad(x):
    s = 1.0 / (1.0 + np.exp(-x))
    return s * (1.0 + x * (1.0 - s))


@dataclass
class ParameterGradients:
    spline_coef: np.ndarray
    base_weight: np.ndarray
    spline_weight: np.ndarray
    x: np.ndarray

    def params(self) -> dict[str, np.ndarray]:
        return {"spline_coef": self.spline_coef, "base_weight": self.base_weight,
                "spline_weight": self.spline_weight}


@dataclass
class KanLayer:
    spline_coef: np.ndarray  # (d_out, d_in, G+p)
    base_weight: np.ndarray  # (d_out, d_in)
    spline_weight: np.ndarray  # (d_out, d_in)
    grid: SplineGrid = field(default_factory=SplineGrid)

    PARAM_NAMES = ("spline_coef", "base_weight", "spline_weight")

    def __post_init__(self):
        d_out, d_in = self.base_weight.shape
        if self.spline_weight.shape != (d_out, d_in):
            raise ValueError(f"spline_weight shape {self.spline_weight.shape} != {(d_out, d_in)}")
        if self.spline_coef.shape != (d_out, d_in, self.grid.n_basis):
            raise ValueError(f"spline_coef shape {self.spline_coef.shape} != {(d_out, d_in, self.grid.n_basis)}")

    @property
    def d_in(self) -> int:
        return self.base_weight.shape[1]

    @property
    def d_out(self) -> int:
        return self.base_weight.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.PARAM_NAMES}

    def copy(self) -> "KanLayer":
        return KanLayer(self.spline_coef.copy(), self.base_weight.copy(), self.spline_weight.copy(), self.grid)

    @classmethod
    def zeros(cls, d_in: int, d_out: int, grid: SplineGrid | None = None) -> "KanLayer":
        grid = grid or SplineGrid()
        return cls(np.zeros((d_out, d_in, grid.n_basis)), np.zeros((d_out, d_in)),
                   np.zeros((d_out, d_in)), grid)

    def effective_coef(self) -> np.ndarray:
        return self.spline_weight[..., None] * self.spline_coef

    def forward(self, x: np.ndarray, keep_cache: bool = False):
        """Batched forward over the last axis of ``x``.

        Returns ``y`` or ``(y, cache)`` when ``keep_cache`` is set; the cache
        feeds :meth:`backward`. Without the cache every row is reduced on its
        own, so results are bit-identical however inputs are batched; the
        training path trades that for a single matrix product.
        """
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.d_in:
            raise ValueError(f"expected input width {self.d_in}, got {x.shape[-1]}")
        lead = x.shape[:-1]
        x2 = x.reshape(-1, self.d_in)
        if keep_cache:
            b, db = bspline_basis_and_derivative(x2, self.grid)
        else:
            b, db = bspline_basis(x2, self.grid), None
        act = silu(x2)
        flat_b = b.reshape(len(x2), -1)
        eff = self.effective_coef().reshape(self.d_out, -1)
        if keep_cache:
            y = act @ self.base_weight.T
            y += flat_b @ eff.T
        else:
            y = _rowwise(act, self.base_weight) + _rowwise(flat_b, eff)
        y = y.reshape(lead + (self.d_out,))
        if keep_cache:
            return y, (x2, act, b, db, lead)
        return y

    def backward(self, cache, grad_out: np.ndarray) -> ParameterGradients:
        """Gradients summed over the batch; ``x`` gradient keeps the batch shape."""
        x2, act, b, db, lead = cache
        g = np.asarray(grad_out, dtype=np.float64).reshape(-1, self.d_out)
        if g.shape[0] != x2.shape[0]:
            raise ValueError(f"grad_out batch {g.shape[0]} != input batch {x2.shape[0]}")
        n_b = self.grid.n_basis
        base_w = g.T @ act
        # (d_out, d_in*n_b): sum_s g[s, j] * B[s, i, m]
        gb = (g.T @ b.reshape(len(x2), -1)).reshape(self.d_out, self.d_in, n_b)
        coef_g = self.spline_weight[..., None] * gb
        spline_w = np.einsum("jim,jim->ji", gb, self.spline_coef)
        eff = self.effective_coef()
        # dy_j/dx_i = bw[j,i] silu'(x_i) + sum_m eff[j,i,m] B'_m(x_i)
        gx = (g @ self.base_weight) * silu_grad(x2)
        ge = (g @ eff.reshape(self.d_out, -1)).reshape(len(x2), self.d_in, n_b)
        gx += (ge * db).sum(axis=-1)
        return ParameterGradients(coef_g, base_w, spline_w, gx.reshape(lead + (self.d_in,)))


def _rowwise(a: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``a @ w.T`` one row at a time, so each row's result does not depend on the batch."""
    if len(a) == 0:
        return np.zeros((0, w.shape[0]))
    return np.stack([w @ row for row in a])


def kan_forward(layer: KanLayer, x: np.ndarray) -> np.ndarray:
    return layer.forward(x)


def kan_backward(layer: KanLayer, x: np.ndarray, grad_out: np.ndarray) -> ParameterGradients:
    _, cache = layer.forward(x, keep_cache=True)
    return layer.backward(cache, grad_out)


def xavier_init(d_in: int, d_out: int, grid: SplineGrid | None = None, rng_seed=0,
                spline_scale: float = 0.1) -> KanLayer:
    """Uniform Xavier init; spline coefficients use ``spline_scale`` times the bound."""
    if d_in < 1 or d_out < 1:
        raise ValueError(f"layer dims must be positive, got ({d_in}, {d_out})")
    grid = grid or SplineGrid()
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    bound = np.sqrt(6.0 / (d_in + d_out))
    base = rng.uniform(-bound, bound, size=(d_out, d_in))
    sw = rng.uniform(-bound, bound, size=(d_out, d_in))
    coef = rng.uniform(-bound, bound, size=(d_out, d_in, grid.n_basis)) * spline_scale
    return KanLayer(coef, base, sw, grid)
