"""Box domains, tensor grids, discrete gradients and quadrature."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .expr import DomainError, Expr, ExprLike, as_expr, evaluate

__all__ = [
    "BoxDomain",
    "Grid",
    "GridFunction",
    "broadcast_eval",
    "sample",
    "discrete_gradient",
    "quadrature",
    "make_bubble",
]


def _intervals(value) -> tuple[tuple[float, float], ...]:
    out = []
    for iv in value:
        lo, hi = iv
        out.append((float(lo), float(hi)))
    return tuple(out)


@dataclass(frozen=True)
class BoxDomain:
    """Working box ``omega`` strictly inside the enclosing box ``b0``."""

    b0: tuple[tuple[float, float], ...]
    omega: tuple[tuple[float, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "b0", _intervals(self.b0))
        object.__setattr__(self, "omega", _intervals(self.omega))
        if len(self.b0) != len(self.omega) or not self.omega:
            raise ValueError("b0 and omega must have the same positive number of axes")
        for k, ((lo0, hi0), (a, b)) in enumerate(zip(self.b0, self.omega), 1):
            if not (lo0 < a < b < hi0):
                raise ValueError(
                    f"axis {k}: omega [{a}, {b}] must lie strictly inside b0 [{lo0}, {hi0}]"
                )

    @property
    def n(self) -> int:
        return len(self.omega)


@dataclass(frozen=True)
class Grid:
    """Tensor grid of ``resolution[k]`` nodes per axis.

    The grid covers the closure of omega, or the enclosing box b0 when
    ``on_b0`` is set (used to check stationarity on b0).
    """

    domain: BoxDomain
    resolution: tuple[int, ...]
    on_b0: bool = False

    def __post_init__(self):
        res = self.resolution
        if isinstance(res, (int, np.integer)):
            res = (int(res),) * self.domain.n
        res = tuple(int(m) for m in res)
        if len(res) != self.domain.n:
            raise ValueError(f"need {self.domain.n} resolutions, got {len(res)}")
        if any(m < 3 for m in res):
            raise ValueError("every axis needs at least 3 nodes")
        object.__setattr__(self, "resolution", res)

    @property
    def n(self) -> int:
        return self.domain.n

    @property
    def shape(self) -> tuple[int, ...]:
        return self.resolution

    @property
    def size(self) -> int:
        return int(np.prod(self.resolution))

    @property
    def extent(self) -> tuple[tuple[float, float], ...]:
        return self.domain.b0 if self.on_b0 else self.domain.omega

    @cached_property
    def spacing(self) -> tuple[float, ...]:
        return tuple((b - a) / (m - 1) for (a, b), m in zip(self.extent, self.resolution))

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        # a + i*h, with the last node pinned to b exactly
        out = []
        for (a, b), m in zip(self.extent, self.resolution):
            t = np.arange(m) / (m - 1)
            x = a + (b - a) * t
            x[-1] = b
            out.append(x)
        return tuple(out)

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.axes, indexing="ij"))

    @cached_property
    def points(self) -> np.ndarray:
        """Node coordinates, shape ``(size, n)`` in row-major node order."""
        return np.stack([c.ravel() for c in self.coords], axis=-1)

    def env(self) -> dict[str, np.ndarray]:
        return {f"x{k + 1}": c for k, c in enumerate(self.coords)}

    def max_spacing(self) -> float:
        return max(self.spacing)

    def unravel(self, flat_index: int) -> tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(flat_index, self.shape))

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        for k in range(self.n):
            idx = [slice(None)] * self.n
            idx[k] = 0
            mask[tuple(idx)] = True
            idx[k] = -1
            mask[tuple(idx)] = True
        return mask

    def interior_slice(self, layers: int) -> tuple[slice, ...]:
        return tuple(slice(layers, m - layers) for m in self.shape)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """``N`` component node values; ``values`` has shape ``(N, *grid.shape)``."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == self.grid.n:
            v = v[None]
        if v.shape[1:] != self.grid.shape:
            raise ValueError(f"values shape {v.shape} does not match grid {self.grid.shape}")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def N(self) -> int:
        return self.values.shape[0]

    def nodes(self) -> np.ndarray:
        """Node values as an array of shape ``(size, N)``."""
        return self.values.reshape(self.N, -1).T

    def __add__(self, other: "GridFunction") -> "GridFunction":
        if other.grid != self.grid:
            raise ValueError("grid mismatch")
        return GridFunction(self.grid, self.values + other.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        if other.grid != self.grid:
            raise ValueError("grid mismatch")
        return GridFunction(self.grid, self.values - other.values)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))


def broadcast_eval(e: Expr, env, shape, errors="raise") -> np.ndarray:
    """Evaluate ``e`` and broadcast the result to ``shape`` (constants included)."""
    value = evaluate(e, env, errors=errors)
    return np.broadcast_to(np.asarray(value, dtype=float), shape)


def sample(grid: Grid, e: ExprLike | Sequence[ExprLike]) -> GridFunction:
    """Evaluate one expression, or a list of them, at every grid node."""
    exprs = [e] if isinstance(e, (Expr, str, int, float)) else list(e)
    exprs = [as_expr(x, grid.n, max(1, len(exprs)), allowed_vars="x") for x in exprs]
    env = grid.env()
    rows = []
    for ex in exprs:
        try:
            rows.append(broadcast_eval(ex, env, grid.shape))
        except DomainError as err:
            node = None if err.index is None else grid.unravel(err.index)
            raise DomainError(f"{err.op} at node {node}", err.index) from None
    return GridFunction(grid, np.stack(rows))


def discrete_gradient(u: GridFunction) -> np.ndarray:
    """Nodal gradient array of shape ``(N, n, *grid.shape)``.

    Central differences in the interior and three-point one-sided
    differences on boundary faces; both are exact for quadratics.
    """
    grid = u.grid
    out = np.empty((u.N, grid.n) + grid.shape)
    for j in range(u.N):
        for k in range(grid.n):
            out[j, k] = np.gradient(u.values[j], grid.spacing[k], axis=k, edge_order=2)
    return out


def axis_gradient(values: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    """Same stencils as :func:`discrete_gradient` applied to a raw nodal array."""
    return np.gradient(values, grid.spacing[axis], axis=axis, edge_order=2)


def trapezoid_weights(grid: Grid) -> list[np.ndarray]:
    out = []
    for h, m in zip(grid.spacing, grid.shape):
        w = np.full(m, h)
        w[0] = w[-1] = 0.5 * h
        out.append(w)
    return out


def quadrature(values, grid: Grid) -> float:
    """Tensor-product composite trapezoid rule over omega.

    Axes are contracted last-to-first so the summation order is fixed.
    """
    v = np.asarray(values, dtype=float).reshape(grid.shape)
    for w in reversed(trapezoid_weights(grid)):
        v = v @ w
    return float(v)


def make_bubble(grid: Grid, modes: Sequence[int], amplitude) -> GridFunction:
    """Product-of-sines perturbation vanishing on every face of omega.

    ``amplitude`` is a scalar or one value per component.
    """
    modes = tuple(int(m) for m in modes)
    if len(modes) != grid.n or any(m < 1 for m in modes):
        raise ValueError("need one positive mode per axis")
    shape_fn = np.ones(grid.shape)
    for k, (m, (a, b)) in enumerate(zip(modes, grid.extent)):
        t = (grid.coords[k] - a) / (b - a)
        shape_fn = shape_fn * np.sin(m * np.pi * t)
    shape_fn[grid.boundary_mask] = 0.0
    amp = np.atleast_1d(np.asarray(amplitude, dtype=float))
    return GridFunction(grid, amp.reshape((-1,) + (1,) * grid.n) * shape_fn)
