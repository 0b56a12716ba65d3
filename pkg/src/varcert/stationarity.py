"""Euler-Lagrange residuals on grids and a 1-D extremal integrator."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import Grid, GridFunction, axis_gradient, broadcast_eval, discrete_gradient
from .lagrangian import LagrangianSpec

__all__ = [
    "ELResidual",
    "el_residual",
    "stationarity_threshold",
    "SingularHessianError",
    "StepUnderflowError",
    "Trajectory",
    "solve_el_ivp_1d",
    "integrate_batch",
    "hermite_eval",
]

# nodes at least this many layers inside the grid drive stationarity verdicts
INTERIOR_LAYERS = 2
COND_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class ELResidual:
    residual: GridFunction
    max_abs: float
    interior_max_abs: float

    def to_dict(self) -> dict:
        return {"max_abs": self.max_abs, "interior_max_abs": self.interior_max_abs}


def nodal_arrays(y: GridFunction):
    """``(x, y, z)`` at every node in batch-last layout."""
    grid = y.grid
    x = np.stack(grid.coords, axis=-1)
    yv = np.moveaxis(y.values, 0, -1)
    z = np.moveaxis(discrete_gradient(y), (0, 1), (-2, -1))
    return x, yv, z


def el_residual(L: LagrangianSpec, y: GridFunction) -> ELResidual:
    """Residual ``f_y - sum_k D_k f_{z_jk}`` per component.

    ``D_k`` differences the composed nodal values of ``f_{z_jk}`` with the
    same stencils as the discrete gradient.
    """
    grid = y.grid
    if y.N != L.N or grid.n != L.n:
        raise ValueError("dimension mismatch between Lagrangian and grid function")
    if min(grid.shape) < 2 * INTERIOR_LAYERS + 1:
        raise ValueError("el_residual needs at least 5 nodes per axis")
    x, yv, z = nodal_arrays(y)
    fy = L.grad_y(x, yv, z)
    fz = L.grad_z(x, yv, z)
    res = np.empty((L.N,) + grid.shape)
    for j in range(L.N):
        div = np.zeros(grid.shape)
        for k in range(L.n):
            div += axis_gradient(fz[..., j, k], grid, k)
        res[j] = fy[..., j] - div
    inner = res[(slice(None),) + grid.interior_slice(INTERIOR_LAYERS)]
    return ELResidual(
        residual=GridFunction(grid, res),
        max_abs=float(np.max(np.abs(res))),
        interior_max_abs=float(np.max(np.abs(inner))),
    )


def stationarity_threshold(grid: Grid, tol_el: float) -> float:
    h = grid.max_spacing()
    return max(10.0 * h * h, tol_el)


class SingularHessianError(ArithmeticError):
    """The z-Hessian is singular along an extremal."""

    def __init__(self, t: float):
        self.t = t
        super().__init__(f"singular f_zz at t = {t!r}")


class StepUnderflowError(ValueError):
    pass


def _acceleration(L: LagrangianSpec, t, Y, V, strict):
    """Solve ``f_zz y'' = f_y - f_zt - f_zy y'`` for each trajectory."""
    M, N = Y.shape
    x = np.full((M, 1), t)
    Z = V[:, :, None]
    env = L.env(x, Y, Z)
    shape = (M,)
    fy = L.grad_y(x, Y, Z, errors="nan")
    fzt = np.stack([broadcast_eval(L.fzx[j][0][0], env, shape, "nan") for j in range(N)], -1)
    fzy = np.stack(
        [np.stack([broadcast_eval(L.fzy[j][0][l], env, shape, "nan") for l in range(N)], -1)
         for j in range(N)],
        -2,
    )
    H = L.hess_z(x, Y, Z, errors="nan")
    rhs = fy - fzt - np.einsum("mjl,ml->mj", fzy, V)
    finite = np.isfinite(H).all(axis=(1, 2)) & np.isfinite(rhs).all(axis=1)
    bad = ~finite
    if finite.any():
        s = np.linalg.svd(H[finite], compute_uv=False)
        smax, smin = s[:, 0], s[:, -1]
        singular = (smin <= smax / COND_LIMIT) | (smin <= 1e-12 * (1.0 + smax))
        bad[np.flatnonzero(finite)[singular]] = True
    if bad.any() and strict:
        raise SingularHessianError(float(t))
    A = np.full((M, N), np.nan)
    ok = ~bad
    if ok.any():
        A[ok] = np.linalg.solve(H[ok], rhs[ok][..., None])[..., 0]
    return A


def integrate_batch(L: LagrangianSpec, t0: float, Y0, V0, t_end: float, step: float,
                    errors: str = "raise"):
    """Classic RK4 on the first order system for a batch of extremals.

    Returns ``(t, Y, V, A)`` with ``Y, V, A`` of shape ``(K+1, M, N)``.
    Trajectories that hit a singular Hessian become nan in ``errors="nan"``
    mode and raise :class:`SingularHessianError` otherwise.
    """
    if L.n != 1:
        raise ValueError("the extremal integrator is for one independent variable")
    span = float(t_end) - float(t0)
    if not (step > 0 and math.isfinite(step)) or span == 0.0:
        raise StepUnderflowError(f"bad step {step!r} for span {span!r}")
    K = math.ceil(abs(span) / step - 1e-9)
    if K > 10_000_000 or abs(span) / K < 1e-14 * max(1.0, abs(t0), abs(t_end)):
        raise StepUnderflowError(f"step {step!r} underflows span {span!r}")
    h = span / K
    strict = errors == "raise"
    Y = np.array(Y0, dtype=float, ndmin=2)
    V = np.array(V0, dtype=float, ndmin=2)
    t = t0 + h * np.arange(K + 1)
    t[-1] = t_end
    Ys = np.empty((K + 1,) + Y.shape)
    Vs = np.empty_like(Ys)
    As = np.empty_like(Ys)
    Ys[0], Vs[0] = Y, V
    with np.errstate(all="ignore"):
        A = _acceleration(L, t[0], Y, V, strict)
        As[0] = A
        for i in range(K):
            ti = t[i]
            k1y, k1v = V, A
            k2y = V + 0.5 * h * k1v
            k2v = _acceleration(L, ti + 0.5 * h, Y + 0.5 * h * k1y, k2y, strict)
            k3y = V + 0.5 * h * k2v
            k3v = _acceleration(L, ti + 0.5 * h, Y + 0.5 * h * k2y, k3y, strict)
            k4y = V + h * k3v
            k4v = _acceleration(L, ti + h, Y + h * k3y, k4y, strict)
            Y = Y + h / 6.0 * (k1y + 2 * k2y + 2 * k3y + k4y)
            V = V + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
            A = _acceleration(L, t[i + 1], Y, V, strict)
            Ys[i + 1], Vs[i + 1], As[i + 1] = Y, V, A
    return t, Ys, Vs, As


def hermite_eval(t, P, D, tq):
    """Cubic Hermite interpolation of per-trajectory data.

    ``t`` is ascending with shape ``(K+1,)``, ``P`` and ``D`` hold values and
    derivatives with shape ``(K+1, M, N)``; ``tq`` gives one query time per
    trajectory.  Queries outside ``[t[0], t[-1]]`` give nan.
    """
    tq = np.asarray(tq, dtype=float)
    M = P.shape[1]
    i = np.clip(np.searchsorted(t, tq, side="right") - 1, 0, len(t) - 2)
    h = t[i + 1] - t[i]
    s = ((tq - t[i]) / h)[:, None]
    cols = np.arange(M)
    p0, p1 = P[i, cols], P[i + 1, cols]
    d0, d1 = D[i, cols], D[i + 1, cols]
    s2, s3 = s * s, s * s * s
    hh = h[:, None]
    out = ((2 * s3 - 3 * s2 + 1) * p0 + (s3 - 2 * s2 + s) * hh * d0
           + (-2 * s3 + 3 * s2) * p1 + (s3 - s2) * hh * d1)
    outside = (tq < t[0]) | (tq > t[-1])
    out[outside] = np.nan
    return out


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Dense extremal samples; ``y, yp, ypp`` have shape ``(K+1, N)``."""

    t: np.ndarray
    y: np.ndarray
    yp: np.ndarray
    ypp: np.ndarray

    def _ascending(self):
        if self.t[-1] >= self.t[0]:
            return self.t, self.y, self.yp, self.ypp
        return self.t[::-1], self.y[::-1], self.yp[::-1], self.ypp[::-1]

    def _query(self, P, D, s):
        t, *_ = self._ascending()
        s = np.asarray(s, dtype=float)
        flat = s.reshape(-1)
        if np.any((flat < t[0] - 1e-12) | (flat > t[-1] + 1e-12)):
            raise ValueError("query outside the integrated interval")
        flat = np.clip(flat, t[0], t[-1])
        Pm = np.broadcast_to(P[:, None, :], (len(t), flat.size, P.shape[-1]))
        Dm = np.broadcast_to(D[:, None, :], Pm.shape)
        out = hermite_eval(t, Pm, Dm, flat)
        return out.reshape(s.shape + (P.shape[-1],))

    def __call__(self, s):
        t, y, yp, _ = self._ascending()
        return self._query(y, yp, s)

    def derivative(self, s):
        t, _, yp, ypp = self._ascending()
        return self._query(yp, ypp, s)

    def on_grid(self, grid: Grid) -> GridFunction:
        vals = self(grid.axes[0])
        return GridFunction(grid, vals.T)


def solve_el_ivp_1d(L: LagrangianSpec, base_t: float, y_base, slope_base,
                    t_end: float, step: float) -> Trajectory:
    """Integrate the Euler-Lagrange system from ``(base_t, y_base, slope_base)``.

    Raises :class:`SingularHessianError` at the first stage where ``f_zz``
    becomes singular (condition number at least 1e12).
    """
    y_base = np.atleast_1d(np.asarray(y_base, dtype=float))
    slope_base = np.atleast_1d(np.asarray(slope_base, dtype=float))
    if y_base.shape != (L.N,) or slope_base.shape != (L.N,):
        raise ValueError(f"base data must have {L.N} components")
    t, Y, V, A = integrate_batch(L, base_t, y_base[None], slope_base[None], t_end, step)
    return Trajectory(t=t, y=Y[:, 0], yp=V[:, 0], ypp=A[:, 0])
