"""Lagrangians with their symbolic partial derivatives."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .expr import Expr, ExprLike, as_expr, diff, variables
from .domain import broadcast_eval

__all__ = ["LagrangianSpec", "ConvexityResult", "build", "convexity_check"]


def x_names(n):
    return [f"x{k}" for k in range(1, n + 1)]


def y_names(N):
    return [f"y{j}" for j in range(1, N + 1)]


def z_names(n, N):
    """Gradient slot names in row-major (component, axis) order."""
    return [f"z{j}{k}" for j in range(1, N + 1) for k in range(1, n + 1)]


@dataclass(frozen=True)
class LagrangianSpec:
    n: int
    N: int
    f: Expr
    fy: tuple[Expr, ...]
    fz: tuple[tuple[Expr, ...], ...]
    fzz: tuple[tuple[Expr, ...], ...]

    @cached_property
    def fzx(self) -> tuple[tuple[tuple[Expr, ...], ...], ...]:
        """``d f_{z_jk} / d x_m`` indexed ``[j][k][m]``."""
        xs = x_names(self.n)
        return tuple(tuple(tuple(diff(e, x) for x in xs) for e in row) for row in self.fz)

    @cached_property
    def fzy(self) -> tuple[tuple[tuple[Expr, ...], ...], ...]:
        """``d f_{z_jk} / d y_l`` indexed ``[j][k][l]``."""
        ys = y_names(self.N)
        return tuple(tuple(tuple(diff(e, y) for y in ys) for e in row) for row in self.fz)

    def env(self, x, y, z) -> dict:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        z = np.asarray(z, dtype=float)
        z = z.reshape(z.shape[:-2] + (self.N * self.n,))
        env = {name: x[..., k] for k, name in enumerate(x_names(self.n))}
        env.update({name: y[..., j] for j, name in enumerate(y_names(self.N))})
        env.update({name: z[..., a] for a, name in enumerate(z_names(self.n, self.N))})
        return env

    @staticmethod
    def _batch_shape(x, y, z):
        return np.broadcast_shapes(np.shape(x)[:-1], np.shape(y)[:-1], np.shape(z)[:-2])

    def value(self, x, y, z, errors="raise") -> np.ndarray:
        shape = self._batch_shape(x, y, z)
        return np.array(broadcast_eval(self.f, self.env(x, y, z), shape, errors))

    def grad_y(self, x, y, z, errors="raise") -> np.ndarray:
        shape = self._batch_shape(x, y, z)
        env = self.env(x, y, z)
        return np.stack([broadcast_eval(e, env, shape, errors) for e in self.fy], axis=-1)

    def grad_z(self, x, y, z, errors="raise") -> np.ndarray:
        """Shape ``batch + (N, n)``."""
        shape = self._batch_shape(x, y, z)
        env = self.env(x, y, z)
        rows = [np.stack([broadcast_eval(e, env, shape, errors) for e in row], axis=-1)
                for row in self.fz]
        return np.stack(rows, axis=-2)

    def hess_z(self, x, y, z, errors="raise") -> np.ndarray:
        """Shape ``batch + (N*n, N*n)`` in row-major slot order."""
        shape = self._batch_shape(x, y, z)
        env = self.env(x, y, z)
        rows = [np.stack([broadcast_eval(e, env, shape, errors) for e in row], axis=-1)
                for row in self.fzz]
        return np.stack(rows, axis=-2)


def build(n: int, N: int, f: ExprLike) -> LagrangianSpec:
    """Parse ``f`` if needed and precompute ``f_y``, ``f_z`` and ``f_zz``."""
    if n < 1 or N < 1:
        raise ValueError("dimensions must be positive")
    f = as_expr(f, n, N, allowed_vars="xyz")
    legal = set(x_names(n)) | set(y_names(N)) | set(z_names(n, N))
    extra = variables(f) - legal
    if extra:
        raise ValueError(f"illegal variables in Lagrangian: {sorted(extra)}")
    fy = tuple(diff(f, y) for y in y_names(N))
    zs = z_names(n, N)
    fz = tuple(tuple(diff(f, zs[j * n + k]) for k in range(n)) for j in range(N))
    flat_fz = [e for row in fz for e in row]
    fzz = tuple(tuple(diff(e, zb) for zb in zs) for e in flat_fz)
    return LagrangianSpec(n=n, N=N, f=f, fy=fy, fz=fz, fzz=fzz)


@dataclass(frozen=True)
class ConvexityResult:
    min_eigenvalue: float
    is_psd: bool
    witness: dict | None
    num_samples: int
    tol: float

    def to_dict(self) -> dict:
        return {
            "min_eigenvalue": self.min_eigenvalue,
            "is_psd": self.is_psd,
            "witness": self.witness,
            "num_samples": self.num_samples,
            "tol": self.tol,
        }


_EIGEN_LIMIT = 8


def _psd_by_cholesky(H: np.ndarray, tol: float) -> np.ndarray:
    """Per-matrix PSD test via Cholesky of ``H + tol*I`` (shifted)."""
    size = H.shape[-1]
    shifted = H + (tol + 1e-300) * np.eye(size)
    ok = np.ones(H.shape[0], dtype=bool)
    for i in range(H.shape[0]):
        try:
            np.linalg.cholesky(shifted[i])
        except np.linalg.LinAlgError:
            ok[i] = False
    return ok


def convexity_check(L: LagrangianSpec, x, y, z, tol: float = 1e-9) -> ConvexityResult:
    """Sample the z-Hessian of ``f`` at the points ``(x[i], y[i], z[i])``.

    ``x`` has shape ``(S, n)``, ``y`` shape ``(S, N)`` and ``z`` shape
    ``(S, N, n)``.  The result certifies the samples only; it is not a proof
    of convexity.
    """
    x = np.asarray(x, dtype=float).reshape(-1, L.n)
    y = np.asarray(y, dtype=float).reshape(-1, L.N)
    z = np.asarray(z, dtype=float).reshape(-1, L.N, L.n)
    H = L.hess_z(x, y, z)
    H = 0.5 * (H + np.swapaxes(H, -1, -2))
    eig = np.linalg.eigvalsh(H)[:, 0]
    if H.shape[-1] <= _EIGEN_LIMIT:
        ok = eig >= -tol
    else:
        ok = _psd_by_cholesky(H, tol)
    witness = None
    if not ok.all():
        i = int(np.flatnonzero(~ok)[0])
        witness = {
            "x": x[i].tolist(),
            "y": y[i].tolist(),
            "z": z[i].tolist(),
            "eigenvalue": float(eig[i]),
        }
    return ConvexityResult(
        min_eigenvalue=float(eig.min()),
        is_psd=bool(ok.all()),
        witness=witness,
        num_samples=int(len(eig)),
        tol=float(tol),
    )
