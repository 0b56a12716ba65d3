"""Families of stationary functions and the slope fields built from them.

A family maps a parameter vector ``lam`` (one entry per dependent variable)
to a stationary function ``phi(., lam)``.  Inverting ``phi(x, lam) = y`` for
``lam`` gives the member through ``(x, y)`` and its gradient is the slope
field ``theta(x, y)``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .domain import Grid, GridFunction, broadcast_eval
from .expr import Expr, ExprLike, as_expr, diff
from .lagrangian import LagrangianSpec
from .stationarity import hermite_eval, integrate_batch

__all__ = [
    "ExpressionFamily",
    "ShootingFamily",
    "SlopeField",
    "Inversion",
    "TubeCoverage",
    "FieldError",
    "NoConvergence",
    "SingularJacobian",
    "LambdaOutOfBall",
    "UncoveredError",
    "StencilError",
    "tube_offsets",
    "tube_samples",
    "tube_coverage",
]

OK, NO_CONVERGENCE, SINGULAR, OUT_OF_BALL = 0, 1, 2, 3
STATUS_NAMES = {OK: "ok", NO_CONVERGENCE: "no_convergence", SINGULAR: "singular_jacobian",
                OUT_OF_BALL: "lambda_out_of_ball"}
JACOBIAN_COND_LIMIT = 1e12


class FieldError(ArithmeticError):
    def __init__(self, message, index=None):
        self.index = index
        super().__init__(message if index is None else f"{message} (point {index})")


class NoConvergence(FieldError):
    pass


class SingularJacobian(FieldError):
    pass


class LambdaOutOfBall(FieldError):
    pass


class UncoveredError(FieldError):
    pass


class StencilError(FieldError):
    pass


_ERRORS = {NO_CONVERGENCE: NoConvergence, SINGULAR: SingularJacobian,
           OUT_OF_BALL: LambdaOutOfBall}


# ---------------------------------------------------------------------------
# families

@dataclass(frozen=True)
class ExpressionFamily:
    """Closed-form family ``phi_j(x, lam)`` over x- and l-variables."""

    phi: tuple[Expr, ...]
    n: int
    N: int
    r: float
    kind = "expression"

    def __post_init__(self):
        phi = tuple(as_expr(p, self.n, self.N, allowed_vars="xl") for p in self.phi)
        if len(phi) != self.N:
            raise ValueError(f"family needs {self.N} component expressions, got {len(phi)}")
        if not self.r > 0:
            raise ValueError("family radius r must be positive")
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "r", float(self.r))

    @classmethod
    def from_strings(cls, phi: Sequence[ExprLike] | ExprLike, n: int, N: int, r: float):
        if isinstance(phi, (str, Expr)):
            phi = [phi]
        return cls(tuple(phi), n, N, r)

    @cached_property
    def dphi_dx(self) -> tuple[tuple[Expr, ...], ...]:
        return tuple(tuple(diff(p, f"x{k}") for k in range(1, self.n + 1)) for p in self.phi)

    @property
    def dphi_dl(self) -> tuple[tuple[Expr, ...], ...]:
        """Symbolic parameter Jacobian; used as a cross-check only."""
        return tuple(tuple(diff(p, f"l{j}") for j in range(1, self.N + 1)) for p in self.phi)

    def _env(self, x, lam):
        env = {f"x{k + 1}": x[..., k] for k in range(self.n)}
        env.update({f"l{j + 1}": lam[..., j] for j in range(self.N)})
        return env

    def evaluate(self, x, lam, errors="nan") -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lam = np.asarray(lam, dtype=float)
        shape = np.broadcast_shapes(x.shape[:-1], lam.shape[:-1])
        env = self._env(x, lam)
        return np.stack([broadcast_eval(p, env, shape, errors) for p in self.phi], -1)

    def gradient_x(self, x, lam, errors="nan") -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lam = np.asarray(lam, dtype=float)
        shape = np.broadcast_shapes(x.shape[:-1], lam.shape[:-1])
        env = self._env(x, lam)
        rows = [np.stack([broadcast_eval(e, env, shape, errors) for e in row], -1)
                for row in self.dphi_dx]
        return np.stack(rows, -2)

    def member(self, grid: Grid, lam) -> GridFunction:
        lam = np.broadcast_to(np.asarray(lam, dtype=float), (self.N,))
        x = np.stack(grid.coords, axis=-1)
        vals = self.evaluate(x, np.broadcast_to(lam, grid.shape + (self.N,)), errors="raise")
        return GridFunction(grid, np.moveaxis(vals, -1, 0))

    def describe(self) -> dict:
        return {"kind": self.kind, "phi": [str(p) for p in self.phi], "r": self.r}


@dataclass(frozen=True)
class ShootingFamily:
    """Extremals of a one-dimensional problem shot from the lower face of b0.

    Every member starts from ``y_base`` at ``base_t`` with outward normal
    derivative ``lam`` there, i.e. ``phi'(base_t) = -lam``.
    """

    lagrangian: LagrangianSpec
    base_t: float
    y_base: tuple[float, ...]
    t_end: float
    r: float
    step: float
    kind = "shooting"

    def __post_init__(self):
        if self.lagrangian.n != 1:
            raise ValueError("shooting families need n = 1")
        y_base = tuple(float(v) for v in np.atleast_1d(self.y_base))
        if len(y_base) != self.lagrangian.N:
            raise ValueError("y_base must have N components")
        if not self.t_end > self.base_t:
            raise ValueError("t_end must exceed base_t")
        if not self.r > 0:
            raise ValueError("family radius r must be positive")
        object.__setattr__(self, "y_base", y_base)

    @property
    def n(self) -> int:
        return 1

    @property
    def N(self) -> int:
        return self.lagrangian.N

    def _members(self, x, lam, errors):
        x = np.asarray(x, dtype=float).reshape(-1, 1)
        lam = np.asarray(lam, dtype=float).reshape(-1, self.N)
        M = max(len(x), len(lam))
        x = np.broadcast_to(x, (M, 1))
        lam = np.broadcast_to(lam, (M, self.N))
        Y0 = np.broadcast_to(np.array(self.y_base), (M, self.N))
        t, Y, V, A = integrate_batch(self.lagrangian, self.base_t, Y0, -lam,
                                     self.t_end, self.step, errors=errors)
        tq = x[:, 0]
        phi = hermite_eval(t, Y, V, tq)
        dphi = hermite_eval(t, V, A, tq)
        if errors == "raise" and not (np.isfinite(phi).all() and np.isfinite(dphi).all()):
            raise ValueError("query outside the shooting interval")
        return phi, dphi

    def evaluate(self, x, lam, errors="nan") -> np.ndarray:
        return self._members(x, lam, errors)[0]

    def gradient_x(self, x, lam, errors="nan") -> np.ndarray:
        return self._members(x, lam, errors)[1][..., None]

    def member(self, grid: Grid, lam) -> GridFunction:
        lam = np.broadcast_to(np.asarray(lam, dtype=float), (grid.size, self.N))
        vals = self.evaluate(grid.points, lam, errors="raise")
        return GridFunction(grid, vals.T.reshape((self.N,) + grid.shape))

    def describe(self) -> dict:
        return {"kind": self.kind, "base_t": self.base_t, "y_base": list(self.y_base),
                "t_end": self.t_end, "step": self.step, "r": self.r}


# ---------------------------------------------------------------------------
# inversion

@dataclass(frozen=True, eq=False)
class Inversion:
    lam: np.ndarray
    status: np.ndarray

    @property
    def ok(self) -> np.ndarray:
        return self.status == OK

    def raise_first(self):
        bad = np.flatnonzero(self.status != OK)
        if bad.size:
            i = int(bad[0])
            code = int(self.status[i])
            raise _ERRORS[code](STATUS_NAMES[code], i)


@dataclass(frozen=True)
class SlopeField:
    family: ExpressionFamily | ShootingFamily
    lagrangian: LagrangianSpec
    tol_inv: float = 1e-10
    max_iter: int = 50
    fd_x: float = 1e-4
    fd_y: float = 1e-4

    def __post_init__(self):
        if (self.family.n, self.family.N) != (self.lagrangian.n, self.lagrangian.N):
            raise ValueError("family and Lagrangian dimensions differ")

    @property
    def n(self) -> int:
        return self.lagrangian.n

    @property
    def N(self) -> int:
        return self.lagrangian.N

    # -- Newton ---------------------------------------------------------

    def _residual(self, x, y, lam):
        g = self.family.evaluate(x, lam, errors="nan") - y
        norm = np.max(np.abs(g), axis=-1)
        norm[~np.isfinite(norm)] = np.inf
        return g, norm

    def _jacobian(self, x, lam):
        M, N = lam.shape
        s = 1e-6 * (1.0 + np.abs(lam))
        eye = np.eye(N)
        plus = lam[None] + eye[:, None, :] * s[None]
        minus = lam[None] - eye[:, None, :] * s[None]
        pts = np.concatenate([plus, minus]).reshape(-1, N)
        xs = np.tile(x, (2 * N, 1))
        vals = self.family.evaluate(xs, pts, errors="nan").reshape(2, N, M, N)
        J = (vals[0] - vals[1]) / (2.0 * s.T[:, :, None])  # (dir, M, comp)
        return np.transpose(J, (1, 2, 0))

    def _newton(self, x, y, lam0):
        M = len(x)
        lam = np.array(lam0, dtype=float).reshape(M, self.N)
        status = np.full(M, NO_CONVERGENCE)
        g, norm = self._residual(x, y, lam)
        done = np.zeros(M, dtype=bool)
        exact = norm == 0.0
        status[exact] = OK
        done[exact] = True
        tol = self.tol_inv
        for _ in range(self.max_iter):
            idx = np.flatnonzero(~done)
            if idx.size == 0:
                break
            # nan residual at the start means the point is outside phi's domain
            lost = ~np.isfinite(norm[idx])
            done[idx[lost]] = True
            idx = idx[~lost]
            if idx.size == 0:
                break
            J = self._jacobian(x[idx], lam[idx])
            finite = np.isfinite(J).all(axis=(1, 2))
            cond = np.full(idx.size, np.inf)
            if finite.any():
                with np.errstate(all="ignore"):
                    cond[finite] = np.linalg.cond(J[finite])
            singular = ~(cond < JACOBIAN_COND_LIMIT)
            within = norm[idx] <= tol
            status[idx[singular & within]] = OK
            status[idx[singular & ~within]] = SINGULAR
            done[idx[singular]] = True
            keep = ~singular
            idx, J = idx[keep], J[keep]
            if idx.size == 0:
                continue
            d = np.linalg.solve(J, g[idx][..., None])[..., 0]
            old = norm[idx]
            alpha = np.ones(idx.size)
            accepted = np.zeros(idx.size, dtype=bool)
            new_lam = lam[idx].copy()
            new_g = g[idx].copy()
            new_norm = old.copy()
            for _ in range(12):
                pend = np.flatnonzero(~accepted)
                if pend.size == 0:
                    break
                trial = lam[idx[pend]] - alpha[pend, None] * d[pend]
                tg, tn = self._residual(x[idx[pend]], y[idx[pend]], trial)
                good = tn < old[pend]
                sel = pend[good]
                new_lam[sel], new_g[sel], new_norm[sel] = trial[good], tg[good], tn[good]
                accepted[sel] = True
                alpha[pend[~good]] *= 0.5
            lam[idx], g[idx], norm[idx] = new_lam, new_g, new_norm
            # polishing step taken from within tolerance, or no further decrease
            finished = (old <= tol) | (new_norm == 0.0)
            stuck = ~accepted
            status[idx[stuck & (old <= tol)]] = OK
            status[idx[stuck & (old > tol)]] = NO_CONVERGENCE
            status[idx[finished & accepted]] = OK
            done[idx[stuck | finished]] = True
        ok = status == OK
        out = ok & ~(np.linalg.norm(lam, axis=-1) < self.family.r)
        status[out] = OUT_OF_BALL
        return lam, status

    def solve(self, x, y, guess=None) -> Inversion:
        """Batched inversion ``phi(x_i, lam_i) = y_i`` without raising.

        Points start from ``guess`` (default 0).  Points that fail are
        retried in order from the solution at the previous point.
        """
        x = np.asarray(x, dtype=float).reshape(-1, self.n)
        y = np.asarray(y, dtype=float).reshape(-1, self.N)
        if len(x) != len(y):
            raise ValueError("x and y must describe the same number of points")
        lam0 = np.zeros_like(y) if guess is None else np.broadcast_to(
            np.asarray(guess, dtype=float), y.shape)
        lam, status = self._newton(x, y, lam0)
        retry = (status == NO_CONVERGENCE) | (status == SINGULAR)
        for i in np.flatnonzero(retry):
            if i == 0 or status[i - 1] != OK or np.array_equal(lam0[i], lam[i - 1]):
                continue
            li, si = self._newton(x[i:i + 1], y[i:i + 1], lam[i - 1:i])
            lam[i], status[i] = li[0], si[0]
        return Inversion(lam=lam, status=status)

    def invert(self, x, y, guess=None) -> np.ndarray:
        """Parameter of the member through ``(x, y)``; raises on failure."""
        single = np.ndim(x) <= 1 and np.ndim(y) <= 1
        inv = self.solve(x, y, guess)
        inv.raise_first()
        return inv.lam[0] if single else inv.lam

    # -- field quantities ---------------------------------------------------

    def _theta(self, x, lam) -> np.ndarray:
        return self.family.gradient_x(x, lam, errors="raise")

    def quantities(self, x, y, guess=None):
        """``(inversion, theta, h, P)`` for a batch; failed points hold nan."""
        x = np.asarray(x, dtype=float).reshape(-1, self.n)
        y = np.asarray(y, dtype=float).reshape(-1, self.N)
        inv = self.solve(x, y, guess)
        M = len(x)
        theta = np.full((M, self.N, self.n), np.nan)
        h = np.full(M, np.nan)
        P = np.full((M, self.N, self.n), np.nan)
        ok = inv.ok
        if ok.any():
            xs, ys = x[ok], y[ok]
            th = self._theta(xs, inv.lam[ok])
            fz = self.lagrangian.grad_z(xs, ys, th)
            f = self.lagrangian.value(xs, ys, th)
            theta[ok] = th
            P[ok] = fz
            h[ok] = f - np.sum(fz * th, axis=(-2, -1))
        return inv, theta, h, P

    def _single(self, x, y, arr):
        return arr[0] if (np.ndim(x) <= 1 and np.ndim(y) <= 1) else arr

    def slope(self, x, y, guess=None) -> np.ndarray:
        inv, theta, _, _ = self.quantities(x, y, guess)
        inv.raise_first()
        return self._single(x, y, theta)

    def h_value(self, x, y, guess=None):
        inv, _, h, _ = self.quantities(x, y, guess)
        inv.raise_first()
        out = self._single(x, y, h)
        return float(out) if np.ndim(out) == 0 else out

    def p_value(self, x, y, guess=None) -> np.ndarray:
        inv, _, _, P = self.quantities(x, y, guess)
        inv.raise_first()
        return self._single(x, y, P)

    def exactness(self, x, y, guess=None, fd_x=None, fd_y=None) -> np.ndarray:
        """Exactness residual for a batch; nan where the stencil leaves the tube."""
        hx = self.fd_x if fd_x is None else fd_x
        hy = self.fd_y if fd_y is None else fd_y
        x = np.asarray(x, dtype=float).reshape(-1, self.n)
        y = np.asarray(y, dtype=float).reshape(-1, self.N)
        M, n, N = len(x), self.n, self.N
        if guess is None:
            guess = self.solve(x, y).lam
        guess = np.broadcast_to(np.asarray(guess, dtype=float), y.shape)
        # stencil order: +x_k, -x_k for each k, then +y_j, -y_j for each j
        xs, ys = [], []
        for k in range(n):
            for sgn in (1.0, -1.0):
                xx = x.copy()
                xx[:, k] += sgn * hx
                xs.append(xx)
                ys.append(y)
        for j in range(N):
            for sgn in (1.0, -1.0):
                yy = y.copy()
                yy[:, j] += sgn * hy
                xs.append(x)
                ys.append(yy)
        S = len(xs)
        inv, _, h, P = self.quantities(np.concatenate(xs), np.concatenate(ys),
                                       np.tile(guess, (S, 1)))
        h = h.reshape(S, M)
        P = P.reshape(S, M, N, n)
        R = np.zeros((M, N))
        for j in range(N):
            s = 2 * n + 2 * j
            R[:, j] = (h[s] - h[s + 1]) / (2.0 * hy)
            for k in range(n):
                R[:, j] -= (P[2 * k, :, j, k] - P[2 * k + 1, :, j, k]) / (2.0 * hx)
        bad = ~inv.ok.reshape(S, M).all(axis=0)
        R[bad] = np.nan
        return R

    def exactness_residual(self, x, y, guess=None) -> np.ndarray:
        """``dh/dy_j - sum_k dP_jk/dx_k`` by central differences."""
        R = self.exactness(x, y, guess)
        bad = np.flatnonzero(~np.isfinite(R).all(axis=-1))
        if bad.size:
            raise StencilError("exactness stencil leaves the covered tube", int(bad[0]))
        return self._single(x, y, R)


# ---------------------------------------------------------------------------
# tube coverage

_LEVELS = (-1.0, -0.5, 0.0, 0.5, 1.0)


def tube_offsets(N: int, cap: int = 25) -> np.ndarray:
    """Lattice offsets in units of delta, at most ``cap`` of them.

    Ordered center first, then single-component extremes, then corners,
    then the remaining lattice points.
    """
    pts = [tuple(p) for p in itertools.product(_LEVELS, repeat=N)]

    def rank(p):
        nonzero = sum(1 for v in p if v != 0.0)
        extreme = all(abs(v) in (0.0, 1.0) for v in p)
        if nonzero == 0:
            return 0
        if nonzero == 1 and extreme:
            return 1
        if nonzero == N and extreme:
            return 2
        return 3

    pts.sort(key=rank)  # stable: lexicographic within each rank
    return np.array(pts[:max(1, cap)], dtype=float)


def tube_samples(grid: Grid, y0: GridFunction, delta: float, cap: int = 25):
    """Node coordinates, tube values and node indices for a lattice of width delta."""
    offsets = tube_offsets(y0.N, cap)
    nodes = y0.nodes()
    S = len(offsets)
    x = np.repeat(grid.points, S, axis=0)
    y = (nodes[:, None, :] + delta * offsets[None]).reshape(-1, y0.N)
    node = np.repeat(np.arange(grid.size), S)
    return x, y, node


@dataclass(frozen=True, eq=False)
class TubeCoverage:
    delta_star: float
    lam0: np.ndarray
    tried: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"delta_star": self.delta_star,
                "tried": [{"delta": d, "failed_points": k} for d, k in self.tried]}


def tube_coverage(fld: SlopeField, y0: GridFunction, deltas: Sequence[float],
                  y_samples_per_node: int = 25) -> TubeCoverage:
    """Largest delta whose lattice around the graph of ``y0`` is covered.

    Raises :class:`UncoveredError` when ``y0`` itself is not in the field.
    """
    grid = y0.grid
    base = fld.solve(grid.points, y0.nodes())
    if not base.ok.all():
        i = int(np.flatnonzero(~base.ok)[0])
        raise UncoveredError(
            f"candidate not covered by the field ({STATUS_NAMES[int(base.status[i])]})"
            f" at node {grid.unravel(i)}", i)
    tried = []
    for delta in sorted((float(d) for d in deltas), reverse=True):
        x, y, node = tube_samples(grid, y0, delta, y_samples_per_node)
        inv = fld.solve(x, y, base.lam[node])
        failed = int(np.count_nonzero(~inv.ok))
        tried.append((delta, failed))
        if failed == 0:
            return TubeCoverage(delta, base.lam, tried)
    return TubeCoverage(0.0, base.lam, tried)
