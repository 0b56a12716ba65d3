"""Weierstrass excess, the functional, and the discrete gap identity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import GridFunction, quadrature
from .field import SlopeField
from .hilbert import FieldState, field_state, hilbert_integrand
from .lagrangian import LagrangianSpec
from .stationarity import nodal_arrays

__all__ = [
    "functional",
    "excess_point",
    "ExcessSummary",
    "summarize_excess",
    "excess_field",
    "GapProfile",
    "gap_profile",
    "gap_identity_error",
]


def functional(L: LagrangianSpec, y: GridFunction) -> float:
    """Trapezoid value of ``f(x, y, grad y)`` over omega."""
    x, yv, z = nodal_arrays(y)
    return quadrature(L.value(x, yv, z), y.grid)


def excess_point(L: LagrangianSpec, x, y, theta, z):
    """``f(x,y,z) - f(x,y,theta) - sum_jk f_{z_jk}(x,y,theta) (z_jk - theta_jk)``."""
    theta = np.asarray(theta, dtype=float)
    z = np.asarray(z, dtype=float)
    fz = L.grad_z(x, y, theta)
    E = L.value(x, y, z) - L.value(x, y, theta) - np.sum(fz * (z - theta), axis=(-2, -1))
    return float(E) if np.ndim(E) == 0 else E


@dataclass(frozen=True, eq=False)
class ExcessSummary:
    min_value: float
    argmin: tuple[int, ...]
    num_negative_nodes: int
    integral: float
    values: np.ndarray

    def to_dict(self) -> dict:
        return {
            "min_value": self.min_value,
            "argmin": list(self.argmin),
            "num_negative_nodes": self.num_negative_nodes,
            "integral": self.integral,
        }


def summarize_excess(state: FieldState, L: LagrangianSpec, tol_excess: float) -> ExcessSummary:
    grid = state.y.grid
    E = excess_point(L, state.x, state.values, state.theta, state.grad)
    E = np.atleast_1d(E)
    i = int(np.argmin(E))
    return ExcessSummary(
        min_value=float(E[i]),
        argmin=grid.unravel(i),
        num_negative_nodes=int(np.count_nonzero(E < -tol_excess)),
        integral=quadrature(E, grid),
        values=E.reshape(grid.shape),
    )


def excess_field(fld: SlopeField, y: GridFunction, guess=None,
                 tol_excess: float = 1e-9) -> ExcessSummary:
    """Nodal excess with ``theta`` from the field and ``z`` the discrete gradient."""
    return summarize_excess(field_state(fld, y, guess), fld.lagrangian, tol_excess)


@dataclass(frozen=True, eq=False)
class GapProfile:
    """``F``, ``I`` and the excess integral of one function on shared nodes."""

    F: float
    I: float
    excess: ExcessSummary

    @property
    def residual(self) -> float:
        """``|F - I - int E|``; zero up to roundoff for any field."""
        return abs(self.F - self.I - self.excess.integral)

    @property
    def relative_residual(self) -> float:
        scale = max(abs(self.F), abs(self.I), abs(self.excess.integral))
        return self.residual / scale if scale > 0 else self.residual


def gap_profile(fld: SlopeField, y: GridFunction, guess=None,
                tol_excess: float = 1e-9) -> GapProfile:
    state = field_state(fld, y, guess)
    L = fld.lagrangian
    F = quadrature(L.value(state.x, state.values, state.grad), y.grid)
    I = quadrature(hilbert_integrand(state), y.grid)
    return GapProfile(F=F, I=I, excess=summarize_excess(state, L, tol_excess))


def gap_identity_error(L: LagrangianSpec, fld: SlopeField, y: GridFunction,
                       y0: GridFunction, guess=None) -> float:
    """Roundoff-level defect of ``F(y) - F(y0) = int E(y) - int E(y0) + I(y) - I(y0)``.

    ``int E(y0)`` vanishes in the continuum; on the grid it is the small
    mismatch between the discrete gradient of ``y0`` and the field slope,
    and it is kept so that the identity is exact algebra.
    """
    if L is not fld.lagrangian and L != fld.lagrangian:
        raise ValueError("field was built for a different Lagrangian")
    p = gap_profile(fld, y, guess)
    p0 = gap_profile(fld, y0, guess)
    lhs = p.F - p0.F
    rhs = (p.excess.integral - p0.excess.integral) + (p.I - p0.I)
    return abs(lhs - rhs)
