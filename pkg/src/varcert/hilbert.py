"""The generalized Hilbert integral and its invariance under perturbations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import GridFunction, discrete_gradient, make_bubble, quadrature
from .field import STATUS_NAMES, SlopeField, UncoveredError

__all__ = [
    "FieldState",
    "field_state",
    "hilbert_integrand",
    "hilbert_integral",
    "Perturbation",
    "sample_perturbations",
    "InvarianceStats",
    "invariance_check",
]


@dataclass(frozen=True, eq=False)
class FieldState:
    """Nodal data of ``y`` together with the field evaluated along its graph."""

    y: GridFunction
    x: np.ndarray       # (M, n)
    values: np.ndarray  # (M, N)
    grad: np.ndarray    # (M, N, n), discrete gradient
    lam: np.ndarray     # (M, N)
    theta: np.ndarray   # (M, N, n)
    h: np.ndarray       # (M,)
    P: np.ndarray       # (M, N, n)


def field_state(fld: SlopeField, y: GridFunction, guess=None) -> FieldState:
    """Evaluate the field at every node of ``y``; raise if a node is uncovered."""
    grid = y.grid
    M = grid.size
    values = y.nodes()
    grad = discrete_gradient(y).reshape(y.N, grid.n, M).transpose(2, 0, 1)
    inv, theta, h, P = fld.quantities(grid.points, values, guess)
    if not inv.ok.all():
        i = int(np.flatnonzero(~inv.ok)[0])
        raise UncoveredError(
            f"node {grid.unravel(i)} not covered ({STATUS_NAMES[int(inv.status[i])]})", i)
    return FieldState(y, grid.points, values, grad, inv.lam, theta, h, P)


def hilbert_integrand(state: FieldState) -> np.ndarray:
    return state.h + np.sum(state.P * state.grad, axis=(-2, -1))


def hilbert_integral(fld: SlopeField, y: GridFunction, guess=None) -> float:
    """Trapezoid value of ``h(x, y) + sum_jk P_jk(x, y) dy_j/dx_k`` over omega."""
    state = field_state(fld, y, guess)
    return quadrature(hilbert_integrand(state), y.grid)


@dataclass(frozen=True, eq=False)
class Perturbation:
    modes: tuple[int, ...]
    amplitude: tuple[float, ...]
    eta: GridFunction


def sample_perturbations(grid, N: int, delta: float, num_samples: int, seed: int,
                         mode_cap: int = 4) -> list[Perturbation]:
    """Seeded sine bubbles with ``|amplitude_j|`` uniform on ``[delta/4, delta]``.

    Draws depend only on ``(n, N, delta, num_samples, seed, mode_cap)``, so
    the same perturbations are produced on every grid resolution.
    """
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(num_samples):
        modes = tuple(int(m) for m in rng.integers(1, mode_cap + 1, size=grid.n))
        mag = rng.uniform(0.25 * delta, delta, size=N)
        sign = rng.choice([-1.0, 1.0], size=N)
        amp = tuple(float(a) for a in sign * mag)
        out.append(Perturbation(modes, amp, make_bubble(grid, modes, amp)))
    return out


@dataclass(frozen=True, eq=False)
class InvarianceStats:
    i_y0: float
    deviations: list[float]
    max_rel_dev: float
    num_samples: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "i_y0": self.i_y0,
            "deviations": list(self.deviations),
            "max_rel_dev": self.max_rel_dev,
            "num_samples": self.num_samples,
            "seed": self.seed,
        }


def invariance_check(fld: SlopeField, y0: GridFunction, delta: float,
                     num_samples: int = 50, seed: int = 42, mode_cap: int = 4,
                     perturbations: list[Perturbation] | None = None,
                     lam0=None) -> InvarianceStats:
    """Compare ``I(y0 + eta)`` with ``I(y0)`` over seeded bubbles ``eta``.

    Each perturbed inversion is warm-started from the parameters solved on
    the graph of ``y0``.
    """
    state0 = field_state(fld, y0, lam0)
    i0 = quadrature(hilbert_integrand(state0), y0.grid)
    if perturbations is None:
        perturbations = sample_perturbations(y0.grid, y0.N, delta, num_samples, seed, mode_cap)
    devs = []
    for p in perturbations:
        i_y = hilbert_integral(fld, y0 + p.eta, state0.lam)
        devs.append(abs(i_y - i0))
    max_dev = max(devs) if devs else 0.0
    return InvarianceStats(
        i_y0=i0,
        deviations=devs,
        max_rel_dev=max_dev / (1.0 + abs(i0)),
        num_samples=len(devs),
        seed=seed,
    )
