"""The certification pipeline and its report."""

from __future__ import annotations

import dataclasses
import itertools
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Sequence

import numpy as np

from .domain import BoxDomain, Grid, GridFunction, quadrature, sample
from .excess import GapProfile, summarize_excess
from .expr import Expr, ExprLike, as_expr, variables
from .field import (ExpressionFamily, ShootingFamily, SlopeField, UncoveredError,
                    tube_coverage, tube_samples)
from .hilbert import FieldState, InvarianceStats, field_state, hilbert_integrand, \
    sample_perturbations
from .lagrangian import LagrangianSpec, build, convexity_check
from .stationarity import el_residual, stationarity_threshold

__all__ = [
    "Verdict",
    "FailureReason",
    "Tolerances",
    "Sampling",
    "ProblemSpec",
    "InvalidProblem",
    "NumericalFailure",
    "CertificationReport",
    "certify",
    "STAGES",
    "DEFAULT_DELTAS",
]

DEFAULT_DELTAS = (1.0, 0.5, 0.25, 0.1, 0.05)
GAP_RELATIVE_TOL = 1e-10
STAGES = ("stationarity", "tube", "members", "exactness", "convexity",
          "invariance", "excess", "gap", "direct")

NOT_A_DISPROOF = ("A NOT_CERTIFIED verdict does not show that the candidate fails to be a "
                  "local minimizer: the checked conditions are sufficient only. delta_star is "
                  "the radius of the covered tube on the discrete grid and inherits its "
                  "discretization error.")


class Verdict(str, Enum):
    CERTIFIED_LOCAL_MIN = "CERTIFIED_LOCAL_MIN"
    NOT_CERTIFIED = "NOT_CERTIFIED"
    INVALID_INPUT = "INVALID_INPUT"


class FailureReason(str, Enum):
    EL_RESIDUAL = "EL_RESIDUAL"
    UNCOVERED = "UNCOVERED"
    TUBE_TOO_SMALL = "TUBE_TOO_SMALL"
    EXACTNESS_FAIL = "EXACTNESS_FAIL"
    NOT_CONVEX = "NOT_CONVEX"
    INVARIANCE_FAIL = "INVARIANCE_FAIL"
    EXCESS_NEGATIVE = "EXCESS_NEGATIVE"


class InvalidProblem(ValueError):
    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


class NumericalFailure(ArithmeticError):
    """An internal consistency check failed; the computation cannot be trusted."""


@dataclass(frozen=True)
class Tolerances:
    tol_el: float = 1e-6
    tol_inv: float = 1e-10
    tol_exact: float = 1e-5
    tol_invariance: float = 1e-3
    tol_excess: float = 1e-9
    tol_convex: float = 1e-9


@dataclass(frozen=True)
class Sampling:
    num_samples: int = 50
    mode_cap: int = 4
    seed: int = 42
    y_samples_per_node: int = 25
    z_draws: int = 1000
    z_box: float = 2.0
    z_stencil: float = 0.5


@dataclass(frozen=True)
class ProblemSpec:
    lagrangian: LagrangianSpec
    domain: BoxDomain
    y0: tuple[Expr, ...]
    family: ExpressionFamily | ShootingFamily
    resolution: tuple[int, ...] = (65,)
    tolerances: Tolerances = Tolerances()
    sampling: Sampling = Sampling()
    deltas: tuple[float, ...] = DEFAULT_DELTAS

    def __post_init__(self):
        L = self.lagrangian
        if self.domain.n != L.n:
            raise InvalidProblem("domain", f"has {self.domain.n} axes but n = {L.n}")
        y0 = tuple(as_expr(e, L.n, L.N, allowed_vars="x") for e in self.y0)
        if len(y0) != L.N:
            raise InvalidProblem("y0", f"needs {L.N} component(s), got {len(y0)}")
        object.__setattr__(self, "y0", y0)
        if (self.family.n, self.family.N) != (L.n, L.N):
            raise InvalidProblem("family", "dimensions differ from the problem")
        res = self.resolution
        res = (int(res),) * L.n if np.ndim(res) == 0 else tuple(int(m) for m in res)
        if len(res) == 1 and L.n > 1:
            res = res * L.n
        if len(res) != L.n or min(res) < 5:
            raise InvalidProblem("resolution", "need one value >= 5 per axis")
        object.__setattr__(self, "resolution", res)
        deltas = tuple(float(d) for d in self.deltas)
        if not deltas or min(deltas) <= 0:
            raise InvalidProblem("deltas", "need positive candidate radii")
        object.__setattr__(self, "deltas", deltas)
        s = self.sampling
        if s.num_samples < 1 or s.mode_cap < 1:
            raise InvalidProblem("sampling", "num_samples and mode_cap must be positive")

    @classmethod
    def create(cls, n: int, N: int, f: ExprLike, b0, omega, y0, phi=None, r: float = 10.0,
               kind: str = "expression", shoot_step: float | None = None, **kwargs):
        """Convenience constructor from strings and nested lists."""
        L = build(n, N, f)
        domain = BoxDomain(b0, omega)
        if isinstance(y0, (str, int, float, Expr)):
            y0 = [y0]
        if kind == "expression":
            family = ExpressionFamily.from_strings(phi, n, N, r)
        elif kind == "shooting":
            family = shooting_family(L, domain, y0, r, shoot_step)
        else:
            raise InvalidProblem("family.kind", f"unknown kind {kind!r}")
        return cls(L, domain, tuple(y0), family, **kwargs)

    def grid(self) -> Grid:
        return Grid(self.domain, self.resolution)

    def grid_b0(self) -> Grid:
        return Grid(self.domain, self.resolution, on_b0=True)

    def field(self) -> SlopeField:
        return SlopeField(self.family, self.lagrangian, tol_inv=self.tolerances.tol_inv)

    def with_overrides(self, **changes) -> "ProblemSpec":
        tol = {k: v for k, v in changes.items() if k in Tolerances.__dataclass_fields__}
        smp = {k: v for k, v in changes.items() if k in Sampling.__dataclass_fields__}
        top = {k: v for k, v in changes.items() if k in ("resolution", "deltas")}
        unknown = set(changes) - set(tol) - set(smp) - set(top)
        if unknown:
            raise TypeError(f"unknown overrides {sorted(unknown)}")
        return dataclasses.replace(
            self,
            tolerances=dataclasses.replace(self.tolerances, **tol),
            sampling=dataclasses.replace(self.sampling, **smp),
            **top,
        )

    def describe(self) -> dict:
        return {
            "n": self.lagrangian.n,
            "N": self.lagrangian.N,
            "f": str(self.lagrangian.f),
            "b0": [list(iv) for iv in self.domain.b0],
            "omega": [list(iv) for iv in self.domain.omega],
            "y0": [str(e) for e in self.y0],
            "family": self.family.describe(),
            "resolution": list(self.resolution),
            "tolerances": dataclasses.asdict(self.tolerances),
            "sampling": dataclasses.asdict(self.sampling),
            "deltas": list(self.deltas),
        }


def shooting_family(L: LagrangianSpec, domain: BoxDomain, y0, r: float,
                    step: float | None) -> ShootingFamily:
    """Family shot from the lower face of b0 through the candidate's value there."""
    if L.n != 1:
        raise InvalidProblem("family.kind", "shooting families need n = 1")
    lo, hi = domain.b0[0]
    y0 = [as_expr(e, 1, L.N, allowed_vars="x") for e in y0]
    y_base = [float(e.eval({"x1": lo})) for e in y0]
    if step is None:
        step = (hi - lo) / 256
    return ShootingFamily(L, lo, tuple(y_base), hi, r, step)


# ---------------------------------------------------------------------------
# report

@dataclass
class CertificationReport:
    verdict: Verdict | None = None
    failure_reason: FailureReason | None = None
    failures: list = field(default_factory=list)
    delta_star: float | None = None
    el_stats: dict | None = None
    tube: dict | None = None
    exactness_max: float | None = None
    exactness: dict | None = None
    convexity: dict | None = None
    invariance: dict | None = None
    excess: dict | None = None
    gap_identity_error: float | None = None
    gap_identity_relative: float | None = None
    direct_comparison: dict | None = None
    stages_run: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    note: str = NOT_A_DISPROOF

    @property
    def certified(self) -> bool:
        return self.verdict == Verdict.CERTIFIED_LOCAL_MIN

    def to_dict(self, include_timings: bool = False) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            if f.name == "timings" and not include_timings:
                continue
            out[f.name] = _plain(getattr(self, f.name))
        return out

    def to_json(self, include_timings: bool = False) -> str:
        return dump_json(self.to_dict(include_timings)) + "\n"

    def summary(self) -> str:
        lines = [f"verdict: {self.verdict.value if self.verdict else 'n/a (partial run)'}"]
        if self.failure_reason:
            lines.append(f"failure_reason: {self.failure_reason.value}")
        if len(self.failures) > 1:
            lines.append("all failures: " + ", ".join(self.failures))
        if self.el_stats:
            c = self.el_stats["candidate"]
            lines.append(f"stationarity on b0: interior max |r| = {c['interior_max_abs']:.3e}"
                         f" (threshold {c['threshold']:.3e})")
            if "members" in self.el_stats:
                m = self.el_stats["members"]
                lines.append(f"family members: worst interior max |r| = "
                             f"{m['worst_interior_max_abs']:.3e} over {m['num_members']}")
        if self.delta_star is not None:
            lines.append(f"delta_star: {self.delta_star:g}")
        if self.exactness_max is not None:
            lines.append(f"exactness residual max: {self.exactness_max:.3e}")
        if self.convexity:
            lines.append(f"convexity: min eigenvalue {self.convexity['min_eigenvalue']:.6g}"
                         f" over {self.convexity['num_samples']} samples")
        if self.invariance:
            lines.append(f"Hilbert invariance: max_rel_dev {self.invariance['max_rel_dev']:.3e}"
                         f" over {self.invariance['num_samples']} perturbations")
        if self.excess:
            lines.append(f"excess: min {self.excess['min_value']:.6g},"
                         f" negative nodes {self.excess['num_negative_nodes']}")
        if self.gap_identity_error is not None:
            lines.append(f"gap identity error: {self.gap_identity_error:.3e}")
        if self.direct_comparison:
            lines.append(f"min F(y) - F(y0): {self.direct_comparison['min_gap']:.6g}")
        for stage, seconds in self.timings.items():
            lines.append(f"  {stage}: {seconds:.3f} s")
        if not self.certified and self.verdict is not None:
            lines.append(self.note)
        return "\n".join(lines)


def _plain(value: Any):
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    return value


def _fmt_number(v: float) -> str:
    if not math.isfinite(v):
        return "null"
    s = "%.17g" % v
    if "e" not in s and "." not in s and "n" not in s:
        s += ".0"
    return s


def dump_json(obj: Any, indent: int = 2, _level: int = 0) -> str:
    """JSON text with floats written to 17 significant digits."""
    import json

    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if obj is None or isinstance(obj, bool):
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _fmt_number(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dump_json(v, indent, _level + 1)}"
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(dump_json(v) for v in obj) + "]"
        items = [pad + dump_json(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


# ---------------------------------------------------------------------------
# pipeline

class _Run:
    def __init__(self, p: ProblemSpec, continue_on_failure: bool):
        self.p = p
        self.cont = continue_on_failure
        self.report = CertificationReport(config=p.describe())
        self.stopped = False

    def fail(self, reason: FailureReason):
        self.report.failures.append(reason.value)
        if self.report.failure_reason is None:
            self.report.failure_reason = reason
        if not self.cont:
            self.stopped = True

    def timed(self, name, fn):
        t0 = time.perf_counter()
        try:
            return fn()
        finally:
            self.report.timings[name] = time.perf_counter() - t0
            self.report.stages_run.append(name)


def _member_lattice(N: int, r: float) -> list[np.ndarray]:
    s = min(0.5 * r, 1.0)
    return [np.array(p) for p in itertools.product((-s, 0.0, s), repeat=N)]


def certify(p: ProblemSpec, continue_on_failure: bool = False,
            stages: Sequence[str] = STAGES) -> CertificationReport:
    """Run the certification stages in order and collect their results.

    ``stages`` limits the run to a prefix-closed subset (the tube is always
    computed when any later stage is requested).  Unless
    ``continue_on_failure`` is set the run stops at the first failing stage.
    The verdict is only set when every stage was requested.
    """
    wanted = set(stages)
    unknown = wanted - set(STAGES)
    if unknown:
        raise ValueError(f"unknown stages {sorted(unknown)}")
    run = _Run(p, continue_on_failure)
    rep = run.report
    L, tol, smp = p.lagrangian, p.tolerances, p.sampling
    grid, grid_b0 = p.grid(), p.grid_b0()
    fld = p.field()

    # (1) stationarity of the candidate on b0
    if "stationarity" in wanted:
        def stage_el():
            thr = stationarity_threshold(grid_b0, tol.tol_el)
            res = el_residual(L, sample(grid_b0, list(p.y0)))
            passed = res.interior_max_abs <= thr
            rep.el_stats = {"candidate": {**res.to_dict(), "threshold": thr, "passed": passed}}
            if not passed:
                run.fail(FailureReason.EL_RESIDUAL)
        run.timed("stationarity", stage_el)
    if run.stopped:
        return _finish(run, wanted)

    later = wanted - {"stationarity", "members"}
    y0 = sample(grid, list(p.y0))
    cov = None
    if later:
        def stage_tube():
            try:
                c = tube_coverage(fld, y0, p.deltas, smp.y_samples_per_node)
            except UncoveredError as err:
                rep.tube = {"error": str(err)}
                rep.delta_star = 0.0
                run.fail(FailureReason.UNCOVERED)
                run.stopped = True
                return None
            rep.tube = c.to_dict()
            rep.delta_star = c.delta_star
            if c.delta_star <= 0:
                run.fail(FailureReason.TUBE_TOO_SMALL)
                run.stopped = True
            return c
        cov = run.timed("tube", stage_tube)
        if run.stopped:
            return _finish(run, wanted)

    # (3) family members
    if "members" in wanted:
        def stage_members():
            thr = stationarity_threshold(grid_b0, tol.tol_el)
            worst = 0.0
            lattice = _member_lattice(L.N, p.family.r)
            for lam in lattice:
                worst = max(worst, el_residual(L, p.family.member(grid_b0, lam)).interior_max_abs)
            passed = worst <= thr
            stats = rep.el_stats if rep.el_stats is not None else {}
            stats["members"] = {"worst_interior_max_abs": worst, "threshold": thr,
                                "num_members": len(lattice), "passed": passed}
            rep.el_stats = stats
            if not passed:
                run.fail(FailureReason.EL_RESIDUAL)
        run.timed("members", stage_members)
        if run.stopped:
            return _finish(run, wanted)
    if not later:
        return _finish(run, wanted)

    delta = cov.delta_star
    lam0 = cov.lam0
    widths = [b - a for a, b in p.domain.omega]
    fld = dataclasses.replace(fld, fd_x=1e-4 * min(widths), fd_y=1e-4 * delta)
    xs, ys, node = tube_samples(grid, y0, delta, smp.y_samples_per_node)

    # (4) exactness over the tube
    if "exactness" in wanted:
        def stage_exact():
            R = fld.exactness(xs, ys, lam0[node])
            retry = ~np.isfinite(R).all(axis=-1)
            if retry.any():
                R[retry] = fld.exactness(xs[retry], ys[retry], lam0[node][retry],
                                         fd_x=0.1 * fld.fd_x, fd_y=0.1 * fld.fd_y)
            ok = np.isfinite(R).all(axis=-1)
            emax = float(np.max(np.abs(R[ok]))) if ok.any() else math.inf
            passed = bool(ok.any()) and emax <= tol.tol_exact
            rep.exactness_max = emax
            rep.exactness = {"max_abs": emax, "num_points": int(len(R)),
                             "skipped": int(np.count_nonzero(~ok)), "fd_x": fld.fd_x,
                             "fd_y": fld.fd_y, "passed": passed}
            if not passed:
                run.fail(FailureReason.EXACTNESS_FAIL)
        run.timed("exactness", stage_exact)
        if run.stopped:
            return _finish(run, wanted)

    need_pert = wanted & {"convexity", "invariance", "excess", "gap", "direct"}
    states: list[FieldState] = []
    state0 = None
    if need_pert:
        def stage_perturb():
            s0 = field_state(fld, y0, lam0)
            perts = sample_perturbations(grid, L.N, delta, smp.num_samples, smp.seed,
                                         smp.mode_cap)
            return s0, [field_state(fld, y0 + q.eta, lam0) for q in perts]
        try:
            state0, states = run.timed("perturbations", stage_perturb)
        except UncoveredError as err:
            rep.tube = {**(rep.tube or {}), "error": str(err)}
            run.fail(FailureReason.UNCOVERED)
            run.stopped = True
            return _finish(run, wanted)

    # (5) convexity in z
    if "convexity" in wanted:
        def stage_convex():
            X, Y, Z = _convexity_points(fld, xs, ys, lam0[node], states, smp, p)
            res = convexity_check(L, X, Y, Z, tol.tol_convex)
            rep.convexity = {**res.to_dict(),
                             "region": "tube samples x z-stencil around theta; perturbation "
                                       "gradients and theta; seeded uniform z draws in "
                                       f"[-{smp.z_box}, {smp.z_box}]"}
            if not res.is_psd:
                run.fail(FailureReason.NOT_CONVEX)
        run.timed("convexity", stage_convex)
        if run.stopped:
            return _finish(run, wanted)

    # (6) invariance of the Hilbert integral
    if "invariance" in wanted:
        def stage_inv():
            i0 = quadrature(hilbert_integrand(state0), grid)
            devs = [abs(quadrature(hilbert_integrand(s), grid) - i0) for s in states]
            stats = InvarianceStats(i0, devs, max(devs) / (1.0 + abs(i0)), len(devs), smp.seed)
            passed = stats.max_rel_dev <= tol.tol_invariance
            rep.invariance = {**stats.to_dict(), "delta": delta, "mode_cap": smp.mode_cap,
                              "passed": passed}
            if not passed:
                run.fail(FailureReason.INVARIANCE_FAIL)
        run.timed("invariance", stage_inv)
        if run.stopped:
            return _finish(run, wanted)

    # (7) excess along the perturbations
    profiles: list[GapProfile] = []
    if wanted & {"excess", "gap", "direct"}:
        for s in states:
            F = quadrature(L.value(s.x, s.values, s.grad), grid)
            I = quadrature(hilbert_integrand(s), grid)
            profiles.append(GapProfile(F, I, summarize_excess(s, L, tol.tol_excess)))
    if "excess" in wanted:
        def stage_excess():
            worst = min(range(len(profiles)), key=lambda i: profiles[i].excess.min_value)
            ex = profiles[worst].excess
            negatives = sum(1 for q in profiles if q.excess.num_negative_nodes > 0)
            passed = ex.min_value >= -tol.tol_excess
            rep.excess = {**ex.to_dict(), "sample": worst, "samples_with_negative": negatives,
                          "tol": tol.tol_excess, "passed": passed}
            if not passed:
                run.fail(FailureReason.EXCESS_NEGATIVE)
        run.timed("excess", stage_excess)
        if run.stopped:
            return _finish(run, wanted)

    # (8) discrete gap identity
    if wanted & {"gap", "direct"}:
        F0 = quadrature(L.value(state0.x, state0.values, state0.grad), grid)
        I0 = quadrature(hilbert_integrand(state0), grid)
        E0 = summarize_excess(state0, L, tol.tol_excess).integral
    if "gap" in wanted:
        def stage_gap():
            err = max(abs((q.F - F0) - ((q.excess.integral - E0) + (q.I - I0)))
                      for q in profiles)
            rel = max(q.relative_residual for q in profiles)
            rep.gap_identity_error = err
            rep.gap_identity_relative = rel
            if rel > GAP_RELATIVE_TOL:
                raise NumericalFailure(f"discrete gap identity violated (relative {rel:.3e})")
        run.timed("gap", stage_gap)

    # (9) direct comparison of the functional
    if "direct" in wanted:
        def stage_direct():
            gaps = [q.F - F0 for q in profiles]
            bound = -tol.tol_invariance * (1.0 + abs(F0))
            rep.direct_comparison = {
                "F_y0": F0,
                "min_gap": min(gaps),
                "num_samples": len(gaps),
                "num_positive": sum(1 for g in gaps if g > 0),
                "consistent": min(gaps) >= bound,
            }
        run.timed("direct", stage_direct)
    return _finish(run, wanted)


def _convexity_points(fld: SlopeField, xs, ys, guess, states, smp: Sampling, p: ProblemSpec):
    L = fld.lagrangian
    n, N = L.n, L.N
    inv, theta, _, _ = fld.quantities(xs, ys, guess)
    ok = inv.ok
    tx, ty, tth = xs[ok], ys[ok], theta[ok]
    # z-stencil: theta and theta + s*e_a for s in {-1, -1/2, 1/2, 1} * z_stencil
    offsets = [np.zeros((N, n))]
    for a in range(N * n):
        for s in (-1.0, -0.5, 0.5, 1.0):
            e = np.zeros(N * n)
            e[a] = s * smp.z_stencil
            offsets.append(e.reshape(N, n))
    offsets = np.array(offsets)
    X = [np.repeat(tx, len(offsets), axis=0)]
    Y = [np.repeat(ty, len(offsets), axis=0)]
    Z = [(tth[:, None] + offsets[None]).reshape(-1, N, n)]
    for s in states:
        X += [s.x, s.x]
        Y += [s.values, s.values]
        Z += [s.grad, s.theta]
    rng = np.random.default_rng([smp.seed, 5])
    if smp.z_draws > 0 and len(tx):
        pick = rng.integers(0, len(tx), size=smp.z_draws)
        X.append(tx[pick])
        Y.append(ty[pick])
        Z.append(rng.uniform(-smp.z_box, smp.z_box, size=(smp.z_draws, N, n)))
    return np.concatenate(X), np.concatenate(Y), np.concatenate(Z)


def _finish(run: _Run, wanted: set) -> CertificationReport:
    rep = run.report
    full = wanted >= set(STAGES)
    if rep.failures:
        rep.verdict = Verdict.NOT_CERTIFIED
    elif full and run.report.stages_run and not run.stopped:
        rep.verdict = Verdict.CERTIFIED_LOCAL_MIN
    else:
        rep.verdict = None
    return rep


def invalid_report(message: str, config: dict | None = None) -> CertificationReport:
    rep = CertificationReport(verdict=Verdict.INVALID_INPUT, config=config or {})
    rep.config = {**rep.config, "error": message}
    return rep
