"""Command line entry point: ``varcert <subcommand> PROBLEM [options]``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .certify import (STAGES, CertificationReport, InvalidProblem, NumericalFailure, certify,
                      invalid_report)
from .expr import DomainError, ExprError
from .field import FieldError
from .problem import ProblemFileError, load_problem_file
from .stationarity import SingularHessianError, StepUnderflowError

__all__ = ["main", "build_parser", "run", "SUBCOMMANDS"]

EXIT_OK, EXIT_NOT_CERTIFIED, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2, 3

SUBCOMMANDS = {
    "check": (),
    "stationary": ("stationarity", "members"),
    "field": ("tube", "exactness"),
    "hilbert": ("invariance",),
    "excess": ("excess",),
    "certify": STAGES,
}
HELP = {
    "check": "parse and validate the problem file",
    "stationary": "Euler-Lagrange residuals of the candidate and family members",
    "field": "tube coverage and exactness of the slope field",
    "hilbert": "invariance of the Hilbert integral under sampled perturbations",
    "excess": "Weierstrass excess along sampled perturbations",
    "certify": "run the full certification pipeline",
}


def _deltas(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.replace("[", "").replace("]", "").split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated radii, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("need at least one radius")
    return vals


def _resolution(text: str):
    try:
        vals = [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integer(s), got {text!r}")
    return vals[0] if len(vals) == 1 else tuple(vals)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="varcert",
        description="Sufficient-condition certificates for local minima of multiple integrals.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=HELP[name], description=HELP[name])
        p.add_argument("problem", help="problem file")
        p.add_argument("--resolution", type=_resolution, help="nodes per axis (grid.resolution)")
        p.add_argument("--seed", type=int, help="sampling seed (sampling.seed)")
        p.add_argument("--samples", type=int, help="perturbation count (sampling.num_samples)")
        p.add_argument("--tol-el", type=float, help="tolerances.tol_el")
        p.add_argument("--tol-inv", type=float, help="tolerances.tol_inv")
        p.add_argument("--tol-exact", type=float, help="tolerances.tol_exact")
        p.add_argument("--tol-invariance", type=float, help="tolerances.tol_invariance")
        p.add_argument("--deltas", type=_deltas, help="candidate tube radii (deltas.values)")
        p.add_argument("--report", help="write the JSON report here (output.report)")
        p.add_argument("--continue-on-failure", action="store_true", default=None,
                       help="run every stage even after a failure "
                            "(options.continue_on_failure)")
        p.add_argument("--timings", action="store_true",
                       help="include wall-clock stage timings in the JSON report")
    return parser


def _overrides(args) -> dict:
    pairs = {
        "resolution": args.resolution,
        "seed": args.seed,
        "num_samples": args.samples,
        "tol_el": args.tol_el,
        "tol_inv": args.tol_inv,
        "tol_exact": args.tol_exact,
        "tol_invariance": args.tol_invariance,
        "deltas": args.deltas,
    }
    return {k: v for k, v in pairs.items() if v is not None}


def _write(path, rep: CertificationReport, timings: bool):
    Path(path).write_text(rep.to_json(include_timings=timings))


def run(argv=None, stdout=None, stderr=None) -> int:
    out = stdout or sys.stdout
    err = stderr or sys.stderr
    args = build_parser().parse_args(argv)
    report_path = args.report
    try:
        pf = load_problem_file(args.problem)
        spec = pf.spec.with_overrides(**_overrides(args))
    except (OSError, ProblemFileError, InvalidProblem, ExprError, ValueError) as exc:
        print(f"invalid input: {exc}", file=err)
        if report_path:
            _write(report_path, invalid_report(str(exc)), args.timings)
        return EXIT_INVALID
    report_path = report_path or pf.report
    cont = pf.continue_on_failure if args.continue_on_failure is None else True

    if args.command == "check":
        L = spec.lagrangian
        print(f"ok: n = {L.n}, N = {L.N}, f = {L.f}", file=out)
        print(f"family: {spec.family.describe()}", file=out)
        print(f"resolution: {list(spec.resolution)}, deltas: {list(spec.deltas)}", file=out)
        if report_path:
            _write(report_path, CertificationReport(config=spec.describe()), args.timings)
        return EXIT_OK

    try:
        with np.errstate(all="ignore"):
            rep = certify(spec, continue_on_failure=cont, stages=SUBCOMMANDS[args.command])
    except (NumericalFailure, DomainError, FieldError, SingularHessianError, StepUnderflowError,
            FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=err)
        return EXIT_NUMERICAL
    print(rep.summary(), file=out)
    if report_path:
        _write(report_path, rep, args.timings)
    return EXIT_NOT_CERTIFIED if rep.failures else EXIT_OK


def main(argv=None) -> int:
    return run(argv)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
