"""Problem files: a small sectioned ``key = value`` format.

Example::

    [problem]
    n = 1
    N = 1
    f = "0.5*(z1^2 + y1^2)"
    [domain]
    b0 = [[0.0, 1.2]]
    omega = [[0.2, 1.0]]
    [candidate]
    y0 = "0"
    [family]
    kind = "expression"
    phi = "l1*cosh(x1)"
    r = 10.0

Values are numbers, quoted strings, bracketed lists or ``true``/``false``.
``#`` starts a comment outside of quotes.
"""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass, field
from pathlib import Path

from .certify import DEFAULT_DELTAS, InvalidProblem, ProblemSpec, Sampling, Tolerances
from .expr import ExprError

__all__ = ["ProblemFileError", "ProblemFile", "parse_problem_text", "load_problem",
           "load_problem_file", "problem_from_sections"]

_SECTION = re.compile(r"^\[([A-Za-z_][A-Za-z0-9_]*)\]$")
_KEY = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*)$")

SCHEMA = {
    "problem": {"n", "N", "f"},
    "domain": {"b0", "omega"},
    "candidate": {"y0"},
    "family": {"kind", "phi", "r", "step"},
    "grid": {"resolution"},
    "tolerances": set(Tolerances.__dataclass_fields__),
    "sampling": set(Sampling.__dataclass_fields__),
    "deltas": {"values"},
    "options": {"continue_on_failure"},
    "output": {"report"},
}
REQUIRED = ("problem", "domain", "candidate", "family")


class ProblemFileError(ValueError):
    """Syntax error in a problem file."""

    def __init__(self, message: str, line: int):
        self.line = line
        super().__init__(f"line {line}: {message}")


@dataclass
class ProblemFile:
    spec: ProblemSpec
    sections: dict
    continue_on_failure: bool = False
    report: str | None = None
    lines: dict = field(default_factory=dict)


def _strip_comment(line: str) -> str:
    quote = None
    for i, ch in enumerate(line):
        if quote:
            if ch == quote:
                quote = None
        elif ch in "\"'":
            quote = ch
        elif ch == "#":
            return line[:i]
    return line


def _value(text: str, lineno: int):
    text = text.strip()
    if text in ("true", "false"):
        return text == "true"
    if text.startswith("["):
        text = re.sub(r"\btrue\b", "True", re.sub(r"\bfalse\b", "False", text))
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        raise ProblemFileError(f"cannot read value {text!r}", lineno) from None


def parse_problem_text(text: str) -> tuple[dict, dict]:
    """Return ``(sections, lines)``; ``lines`` maps ``"section.key"`` to line numbers."""
    sections: dict[str, dict] = {}
    lines: dict[str, int] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        m = _SECTION.match(line)
        if m:
            current = m.group(1)
            if current in sections:
                raise ProblemFileError(f"duplicate section [{current}]", lineno)
            sections[current] = {}
            lines[current] = lineno
            continue
        m = _KEY.match(line)
        if not m:
            raise ProblemFileError(f"expected '[section]' or 'key = value', got {line!r}", lineno)
        if current is None:
            raise ProblemFileError("key outside of any section", lineno)
        key = m.group(1)
        if key in sections[current]:
            raise ProblemFileError(f"duplicate key {key!r}", lineno)
        sections[current][key] = _value(m.group(2), lineno)
        lines[f"{current}.{key}"] = lineno
    return sections, lines


def _need(sec: dict, name: str, key: str):
    if key not in sec:
        raise InvalidProblem(f"{name}.{key}", "required")
    return sec[key]


def _number(v, key, kind=float):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise InvalidProblem(key, f"expected a number, got {v!r}")
    if kind is int:
        if float(v) != int(v):
            raise InvalidProblem(key, f"expected an integer, got {v!r}")
        return int(v)
    return float(v)


def _exprs(v, key):
    items = v if isinstance(v, list) else [v]
    out = []
    for e in items:
        if isinstance(e, bool) or not isinstance(e, (str, int, float)):
            raise InvalidProblem(key, f"expected an expression string, got {e!r}")
        out.append(str(e))
    return out


def problem_from_sections(sections: dict) -> ProblemFile:
    """Validate parsed sections and build the problem with defaults applied."""
    for name in sections:
        if name not in SCHEMA:
            raise InvalidProblem(name, "unknown section")
        for key in sections[name]:
            if key not in SCHEMA[name]:
                raise InvalidProblem(f"{name}.{key}", "unknown key")
    for name in REQUIRED:
        if name not in sections:
            raise InvalidProblem(name, "required")

    prob = sections["problem"]
    n = _number(_need(prob, "problem", "n"), "problem.n", int)
    N = _number(_need(prob, "problem", "N"), "problem.N", int)
    if n < 1 or N < 1:
        raise InvalidProblem("problem.n" if n < 1 else "problem.N", "must be at least 1")
    f = _exprs(_need(prob, "problem", "f"), "problem.f")
    if len(f) != 1:
        raise InvalidProblem("problem.f", "expected one expression")

    dom = sections["domain"]
    b0 = _need(dom, "domain", "b0")
    omega = _need(dom, "domain", "omega")
    for key, iv in (("domain.b0", b0), ("domain.omega", omega)):
        if (not isinstance(iv, list) or len(iv) != n
                or not all(isinstance(a, list) and len(a) == 2 for a in iv)):
            raise InvalidProblem(key, f"expected {n} interval(s) [lo, hi]")
        for a in iv:
            for v in a:
                _number(v, key)

    y0 = _exprs(_need(sections["candidate"], "candidate", "y0"), "candidate.y0")
    if len(y0) != N:
        raise InvalidProblem("candidate.y0", f"needs {N} component(s), got {len(y0)}")

    fam = sections["family"]
    kind = fam.get("kind", "expression")
    if kind not in ("expression", "shooting"):
        raise InvalidProblem("family.kind", f"unknown kind {kind!r}")
    r = _number(fam.get("r", 10.0), "family.r")
    phi = None
    if kind == "expression":
        phi = _exprs(_need(fam, "family", "phi"), "family.phi")
        if len(phi) != N:
            raise InvalidProblem("family.phi", f"needs {N} component(s), got {len(phi)}")
    step = _number(fam["step"], "family.step") if "step" in fam else None

    res = sections.get("grid", {}).get("resolution", 65)
    if isinstance(res, list):
        res = tuple(_number(m, "grid.resolution", int) for m in res)
    else:
        res = _number(res, "grid.resolution", int)

    tol = Tolerances(**{k: _number(v, f"tolerances.{k}")
                        for k, v in sections.get("tolerances", {}).items()})
    int_keys = {"num_samples", "mode_cap", "seed", "y_samples_per_node", "z_draws"}
    smp = Sampling(**{k: _number(v, f"sampling.{k}", int if k in int_keys else float)
                      for k, v in sections.get("sampling", {}).items()})
    deltas = sections.get("deltas", {}).get("values", list(DEFAULT_DELTAS))
    if not isinstance(deltas, list):
        raise InvalidProblem("deltas.values", "expected a list of radii")
    deltas = tuple(_number(d, "deltas.values") for d in deltas)

    try:
        spec = ProblemSpec.create(n, N, f[0], b0, omega, y0, phi=phi, r=r, kind=kind,
                                  shoot_step=step, resolution=res, tolerances=tol,
                                  sampling=smp, deltas=deltas)
    except InvalidProblem:
        raise
    except ExprError as err:
        raise InvalidProblem(_which_expr(err, f, y0, phi, n, N), str(err)) from None
    except ValueError as err:
        msg = str(err)
        key = ("domain.omega" if "omega" in msg or "axis" in msg
               else "family" if "family" in msg else "problem")
        raise InvalidProblem(key, str(err)) from None

    opts = sections.get("options", {})
    cont = opts.get("continue_on_failure", False)
    if not isinstance(cont, bool):
        raise InvalidProblem("options.continue_on_failure", "expected true or false")
    report = sections.get("output", {}).get("report")
    if report is not None and not isinstance(report, str):
        raise InvalidProblem("output.report", "expected a path string")
    return ProblemFile(spec, sections, cont, report)


def _which_expr(err, f, y0, phi, n, N) -> str:
    """Name the key whose expression fails to parse."""
    from .expr import parse

    checks = [("problem.f", f, None), ("candidate.y0", y0, "x"), ("family.phi", phi or [], "xl")]
    for key, items, allowed in checks:
        for text in items:
            try:
                parse(text, n, N) if allowed is None else parse(text, n, N, allowed_vars=allowed)
            except ExprError:
                return key
    return "problem"


def load_problem_file(path) -> ProblemFile:
    text = Path(path).read_text()
    sections, lines = parse_problem_text(text)
    pf = problem_from_sections(sections)
    pf.lines = lines
    return pf


def load_problem(path) -> ProblemSpec:
    """Read, validate and default a problem file."""
    return load_problem_file(path).spec
