"""Expression trees for Lagrangians, candidates and families.

Expressions are immutable trees built from constants, named variables,
elementary functions and arithmetic.  Variables use canonical names:

* ``x1 .. xn``      independent variables
* ``y1 .. yN``      dependent variables
* ``zjk``           gradient slot ``d y_j / d x_k`` (``zk`` accepted when N = 1)
* ``l1 .. lN``      family parameters

Evaluation is vectorized: every variable may be bound to a scalar or to a
numpy array and the usual broadcasting rules apply.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Union

import numpy as np

__all__ = [
    "Expr",
    "Const",
    "Var",
    "Unary",
    "Binary",
    "Pow",
    "ExprError",
    "ParseError",
    "DomainError",
    "UnboundVariableError",
    "parse",
    "evaluate",
    "diff",
    "to_string",
    "variables",
    "const",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "power",
    "func",
    "VAR_CLASSES",
]

FUNCTIONS = ("sin", "cos", "sinh", "cosh", "tanh", "exp", "log", "sqrt")
VAR_CLASSES = frozenset("xyzl")


class ExprError(ValueError):
    """Base class for expression errors."""


class ParseError(ExprError):
    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} at offset {offset}"
        super().__init__(message)


class DomainError(ExprError, ArithmeticError):
    """Evaluation left the real domain of an operation."""

    def __init__(self, op: str, index: int | None = None):
        self.op = op
        self.index = index
        where = "" if index is None else f" (flat index {index})"
        super().__init__(f"domain error in {op}{where}")


class UnboundVariableError(ExprError, KeyError):
    def __init__(self, name: str):
        self.name = name
        ExprError.__init__(self, f"unbound variable {name!r}")

    __str__ = ExprError.__str__


class Expr:
    """Base class of expression nodes."""

    __slots__ = ()

    def eval(self, env: Mapping[str, object], errors: str = "raise"):
        return evaluate(self, env, errors=errors)

    def diff(self, var: str) -> "Expr":
        return diff(self, var)

    def __str__(self) -> str:
        return to_string(self)


@dataclass(frozen=True, slots=True)
class Const(Expr):
    value: float


@dataclass(frozen=True, slots=True)
class Var(Expr):
    name: str


@dataclass(frozen=True, slots=True)
class Unary(Expr):
    op: str  # "neg" or one of FUNCTIONS
    arg: Expr


@dataclass(frozen=True, slots=True)
class Binary(Expr):
    op: str  # one of "+", "-", "*", "/"
    left: Expr
    right: Expr


@dataclass(frozen=True, slots=True)
class Pow(Expr):
    base: Expr
    exponent: float


ZERO = Const(0.0)
ONE = Const(1.0)


# ---------------------------------------------------------------------------
# smart constructors: constant folding and identity elimination only

def _is_const(e: Expr, value: float | None = None) -> bool:
    return isinstance(e, Const) and (value is None or e.value == value)


def const(value: float) -> Const:
    return Const(float(value))


def add(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        return Const(a.value + b.value)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return Binary("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        return Const(a.value - b.value)
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    return Binary("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        return Const(a.value * b.value)
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    if _is_const(a, -1.0):
        return neg(b)
    if _is_const(b, -1.0):
        return neg(a)
    return Binary("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b) and b.value != 0.0:
        return Const(a.value / b.value)
    if _is_const(a, 0.0):
        return ZERO
    if _is_const(b, 1.0):
        return a
    return Binary("/", a, b)


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Unary) and a.op == "neg":
        return a.arg
    return Unary("neg", a)


def power(base: Expr, exponent: float) -> Expr:
    exponent = float(exponent)
    if exponent == 0.0:
        return ONE
    if exponent == 1.0:
        return base
    if isinstance(base, Const):
        try:
            return Const(_scalar_pow(base.value, exponent))
        except DomainError:
            pass
    return Pow(base, exponent)


_SCALAR_FUNCS = {
    "sin": math.sin,
    "cos": math.cos,
    "sinh": math.sinh,
    "cosh": math.cosh,
    "tanh": math.tanh,
    "exp": math.exp,
    "log": math.log,
    "sqrt": math.sqrt,
}


def func(name: str, arg: Expr) -> Expr:
    if name not in _SCALAR_FUNCS:
        raise ExprError(f"unknown function {name!r}")
    if isinstance(arg, Const):
        try:
            value = _SCALAR_FUNCS[name](arg.value)
        except (ValueError, OverflowError):
            value = None
        if value is not None and math.isfinite(value):
            return Const(value)
    return Unary(name, arg)


def _scalar_pow(base: float, exponent: float) -> float:
    if float(exponent).is_integer():
        if base == 0.0 and exponent < 0:
            raise DomainError("pow")
    elif base <= 0.0:
        raise DomainError("pow")
    try:
        value = base ** exponent
    except OverflowError:
        raise DomainError("pow") from None
    if not math.isfinite(value):
        raise DomainError("pow")
    return float(value)


# ---------------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()])"
    r")"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


def canonical_variable(ident: str, n: int, N: int) -> str | None:
    """Return the canonical variable name for ``ident`` or ``None``.

    Raises ``ParseError`` for a well-formed variable whose index is out of
    range for the dimensions ``(n, N)``.
    """
    m = re.fullmatch(r"([xylz])(\d+)", ident)
    if m is None:
        return None
    cls, digits = m.groups()
    if cls == "z":
        if N == 1 and len(digits) == 1:
            j, k = 1, int(digits)
        elif len(digits) == 2:
            j, k = int(digits[0]), int(digits[1])
        else:
            raise ParseError(f"cannot read gradient variable {ident!r}")
        if not (1 <= j <= N and 1 <= k <= n):
            raise ParseError(f"index out of range in {ident!r}")
        return f"z{j}{k}"
    if digits.startswith("0") and digits != "0":
        raise ParseError(f"bad index in {ident!r}")
    idx = int(digits)
    bound = n if cls == "x" else N
    if not 1 <= idx <= bound:
        raise ParseError(f"index out of range in {ident!r}")
    return f"{cls}{idx}"


class _Parser:
    def __init__(self, text, n, N, allowed):
        self.tokens = _tokenize(text)
        self.i = 0
        self.n = n
        self.N = N
        self.allowed = allowed

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, pos = self.take()
        if text != value or kind == "end":
            found = "end of input" if kind == "end" else repr(text)
            raise ParseError(f"expected {value!r}, found {found}", pos)

    def parse(self):
        e = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {text!r}", pos)
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            e = add(e, rhs) if op == "+" else sub(e, rhs)
        return e

    def term(self):
        e = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.unary()
            e = mul(e, rhs) if op == "*" else div(e, rhs)
        return e

    def unary(self):
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return neg(self.unary())
        if self.peek()[:2] == ("op", "+"):
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[:2] == ("op", "^"):
            pos = self.take()[2]
            exponent = self.unary()
            if not isinstance(exponent, Const):
                raise ParseError("exponent must be a constant", pos + 1)
            return power(base, exponent.value)
        return base

    def atom(self):
        kind, text, pos = self.take()
        if kind == "num":
            return Const(float(text))
        if kind == "ident":
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return func(text, arg)
            if text == "pi":
                return Const(math.pi)
            if text == "e":
                return Const(math.e)
            name = canonical_variable(text, self.n, self.N)
            if name is None:
                raise ParseError(f"unknown identifier {text!r}", pos)
            if name[0] not in self.allowed:
                raise ParseError(f"variable {text!r} not allowed here", pos)
            return Var(name)
        if kind == "op" and text == "(":
            e = self.expr()
            self.expect(")")
            return e
        found = "end of input" if kind == "end" else repr(text)
        raise ParseError(f"unexpected {found}", pos)


def parse(text: str, n: int = 1, N: int = 1,
          allowed_vars: Iterable[str] = VAR_CLASSES) -> Expr:
    """Parse ``text`` into an expression tree.

    ``allowed_vars`` is a collection of variable classes among ``"x"``,
    ``"y"``, ``"z"`` and ``"l"``.  Unary minus binds looser than ``^`` so
    that ``-z1^2`` means ``-(z1^2)``.
    """
    allowed = frozenset(allowed_vars)
    if not allowed <= VAR_CLASSES:
        raise ValueError(f"unknown variable classes {set(allowed - VAR_CLASSES)}")
    return _Parser(text, n, N, allowed).parse()


# ---------------------------------------------------------------------------
# printing

def _fmt_const(value: float) -> str:
    s = repr(float(value))
    if s in ("inf", "-inf", "nan"):
        raise ExprError(f"cannot print non-finite constant {s}")
    return f"({s})" if value < 0 or s.startswith("-") else s


def to_string(e: Expr) -> str:
    """Fully parenthesized text that parses back to the same tree."""
    if isinstance(e, Const):
        return _fmt_const(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Unary):
        if e.op == "neg":
            return f"(-{to_string(e.arg)})"
        return f"{e.op}({to_string(e.arg)})"
    if isinstance(e, Binary):
        return f"({to_string(e.left)} {e.op} {to_string(e.right)})"
    if isinstance(e, Pow):
        return f"({to_string(e.base)}^{_fmt_const(e.exponent)})"
    raise TypeError(f"not an expression: {e!r}")


def variables(e: Expr) -> frozenset[str]:
    if isinstance(e, Var):
        return frozenset((e.name,))
    if isinstance(e, Const):
        return frozenset()
    if isinstance(e, Unary):
        return variables(e.arg)
    if isinstance(e, Pow):
        return variables(e.base)
    return variables(e.left) | variables(e.right)


# ---------------------------------------------------------------------------
# evaluation

class _Evaluator:
    def __init__(self, env, errors):
        self.env = env
        self.strict = errors == "raise"

    def check(self, op, value, bad):
        """Flag ``bad`` entries: raise in strict mode, else set them to nan."""
        if np.ndim(bad) == 0:
            if bad:
                if self.strict:
                    raise DomainError(op)
                return np.nan
            return value
        if bad.any():
            if self.strict:
                raise DomainError(op, int(np.flatnonzero(bad)[0]))
            value = np.where(bad, np.nan, value)
        return value

    def overflow(self, op, value):
        return self.check(op, value, np.isinf(value))

    def run(self, e):
        if isinstance(e, Const):
            return e.value
        if isinstance(e, Var):
            try:
                return self.env[e.name]
            except KeyError:
                raise UnboundVariableError(e.name) from None
        if isinstance(e, Binary):
            a = self.run(e.left)
            b = self.run(e.right)
            if e.op == "+":
                return self.overflow("add", np.add(a, b))
            if e.op == "-":
                return self.overflow("sub", np.subtract(a, b))
            if e.op == "*":
                return self.overflow("mul", np.multiply(a, b))
            bad = np.equal(b, 0.0)
            b_safe = np.where(bad, 1.0, b) if np.ndim(bad) else (1.0 if bad else b)
            value = self.check("div", np.divide(a, b_safe), bad)
            return self.overflow("div", value)
        if isinstance(e, Pow):
            a = self.run(e.base)
            p = e.exponent
            if p.is_integer():
                bad = np.equal(a, 0.0) if p < 0 else np.zeros(np.shape(a), bool)
            else:
                bad = np.less_equal(a, 0.0)
            a_safe = np.where(bad, 1.0, a)
            value = self.check("pow", np.power(a_safe, p), bad)
            value = self.overflow("pow", value)
            return value if np.ndim(value) else float(value)
        if isinstance(e, Unary):
            a = self.run(e.arg)
            op = e.op
            if op == "neg":
                return np.negative(a)
            if op == "log":
                bad = np.less_equal(a, 0.0)
                value = self.check("log", np.log(np.where(bad, 1.0, a)), bad)
            elif op == "sqrt":
                bad = np.less(a, 0.0)
                value = self.check("sqrt", np.sqrt(np.where(bad, 0.0, a)), bad)
            else:
                value = self.overflow(op, getattr(np, op)(a))
            return value if np.ndim(value) else float(value)
        raise TypeError(f"not an expression: {e!r}")


def evaluate(e: Expr, env: Mapping[str, object], errors: str = "raise"):
    """Evaluate ``e`` with variables bound by ``env``.

    With ``errors="raise"`` any domain violation (division by zero, log or
    non-integer power of a non-positive number, sqrt of a negative number,
    overflow) raises :class:`DomainError`.  With ``errors="nan"`` offending
    entries become nan instead, which is convenient inside iterative solvers.
    The result is a float for scalar inputs and an array otherwise.
    """
    if errors not in ("raise", "nan"):
        raise ValueError(f"errors must be 'raise' or 'nan', got {errors!r}")
    with np.errstate(all="ignore"):
        value = _Evaluator(env, errors).run(e)
    if np.ndim(value) == 0:
        return float(value)
    return value


# ---------------------------------------------------------------------------
# differentiation

def diff(e: Expr, var: str) -> Expr:
    """Exact partial derivative of ``e`` with respect to the variable ``var``."""
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == var else ZERO
    if isinstance(e, Binary):
        a, b = e.left, e.right
        da, db = diff(a, var), diff(b, var)
        if e.op == "+":
            return add(da, db)
        if e.op == "-":
            return sub(da, db)
        if e.op == "*":
            return add(mul(da, b), mul(a, db))
        # quotient rule
        return div(sub(mul(da, b), mul(a, db)), power(b, 2.0))
    if isinstance(e, Pow):
        du = diff(e.base, var)
        if _is_const(du, 0.0):
            return ZERO
        p = e.exponent
        return mul(mul(Const(p), power(e.base, p - 1.0)), du)
    if isinstance(e, Unary):
        u = e.arg
        du = diff(u, var)
        if _is_const(du, 0.0):
            return ZERO
        op = e.op
        if op == "neg":
            return neg(du)
        if op == "sin":
            outer = func("cos", u)
        elif op == "cos":
            outer = neg(func("sin", u))
        elif op == "sinh":
            outer = func("cosh", u)
        elif op == "cosh":
            outer = func("sinh", u)
        elif op == "tanh":
            outer = sub(ONE, power(func("tanh", u), 2.0))
        elif op == "exp":
            outer = e
        elif op == "log":
            return div(du, u)
        elif op == "sqrt":
            return div(du, mul(Const(2.0), e))
        else:
            raise ExprError(f"unknown function {op!r}")
        return mul(outer, du)
    raise TypeError(f"not an expression: {e!r}")


ExprLike = Union[Expr, str, float, int]


def as_expr(value: ExprLike, n: int = 1, N: int = 1,
            allowed_vars: Iterable[str] = VAR_CLASSES) -> Expr:
    """Coerce strings and numbers to expressions."""
    if isinstance(value, Expr):
        return value
    if isinstance(value, str):
        return parse(value, n, N, allowed_vars)
    if isinstance(value, (int, float)):
        return Const(float(value))
    raise TypeError(f"cannot make an expression from {value!r}")
