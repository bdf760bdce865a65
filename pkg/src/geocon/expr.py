"""Scalar expressions over named variables.

A small expression language used throughout the package for vector-field
components, cost functions and Christoffel symbols: decimal constants,
variables, ``sin cos exp log sqrt``, the four arithmetic operations and
integer powers.  Trees are immutable; the only rewriting ever applied is
constant folding plus zero/one elimination, so numerical behaviour stays
predictable (no CAS-grade simplification).

Evaluation is generic over the scalar type.  Plain floats work, and so do
(nested) :class:`Dual` numbers, which is how exact directional derivatives
and jets of flow maps are obtained elsewhere in the package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence, Union

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt")

MAX_JET_DEPTH = 4  # nested forward-mode carriers supported up to 4th order


class ExprError(Exception):
    """Base class for expression-level failures."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, column: int):
        super().__init__(f"syntax error at column {column}: {message}")
        self.column = column


class UnknownIdentifierError(ExprError):
    def __init__(self, name: str, column: int | None = None):
        where = f" at column {column}" if column is not None else ""
        super().__init__(f"unknown identifier '{name}'{where}")
        self.name = name
        self.column = column


class DomainEvalError(ExprError):
    """Evaluation hit a singular point (log of nonpositive, division by zero...)."""

    def __init__(self, message: str, column: int | None = None):
        where = f" (at column {column})" if column is not None else ""
        super().__init__(f"{message}{where}")
        self.column = column


# ---------------------------------------------------------------------------
# AST nodes.  `pos` is the 0-based source column when the node came from the
# parser; it never takes part in equality so rebuilt trees compare equal.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: float
    pos: int | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Var:
    name: str
    pos: int | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Call:
    fn: str
    arg: "Expr"
    pos: int | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Neg:
    arg: "Expr"
    pos: int | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Add:
    left: "Expr"
    right: "Expr"
    pos: int | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Sub:
    left: "Expr"
    right: "Expr"
    pos: int | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Mul:
    left: "Expr"
    right: "Expr"
    pos: int | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Div:
    left: "Expr"
    right: "Expr"
    pos: int | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: int
    pos: int | None = field(default=None, compare=False, repr=False)


Expr = Union[Const, Var, Call, Neg, Add, Sub, Mul, Div, Pow]

ZERO = Const(0.0)
ONE = Const(1.0)


def _is_const(e: Expr, v: float | None = None) -> bool:
    return isinstance(e, Const) and (v is None or e.value == v)


# ---------------------------------------------------------------------------
# Smart constructors: constant folding and zero/one elimination only.
# ---------------------------------------------------------------------------


def const(v) -> Const:
    return Const(float(v))


def var(name: str) -> Var:
    return Var(name)


def add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return Add(a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    if a == b:
        return Const(0.0)
    return Sub(a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return Const(0.0)
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    return Mul(a, b)


def div(a: Expr, b: Expr) -> Expr:
    if _is_const(b, 1.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const) and b.value != 0.0:
        return Const(a.value / b.value)
    return Div(a, b)


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def pow_(base: Expr, exponent: int) -> Expr:
    n = int(exponent)
    if n == 0:
        return Const(1.0)
    if n == 1:
        return base
    if isinstance(base, Const) and not (base.value == 0.0 and n < 0):
        try:
            return Const(base.value ** n)
        except OverflowError:
            pass  # keep the node; evaluation overflows to inf at run time
    return Pow(base, n)


def call(fn: str, arg: Expr) -> Expr:
    if fn not in FUNCTIONS:
        raise ExprError(f"unknown function '{fn}'")
    if isinstance(arg, Const):
        try:
            return Const(_FLOAT_FN[fn](arg.value))
        except ValueError:
            pass  # keep the node; evaluation reports the domain error
    return Call(fn, arg)


_FLOAT_FN = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": math.exp,
    "log": math.log,
    "sqrt": math.sqrt,
}


def expr_sum(terms: Iterable[Expr]) -> Expr:
    out: Expr = Const(0.0)
    for t in terms:
        out = add(out, t)
    return out


def is_zero(e: Expr) -> bool:
    """True when the expression folded to the literal zero constant."""
    return _is_const(e, 0.0)


# ---------------------------------------------------------------------------
# Parser.  Precedence: ^  >  unary -  >  * /  >  + -, left associative.
# Exponents must be constant integers (optionally signed / parenthesized).
# ---------------------------------------------------------------------------

_TOK_OPS = set("+-*/^()")


def _tokenize(src: str):
    tokens = []
    i, n = 0, len(src)
    while i < n:
        ch = src[i]
        if ch.isspace():
            i += 1
            continue
        if ch in _TOK_OPS:
            tokens.append((ch, ch, i))
            i += 1
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and src[i + 1].isdigit()):
            j = i
            while j < n and (src[j].isdigit() or src[j] == "."):
                j += 1
            if j < n and src[j] in "eE":
                k = j + 1
                if k < n and src[k] in "+-":
                    k += 1
                if k < n and src[k].isdigit():
                    j = k
                    while j < n and src[j].isdigit():
                        j += 1
            text = src[i:j]
            try:
                value = float(text)
            except ValueError:
                raise ExprSyntaxError(f"bad number '{text}'", i + 1) from None
            if not math.isfinite(value):
                raise ExprSyntaxError(f"number '{text}' overflows a double", i + 1)
            tokens.append(("num", text, i))
            i = j
            continue
        if ch.isalpha():
            j = i
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            tokens.append(("ident", src[i:j], i))
            i = j
            continue
        raise ExprSyntaxError(f"unexpected character '{ch}'", i + 1)
    tokens.append(("eof", "", n))
    return tokens


class _Parser:
    def __init__(self, tokens, variables: frozenset[str] | None):
        self.tokens = tokens
        self.i = 0
        self.variables = variables

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, kind: str):
        tok = self.advance()
        if tok[0] != kind:
            shown = tok[1] if tok[0] != "eof" else "end of input"
            raise ExprSyntaxError(f"expected '{kind}', found {shown!r}", tok[2] + 1)
        return tok

    def parse(self) -> Expr:
        e = self.expr()
        tok = self.peek()
        if tok[0] != "eof":
            raise ExprSyntaxError(f"unexpected {tok[1]!r}", tok[2] + 1)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek()[0] in ("+", "-"):
            op = self.advance()
            rhs = self.term()
            e = add(e, rhs) if op[0] == "+" else sub(e, rhs)
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.peek()[0] in ("*", "/"):
            op = self.advance()
            rhs = self.unary()
            e = mul(e, rhs) if op[0] == "*" else div(e, rhs)
        return e

    def unary(self) -> Expr:
        if self.peek()[0] == "-":
            tok = self.advance()
            inner = self.unary()
            out = neg(inner)
            if isinstance(out, Neg):
                out = Neg(out.arg, pos=tok[2])
            return out
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek()[0] == "^":
            self.advance()
            n = self.exponent()
            return pow_(base, n)
        return base

    def exponent(self) -> int:
        tok = self.peek()
        if tok[0] == "(":
            self.advance()
            n = self.exponent()
            self.expect(")")
            return n
        sign = 1
        if tok[0] == "-":
            self.advance()
            sign = -1
            tok = self.peek()
        if tok[0] != "num":
            shown = tok[1] if tok[0] != "eof" else "end of input"
            raise ExprSyntaxError(f"expected integer exponent, found {shown!r}", tok[2] + 1)
        self.advance()
        value = float(tok[1])
        if value != int(value) or any(c in tok[1] for c in ".eE"):
            raise ExprSyntaxError("exponent must be a constant integer", tok[2] + 1)
        return sign * int(value)

    def atom(self) -> Expr:
        tok = self.advance()
        kind, text, pos = tok
        if kind == "num":
            return Const(float(text), pos=pos)
        if kind == "ident":
            if self.peek()[0] == "(":
                if text not in FUNCTIONS:
                    raise ExprSyntaxError(f"unknown function '{text}'", pos + 1)
                self.advance()
                arg = self.expr()
                self.expect(")")
                out = call(text, arg)
                if isinstance(out, Call):
                    out = Call(out.fn, out.arg, pos=pos)
                return out
            if text in FUNCTIONS:
                raise ExprSyntaxError(f"function '{text}' needs an argument list", pos + 1)
            if self.variables is not None and text not in self.variables:
                raise UnknownIdentifierError(text, pos + 1)
            return Var(text, pos=pos)
        if kind == "(":
            e = self.expr()
            self.expect(")")
            return e
        shown = text if kind != "eof" else "end of input"
        raise ExprSyntaxError(f"expected operand, found {shown!r}", pos + 1)


def parse_expression(src: str, variables: Iterable[str] | None = None) -> Expr:
    """Parse `src` into an expression tree.

    When `variables` is given, any identifier outside it raises
    :class:`UnknownIdentifierError` (function names are always reserved).
    """
    declared = frozenset(variables) if variables is not None else None
    return _Parser(_tokenize(src), declared).parse()


# ---------------------------------------------------------------------------
# Rendering.  The output reparses to an equal tree (positions ignored).
# ---------------------------------------------------------------------------

_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


def _prec(e: Expr) -> int:
    if isinstance(e, (Add, Sub)):
        return _PREC_ADD
    if isinstance(e, (Mul, Div)):
        return _PREC_MUL
    if isinstance(e, Neg):
        return _PREC_NEG
    if isinstance(e, Const) and e.value < 0:
        return _PREC_NEG  # "-2" binds like a unary minus once re-read
    if isinstance(e, Pow):
        return _PREC_POW
    return _PREC_ATOM


def _const_text(v: float) -> str:
    if v == int(v) and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def render(e: Expr, min_prec: int = 0) -> str:
    p = _prec(e)
    if isinstance(e, Const):
        s = _const_text(e.value)
    elif isinstance(e, Var):
        s = e.name
    elif isinstance(e, Call):
        s = f"{e.fn}({render(e.arg)})"
    elif isinstance(e, Neg):
        s = f"-{render(e.arg, _PREC_NEG)}"
    elif isinstance(e, Add):
        s = f"{render(e.left, _PREC_ADD)} + {render(e.right, _PREC_ADD + 1)}"
    elif isinstance(e, Sub):
        s = f"{render(e.left, _PREC_ADD)} - {render(e.right, _PREC_ADD + 1)}"
    elif isinstance(e, Mul):
        s = f"{render(e.left, _PREC_MUL)}*{render(e.right, _PREC_MUL + 1)}"
    elif isinstance(e, Div):
        s = f"{render(e.left, _PREC_MUL)}/{render(e.right, _PREC_MUL + 1)}"
    elif isinstance(e, Pow):
        s = f"{render(e.base, _PREC_ATOM)}^{e.exponent}"
    else:  # pragma: no cover
        raise TypeError(f"not an expression node: {e!r}")
    if p < min_prec:
        return f"({s})"
    return s


# ---------------------------------------------------------------------------
# Structure queries and substitution.
# ---------------------------------------------------------------------------


def free_variables(e: Expr) -> frozenset[str]:
    if isinstance(e, Var):
        return frozenset((e.name,))
    if isinstance(e, Const):
        return frozenset()
    if isinstance(e, (Call, Neg)):
        return free_variables(e.arg)
    if isinstance(e, Pow):
        return free_variables(e.base)
    return free_variables(e.left) | free_variables(e.right)


def substitute(e: Expr, mapping: Mapping[str, "Expr | float"]) -> Expr:
    """Replace variables by expressions or numbers, folding as it goes."""
    if isinstance(e, Var):
        if e.name in mapping:
            rep = mapping[e.name]
            return rep if not isinstance(rep, (int, float)) else Const(float(rep))
        return e
    if isinstance(e, Const):
        return e
    if isinstance(e, Call):
        return call(e.fn, substitute(e.arg, mapping))
    if isinstance(e, Neg):
        return neg(substitute(e.arg, mapping))
    if isinstance(e, Pow):
        return pow_(substitute(e.base, mapping), e.exponent)
    a, b = substitute(e.left, mapping), substitute(e.right, mapping)
    if isinstance(e, Add):
        return add(a, b)
    if isinstance(e, Sub):
        return sub(a, b)
    if isinstance(e, Mul):
        return mul(a, b)
    return div(a, b)


# ---------------------------------------------------------------------------
# Differentiation: exact symbolic partial derivative, folded on the way out.
# ---------------------------------------------------------------------------


def differentiate(e: Expr, name: str) -> Expr:
    if isinstance(e, Const):
        return Const(0.0)
    if isinstance(e, Var):
        return Const(1.0) if e.name == name else Const(0.0)
    if isinstance(e, Neg):
        return neg(differentiate(e.arg, name))
    if isinstance(e, Add):
        return add(differentiate(e.left, name), differentiate(e.right, name))
    if isinstance(e, Sub):
        return sub(differentiate(e.left, name), differentiate(e.right, name))
    if isinstance(e, Mul):
        return add(
            mul(differentiate(e.left, name), e.right),
            mul(e.left, differentiate(e.right, name)),
        )
    if isinstance(e, Div):
        num = sub(
            mul(differentiate(e.left, name), e.right),
            mul(e.left, differentiate(e.right, name)),
        )
        return div(num, pow_(e.right, 2))
    if isinstance(e, Pow):
        inner = differentiate(e.base, name)
        return mul(mul(Const(float(e.exponent)), pow_(e.base, e.exponent - 1)), inner)
    if isinstance(e, Call):
        inner = differentiate(e.arg, name)
        if e.fn == "sin":
            outer: Expr = call("cos", e.arg)
        elif e.fn == "cos":
            outer = neg(call("sin", e.arg))
        elif e.fn == "exp":
            outer = call("exp", e.arg)
        elif e.fn == "log":
            outer = div(Const(1.0), e.arg)
        else:  # sqrt
            outer = div(Const(0.5), call("sqrt", e.arg))
        return mul(outer, inner)
    raise TypeError(f"not an expression node: {e!r}")  # pragma: no cover


# ---------------------------------------------------------------------------
# Dual numbers.  Components may themselves be Duals, giving nested
# forward-mode carriers; depth d recovers derivatives up to order d.
# ---------------------------------------------------------------------------


class Dual:
    __slots__ = ("re", "du")

    def __init__(self, re, du):
        self.re = re
        self.du = du

    def __repr__(self):
        return f"Dual({self.re!r}, {self.du!r})"

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.re + other.re, self.du + other.du)
        return Dual(self.re + other, self.du)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.re - other.re, self.du - other.du)
        return Dual(self.re - other, self.du)

    def __rsub__(self, other):
        return Dual(other - self.re, -self.du)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(self.re * other.re, self.re * other.du + self.du * other.re)
        return Dual(self.re * other, self.du * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            if real_part(other.re) == 0.0:
                raise ZeroDivisionError("division by a dual with zero real part")
            return Dual(
                self.re / other.re,
                (self.du * other.re - self.re * other.du) / (other.re * other.re),
            )
        return Dual(self.re / other, self.du / other)

    def __rtruediv__(self, other):
        if real_part(self.re) == 0.0:
            raise ZeroDivisionError("division by a dual with zero real part")
        return Dual(other / self.re, -other * self.du / (self.re * self.re))

    def __neg__(self):
        return Dual(-self.re, -self.du)

    def __pos__(self):
        return self

    def __pow__(self, n):
        return _ipow(self, n)

    def sin(self):
        return Dual(_sin(self.re), _cos(self.re) * self.du)

    def cos(self):
        return Dual(_cos(self.re), -_sin(self.re) * self.du)

    def exp(self):
        e = _exp(self.re)
        return Dual(e, e * self.du)

    def log(self):
        return Dual(_log(self.re), self.du / self.re)

    def sqrt(self):
        r = _sqrt(self.re)
        return Dual(r, self.du / (2.0 * r))


def real_part(x) -> float:
    """Strip all derivative carriers from a scalar."""
    while isinstance(x, Dual):
        x = x.re
    return float(x)


def jet_seed(x0: float, depth: int):
    """A scalar carrying unit derivative seeds at `depth` nested levels."""
    if depth > MAX_JET_DEPTH:
        raise ExprError(f"jet depth {depth} exceeds the supported maximum {MAX_JET_DEPTH}")
    v = float(x0)
    for _ in range(depth):
        v = Dual(v, 1.0)
    return v


def jet_coefficient(value, order: int, depth: int) -> float:
    """The `order`-th derivative carried by a depth-`depth` evaluation."""
    v = value
    for _ in range(order):
        v = v.du if isinstance(v, Dual) else 0.0
    for _ in range(depth - order):
        v = v.re if isinstance(v, Dual) else v
    return float(v)


def _sin(x):
    return x.sin() if isinstance(x, Dual) else math.sin(x)


def _cos(x):
    return x.cos() if isinstance(x, Dual) else math.cos(x)


def _exp(x):
    return x.exp() if isinstance(x, Dual) else math.exp(x)


def _log(x):
    return x.log() if isinstance(x, Dual) else math.log(x)


def _sqrt(x):
    return x.sqrt() if isinstance(x, Dual) else math.sqrt(x)


def _ipow(v, n: int):
    n = int(n)
    if n == 0:
        return 1.0
    if n < 0:
        return 1.0 / _ipow(v, -n)
    out = v
    for _ in range(n - 1):
        out = out * v
    return out


# ---------------------------------------------------------------------------
# Evaluation.  The recursive walker reports domain errors with the source
# column of the offending node; compiled expressions (below) trade that
# reporting for speed and are what the integrators use.
# ---------------------------------------------------------------------------


def evaluate(e: Expr, env: Mapping[str, object]):
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise UnknownIdentifierError(e.name, None if e.pos is None else e.pos + 1) from None
    if isinstance(e, Neg):
        return -evaluate(e.arg, env)
    if isinstance(e, Add):
        return evaluate(e.left, env) + evaluate(e.right, env)
    if isinstance(e, Sub):
        return evaluate(e.left, env) - evaluate(e.right, env)
    if isinstance(e, Mul):
        return evaluate(e.left, env) * evaluate(e.right, env)
    if isinstance(e, Div):
        denom = evaluate(e.right, env)
        if real_part(denom) == 0.0:
            raise DomainEvalError("division by zero", None if e.pos is None else e.pos + 1)
        return evaluate(e.left, env) / denom
    if isinstance(e, Pow):
        base = evaluate(e.base, env)
        if e.exponent < 0 and real_part(base) == 0.0:
            raise DomainEvalError(
                "zero raised to a negative power", None if e.pos is None else e.pos + 1
            )
        return _ipow(base, e.exponent)
    if isinstance(e, Call):
        v = evaluate(e.arg, env)
        col = None if e.pos is None else e.pos + 1
        if e.fn == "log" and real_part(v) <= 0.0:
            raise DomainEvalError("log of a non-positive value", col)
        if e.fn == "sqrt" and real_part(v) < 0.0:
            raise DomainEvalError("sqrt of a negative value", col)
        return {"sin": _sin, "cos": _cos, "exp": _exp, "log": _log, "sqrt": _sqrt}[e.fn](v)
    raise TypeError(f"not an expression node: {e!r}")  # pragma: no cover


_COMPILE_NS = {
    "_sin": _sin,
    "_cos": _cos,
    "_exp": _exp,
    "_log": _log,
    "_sqrt": _sqrt,
    "_ipow": _ipow,
    "__builtins__": {},
}


def _codegen(e: Expr, index: Mapping[str, int]) -> str:
    if isinstance(e, Const):
        return repr(e.value)
    if isinstance(e, Var):
        try:
            return f"_v[{index[e.name]}]"
        except KeyError:
            raise UnknownIdentifierError(e.name) from None
    if isinstance(e, Neg):
        return f"(-{_codegen(e.arg, index)})"
    if isinstance(e, Add):
        return f"({_codegen(e.left, index)} + {_codegen(e.right, index)})"
    if isinstance(e, Sub):
        return f"({_codegen(e.left, index)} - {_codegen(e.right, index)})"
    if isinstance(e, Mul):
        return f"({_codegen(e.left, index)} * {_codegen(e.right, index)})"
    if isinstance(e, Div):
        return f"({_codegen(e.left, index)} / {_codegen(e.right, index)})"
    if isinstance(e, Pow):
        return f"_ipow({_codegen(e.base, index)}, {e.exponent})"
    if isinstance(e, Call):
        return f"_{e.fn}({_codegen(e.arg, index)})"
    raise TypeError(f"not an expression node: {e!r}")  # pragma: no cover


def compile_expression(e: Expr, variables: Sequence[str]) -> Callable:
    """Compile to `f(values) -> scalar` with `values` ordered like `variables`.

    The compiled form raises bare ZeroDivisionError/ValueError on domain
    faults; use :func:`evaluate` when located error reports matter.
    """
    index = {name: i for i, name in enumerate(variables)}
    src = f"lambda _v: {_codegen(e, index)}"
    return eval(src, dict(_COMPILE_NS))  # noqa: S307 - generated from our own AST
