"""Arithmetic expressions over the variables ``x``, ``t`` and ``u``.

Coefficients, sources and nonlinearities arrive as short strings such as
``"x*(1-x)"`` or ``"exp(-t)*abs(x-0.5)^1.5"``.  :func:`parse` turns them into an
immutable tree which :func:`eval` evaluates on floats or on numpy arrays.

Grammar (``^`` binds tightest and is right associative, unary minus sits
below ``^`` so ``-x^2 == -(x^2)``)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := primary ('^' unary)?
    primary := NUMBER | NAME | NAME '(' expr (',' expr)* ')' | '(' expr ')'
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Expr", "Num", "Var", "Neg", "Add", "Sub", "Mul", "Div", "Pow", "Call",
    "ExprError", "ExprSyntaxError", "UnknownIdentifierError",
    "UnboundVariableError", "ExprDomainError",
    "parse", "eval", "evaluate", "free_vars", "to_source", "as_expr",
]

VARIABLES = frozenset({"x", "t", "u"})
FUNCTIONS = {"exp": 1, "sin": 1, "cos": 1, "sqrt": 1, "abs": 1,
             "min": 2, "max": 2, "pow": 2}


class ExprError(ValueError):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, offset, expected, source=""):
        self.offset = offset
        self.expected = expected
        super().__init__(f"syntax error at offset {offset}: expected {expected}"
                         + (f" in {source!r}" if source else ""))


class UnknownIdentifierError(ExprError):
    def __init__(self, name, offset):
        self.name = name
        self.offset = offset
        super().__init__(f"unknown identifier {name!r} at offset {offset}")


class UnboundVariableError(ExprError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"variable {name!r} is not bound")


class ExprDomainError(ExprError):
    pass


class Expr:
    """Base class of expression tree nodes."""

    __slots__ = ()

    def __str__(self):
        return to_source(self)


@dataclass(frozen=True)
class Num(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Neg(Expr):
    operand: Expr


@dataclass(frozen=True)
class Add(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Sub(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Mul(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Div(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: Expr


@dataclass(frozen=True)
class Call(Expr):
    func: str
    args: tuple


_BINARY = {"+": Add, "-": Sub, "*": Mul, "/": Div}
_SYMBOL = {Add: "+", Sub: "-", Mul: "*", Div: "/"}

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
""", re.VERBOSE)


def _tokenize(source):
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ExprSyntaxError(pos, "a number, name, operator or parenthesis",
                                  source)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source):
        self.source = source
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text, what):
        kind, value, pos = self.peek()
        if value != text or kind not in ("op",):
            raise ExprSyntaxError(pos, what, self.source)
        return self.advance()

    def parse(self):
        node = self.expr()
        kind, _, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(pos, "an operator or end of input", self.source)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = _BINARY[op](node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = _BINARY[op](node, self.unary())
        return node

    def unary(self):
        if self.peek()[:2] == ("op", "-"):
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.primary()
        if self.peek()[:2] == ("op", "^"):
            self.advance()
            return Pow(base, self.unary())
        return base

    def primary(self):
        kind, value, pos = self.advance()
        if kind == "num":
            number = float(value)
            if not math.isfinite(number):
                raise ExprSyntaxError(pos, "a finite numeric literal", self.source)
            return Num(number)
        if kind == "name":
            if self.peek()[:2] == ("op", "("):
                if value not in FUNCTIONS:
                    raise UnknownIdentifierError(value, pos)
                self.advance()
                args = [self.expr()]
                while self.peek()[:2] == ("op", ","):
                    self.advance()
                    args.append(self.expr())
                close = self.peek()
                self.expect(")", "',' or ')'")
                if len(args) != FUNCTIONS[value]:
                    raise ExprSyntaxError(
                        close[2], f"{FUNCTIONS[value]} argument(s) for {value}()",
                        self.source)
                return Call(value, tuple(args))
            if value in VARIABLES:
                return Var(value)
            raise UnknownIdentifierError(value, pos)
        if (kind, value) == ("op", "("):
            node = self.expr()
            self.expect(")", "')'")
            return node
        raise ExprSyntaxError(pos, "a number, variable, function call or '('",
                              self.source)


def parse(source):
    """Parse ``source`` into an :class:`Expr` tree.

    Raises :class:`ExprSyntaxError` (with ``offset`` and ``expected``) or
    :class:`UnknownIdentifierError`.
    """
    if not isinstance(source, str) or not source.strip():
        raise ExprSyntaxError(0, "a non-empty expression")
    return _Parser(source).parse()


def as_expr(value):
    """Accept an :class:`Expr`, a source string or a number."""
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return parse(repr(float(value))) if value >= 0 else Neg(Num(-float(value)))
    return parse(value)


def free_vars(e):
    """Set of variable names occurring in ``e``."""
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Num):
        return set()
    if isinstance(e, Neg):
        return free_vars(e.operand)
    if isinstance(e, Pow):
        return free_vars(e.base) | free_vars(e.exponent)
    if isinstance(e, Call):
        out = set()
        for a in e.args:
            out |= free_vars(a)
        return out
    return free_vars(e.left) | free_vars(e.right)


def to_source(e):
    """Print ``e`` as fully parenthesised source that parses back to ``e``."""
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{to_source(e.operand)})"
    if isinstance(e, Pow):
        return f"({to_source(e.base)} ^ {to_source(e.exponent)})"
    if isinstance(e, Call):
        return f"{e.func}({', '.join(to_source(a) for a in e.args)})"
    return f"({to_source(e.left)} {_SYMBOL[type(e)]} {to_source(e.right)})"


def _domain_check(bad, message):
    if np.any(bad):
        raise ExprDomainError(message)


def _pow(base, expo):
    _domain_check((base < 0) & (expo != np.round(expo)),
                  "non-integer power of a negative base")
    _domain_check((base == 0) & (expo < 0), "zero raised to a negative power")
    return np.power(base, expo)


def _eval(e, env):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise UnboundVariableError(e.name) from None
    if isinstance(e, Neg):
        return -_eval(e.operand, env)
    if isinstance(e, Add):
        return _eval(e.left, env) + _eval(e.right, env)
    if isinstance(e, Sub):
        return _eval(e.left, env) - _eval(e.right, env)
    if isinstance(e, Mul):
        return _eval(e.left, env) * _eval(e.right, env)
    if isinstance(e, Div):
        num = _eval(e.left, env)
        den = _eval(e.right, env)
        _domain_check(np.asarray(den) == 0, "division by zero")
        return np.divide(num, den)
    if isinstance(e, Pow):
        return _pow(np.asarray(_eval(e.base, env), dtype=float),
                    np.asarray(_eval(e.exponent, env), dtype=float))
    args = [np.asarray(_eval(a, env), dtype=float) for a in e.args]
    name = e.func
    if name == "sqrt":
        _domain_check(args[0] < 0, "square root of a negative number")
        return np.sqrt(args[0])
    if name == "pow":
        return _pow(*args)
    if name == "min":
        return np.minimum(*args)
    if name == "max":
        return np.maximum(*args)
    return {"exp": np.exp, "sin": np.sin, "cos": np.cos, "abs": np.abs}[name](args[0])


def evaluate(e, x=None, t=None, u=None):
    """Evaluate ``e`` with numpy broadcasting; returns an ndarray.

    Variables left as ``None`` are unbound.  Overflow to a non-finite value
    is reported as :class:`ExprDomainError`.
    """
    env = {k: np.asarray(v, dtype=float)
           for k, v in (("x", x), ("t", t), ("u", u)) if v is not None}
    with np.errstate(all="ignore"):
        out = np.asarray(_eval(e, env), dtype=float)
    if env:
        out = np.broadcast_to(out, np.broadcast_shapes(*(v.shape for v in env.values()),
                                                       out.shape))
    if not np.all(np.isfinite(out)):
        raise ExprDomainError(f"non-finite value while evaluating {to_source(e)}")
    return out


def eval(e, x, t, u=None):  # noqa: A001 - operation name
    """Evaluate ``e`` at a single point and return a float."""
    if isinstance(e, str):
        e = parse(e)
    return float(evaluate(e, x=x, t=t, u=u))
