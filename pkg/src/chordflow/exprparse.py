"""Coordinate expressions: parser, printer and hyper-dual evaluation.

Grammar (standard precedence, ``^`` binds tightest and is right associative)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := primary ('^' unary)?
    primary := NUMBER | 'pi' | 'e' | VAR | FUNC '(' expr ')' | '(' expr ')'

Variables are ``u1 .. uk``; functions are ``sin cos tan exp log sqrt``.
Exponents must be constant (no variables).  There is no implicit
multiplication, so ``2u1`` is a syntax error.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .errors import ArityError, DomainError, ExprSyntaxError, UnknownIdentifier

FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt")
CONSTANTS = {"pi": math.pi, "e": math.e}


# --------------------------------------------------------------------------- AST


@dataclass(frozen=True)
class Num:
    value: float
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Var:
    index: int  # 1-based, u1 -> 1
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Const:
    name: str
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Neg:
    arg: "Node"
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Call:
    fn: str
    arg: "Node"
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"
    pos: int = field(default=0, compare=False)


Node = Num | Var | Const | Neg | Call | BinOp


def walk(node: Node) -> Iterator[Node]:
    yield node
    if isinstance(node, (Neg, Call)):
        yield from walk(node.arg)
    elif isinstance(node, BinOp):
        yield from walk(node.left)
        yield from walk(node.right)


def max_variable(node: Node) -> int:
    return max((n.index for n in walk(node) if isinstance(n, Var)), default=0)


def to_source(node: Node) -> str:
    """Print ``node`` fully parenthesized; ``parse(to_source(t)) == t``."""
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Var):
        return f"u{node.index}"
    if isinstance(node, Const):
        return node.name
    if isinstance(node, Neg):
        return f"(-{to_source(node.arg)})"
    if isinstance(node, Call):
        return f"{node.fn}({to_source(node.arg)})"
    return f"({to_source(node.left)} {node.op} {to_source(node.right)})"


# ------------------------------------------------------------------------ lexer

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^(),]))"
)
_VAR_RE = re.compile(r"u([1-9][0-9]*)$")


@dataclass
class _Token:
    kind: str  # num, ident, op, end
    text: str
    pos: int


def _describe(tok: _Token) -> str:
    return "end of input" if tok.kind == "end" else repr(tok.text)


def _tokenize(src: str) -> list[_Token]:
    raw = src.encode("utf-8")
    tokens = []
    i = 0
    # work on the decoded string but report byte offsets
    text = src
    while True:
        m = _TOKEN_RE.match(text, i)
        if m is None or m.end() == i:
            j = i
            while j < len(text) and text[j].isspace():
                j += 1
            if j == len(text):
                tokens.append(_Token("end", "", len(raw)))
                return tokens
            raise ExprSyntaxError(
                f"unexpected character {text[j]!r}", len(text[:j].encode("utf-8"))
            )
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append(_Token(kind, m.group(kind), len(text[:start].encode("utf-8"))))
        i = m.end()


# ----------------------------------------------------------------------- parser


class _Parser:
    def __init__(self, src: str, nvars: int | None):
        self.tokens = _tokenize(src)
        self.i = 0
        self.nvars = nvars

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        t = self.tokens[self.i]
        self.i += 1
        return t

    def expect_op(self, op: str) -> _Token:
        if self.tok.kind == "op" and self.tok.text == op:
            return self.advance()
        raise ExprSyntaxError(f"expected {op!r}, found {_describe(self.tok)}", self.tok.pos)

    def parse(self) -> Node:
        node = self.expr()
        if self.tok.kind != "end":
            raise ExprSyntaxError(
                f"expected operator or end of input, found {_describe(self.tok)}", self.tok.pos
            )
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            t = self.advance()
            node = BinOp(t.text, node, self.term(), t.pos)
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            t = self.advance()
            node = BinOp(t.text, node, self.unary(), t.pos)
        return node

    def unary(self) -> Node:
        if self.tok.kind == "op" and self.tok.text == "-":
            t = self.advance()
            return Neg(self.unary(), t.pos)
        return self.power()

    def power(self) -> Node:
        base = self.primary()
        if self.tok.kind == "op" and self.tok.text == "^":
            t = self.advance()
            exp_pos = self.tok.pos
            exponent = self.unary()
            if max_variable(exponent) > 0:
                raise ExprSyntaxError("exponent must be constant", exp_pos)
            return BinOp("^", base, exponent, t.pos)
        return base

    def primary(self) -> Node:
        t = self.tok
        if t.kind == "num":
            self.advance()
            return Num(float(t.text), t.pos)
        if t.kind == "ident":
            self.advance()
            name = t.text
            if name in FUNCTIONS:
                self.expect_op("(")
                arg = self.expr()
                if self.tok.kind == "op" and self.tok.text == ",":
                    raise ArityError(f"{name} takes exactly 1 argument", self.tok.pos)
                self.expect_op(")")
                return Call(name, arg, t.pos)
            if self.tok.kind == "op" and self.tok.text == "(":
                if name in CONSTANTS or _VAR_RE.match(name):
                    raise ArityError(f"{name} is not a function", self.tok.pos)
                raise UnknownIdentifier(f"unknown function {name!r}", t.pos)
            if name in CONSTANTS:
                return Const(name, t.pos)
            m = _VAR_RE.match(name)
            if m:
                index = int(m.group(1))
                if self.nvars is not None and index > self.nvars:
                    raise UnknownIdentifier(
                        f"variable {name!r} exceeds declared dimension {self.nvars}", t.pos
                    )
                return Var(index, t.pos)
            raise UnknownIdentifier(f"unknown identifier {name!r}", t.pos)
        if t.kind == "op" and t.text == "(":
            self.advance()
            node = self.expr()
            self.expect_op(")")
            return node
        raise ExprSyntaxError(f"expected expression, found {_describe(t)}", t.pos)


def parse(src: str, nvars: int | None = None) -> Node:
    """Parse ``src`` into an AST.

    ``nvars`` bounds the variable indices (``u{nvars}`` is the largest allowed).
    Raises ExprSyntaxError, UnknownIdentifier or ArityError with a byte offset.
    """
    return _Parser(src, nvars).parse()


# ------------------------------------------------------------------- hyper-dual


class HyperDual:
    """Hyper-dual number ``v + d1*E1 + d2*E2 + d12*E1E2`` with E1^2 = E2^2 = 0.

    Components may be floats or numpy arrays (evaluation is then vectorized).
    """

    __slots__ = ("v", "d1", "d2", "d12")

    def __init__(self, v, d1=0.0, d2=0.0, d12=0.0):
        self.v = v
        self.d1 = d1
        self.d2 = d2
        self.d12 = d12

    def __repr__(self):
        return f"HyperDual({self.v!r}, {self.d1!r}, {self.d2!r}, {self.d12!r})"

    def astuple(self):
        return (self.v, self.d1, self.d2, self.d12)

    def _chain(self, f0, f1, f2):
        # g(x) with g = f0, g' = f1, g'' = f2 evaluated at self.v
        return HyperDual(
            f0, f1 * self.d1, f1 * self.d2, f1 * self.d12 + f2 * self.d1 * self.d2
        )

    def __add__(self, o):
        if isinstance(o, HyperDual):
            return HyperDual(self.v + o.v, self.d1 + o.d1, self.d2 + o.d2, self.d12 + o.d12)
        return HyperDual(self.v + o, self.d1, self.d2, self.d12)

    __radd__ = __add__

    def __neg__(self):
        return HyperDual(-self.v, -self.d1, -self.d2, -self.d12)

    def __sub__(self, o):
        return self + (-o)

    def __rsub__(self, o):
        return (-self) + o

    def __mul__(self, o):
        if isinstance(o, HyperDual):
            return HyperDual(
                self.v * o.v,
                self.v * o.d1 + self.d1 * o.v,
                self.v * o.d2 + self.d2 * o.v,
                self.v * o.d12 + self.d1 * o.d2 + self.d2 * o.d1 + self.d12 * o.v,
            )
        return HyperDual(self.v * o, self.d1 * o, self.d2 * o, self.d12 * o)

    __rmul__ = __mul__

    def reciprocal(self):
        inv = 1.0 / self.v
        return self._chain(inv, -inv * inv, 2.0 * inv * inv * inv)

    def __truediv__(self, o):
        if isinstance(o, HyperDual):
            return self * o.reciprocal()
        return self * (1.0 / o)

    def __rtruediv__(self, o):
        return self.reciprocal() * o

    def power(self, n: float):
        """Raise to a constant real exponent ``n`` (caller checks the domain)."""
        if n == 0:
            return HyperDual(np.ones_like(self.v) if np.ndim(self.v) else 1.0, 0.0, 0.0, 0.0)
        if n == 1:
            return HyperDual(self.v, self.d1, self.d2, self.d12)
        v = self.v
        return self._chain(v**n, n * v ** (n - 1), n * (n - 1) * v ** (n - 2))

    def sin(self):
        s, c = np.sin(self.v), np.cos(self.v)
        return self._chain(s, c, -s)

    def cos(self):
        s, c = np.sin(self.v), np.cos(self.v)
        return self._chain(c, -s, -c)

    def tan(self):
        t = np.tan(self.v)
        sec2 = 1.0 + t * t
        return self._chain(t, sec2, 2.0 * t * sec2)

    def exp(self):
        ev = np.exp(self.v)
        return self._chain(ev, ev, ev)

    def log(self):
        inv = 1.0 / self.v
        return self._chain(np.log(self.v), inv, -inv * inv)

    def sqrt(self):
        r = np.sqrt(self.v)
        return self._chain(r, 0.5 / r, -0.25 / (r * self.v))


# ------------------------------------------------------------------- evaluation


def _is_integer(x: float) -> bool:
    return float(x).is_integer()


def _check(cond, message: str, node: Node):
    if np.any(cond):
        raise DomainError(message, node.pos)


class _Evaluator:
    """Shared walker; ``lift`` turns a variable index into the working number type."""

    def __init__(self, lift: Callable[[int], object], funcs: dict[str, Callable], value_of):
        self.lift = lift
        self.funcs = funcs
        self.value_of = value_of  # extract the plain value for domain checks

    def __call__(self, node: Node):
        if isinstance(node, Num):
            return node.value
        if isinstance(node, Const):
            return CONSTANTS[node.name]
        if isinstance(node, Var):
            return self.lift(node.index)
        if isinstance(node, Neg):
            return -self(node.arg)
        if isinstance(node, Call):
            x = self(node.arg)
            xv = self.value_of(x)
            if node.fn == "log":
                _check(np.asarray(xv, dtype=float) <= 0, "log of non-positive value", node)
            elif node.fn == "sqrt":
                _check(np.asarray(xv, dtype=float) <= 0, "sqrt of non-positive value", node)
            elif node.fn == "tan":
                _check(np.cos(np.asarray(xv, dtype=float)) == 0, "tan at a pole", node)
            return self.funcs[node.fn](x)
        a = self(node.left)
        if node.op == "^":
            n = float(evaluate(node.right, ()))
            av = np.asarray(self.value_of(a), dtype=float)
            if not _is_integer(n):
                _check(av <= 0, "non-integer power of non-positive base", node)
            elif n < 0:
                _check(av == 0, "zero raised to a negative power", node)
            return self.funcs["^"](a, n)
        b = self(node.right)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        _check(np.asarray(self.value_of(b), dtype=float) == 0, "division by zero", node)
        return a / b


def _hd_pow(a, n):
    if isinstance(a, HyperDual):
        return a.power(n)
    return a**n


def _hd_func(name):
    def f(x):
        if isinstance(x, HyperDual):
            return getattr(x, name)()
        return getattr(np, name)(x)

    return f


_HD_FUNCS = {name: _hd_func(name) for name in FUNCTIONS}
_HD_FUNCS["^"] = _hd_pow


def eval_jet(node: Node, u, i: int, j: int) -> HyperDual:
    """Value and derivatives of ``node`` at ``u``.

    ``i`` and ``j`` are 1-based direction indices; the result carries
    d/du_i, d/du_j and the mixed second partial.  Entries of ``u`` may be
    numpy arrays of a common shape, in which case all components are arrays.
    """
    u = [np.asarray(c, dtype=float) if np.ndim(c) else float(c) for c in u]
    if max_variable(node) > len(u):
        raise UnknownIdentifier(f"expression uses u{max_variable(node)} but only {len(u)} given")

    def lift(index):
        return HyperDual(u[index - 1], float(index == i), float(index == j), 0.0)

    out = _Evaluator(lift, _HD_FUNCS, lambda x: x.v if isinstance(x, HyperDual) else x)(node)
    if not isinstance(out, HyperDual):
        out = HyperDual(out)
    shape = np.broadcast(*[np.asarray(c) for c in u]).shape if u else ()
    if shape:
        out = HyperDual(*(np.broadcast_to(np.asarray(c, dtype=float), shape).copy()
                          for c in out.astuple()))
    return out


def evaluate(node: Node, u, funcs: dict[str, Callable] | None = None):
    """Plain evaluation; ``funcs`` swaps the function library (e.g. mpmath)."""
    if funcs is None:
        funcs = {name: getattr(np, name) for name in FUNCTIONS}
    lib = dict(funcs)
    lib.setdefault("^", lambda a, n: a**n)
    return _Evaluator(lambda index: u[index - 1], lib, lambda x: float(x) if np.ndim(x) == 0 else x)(node)
