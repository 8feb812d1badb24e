"""A small arithmetic expression language for coefficient fields.

Grammar (whitespace is ignored)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := ("+" | "-") unary | power
    power  := atom ("^" unary)?
    atom   := NUMBER | "pi" | VAR | FUNC "(" expr ")" | "(" expr ")"
    VAR    := "x1" | "x2" | ...
    FUNC   := "sin" | "cos" | "exp"

``^`` is right-associative and binds tighter than unary minus, so ``-x1^2``
is ``-(x1^2)``.  Expressions evaluate vectorised over an ``(n, d)`` array of
points and can be differentiated symbolically with respect to a coordinate.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}


class ExpressionError(ValueError):
    """Raised for malformed expressions; ``position`` is a 0-based column."""

    def __init__(self, message, position=0, source=""):
        super().__init__(message)
        self.position = position
        self.source = source


class Node:
    def evaluate(self, X):
        raise NotImplementedError

    def diff(self, var):
        raise NotImplementedError

    def max_var(self):
        return 0


@dataclass(frozen=True)
class Num(Node):
    value: float

    def evaluate(self, X):
        return np.full(X.shape[0], self.value)

    def diff(self, var):
        return ZERO

    def __str__(self):
        return repr(self.value)


@dataclass(frozen=True)
class Var(Node):
    index: int  # 1-based

    def evaluate(self, X):
        return X[:, self.index - 1].astype(float, copy=True)

    def diff(self, var):
        return ONE if var == self.index else ZERO

    def max_var(self):
        return self.index

    def __str__(self):
        return f"x{self.index}"


@dataclass(frozen=True)
class Neg(Node):
    arg: Node

    def evaluate(self, X):
        return -self.arg.evaluate(X)

    def diff(self, var):
        return _neg(self.arg.diff(var))

    def max_var(self):
        return self.arg.max_var()

    def __str__(self):
        return f"(-{self.arg})"


@dataclass(frozen=True)
class BinOp(Node):
    op: str
    left: Node
    right: Node

    def evaluate(self, X):
        lhs = self.left.evaluate(X)
        rhs = self.right.evaluate(X)
        if self.op == "+":
            return lhs + rhs
        if self.op == "-":
            return lhs - rhs
        if self.op == "*":
            return lhs * rhs
        if self.op == "/":
            return lhs / rhs
        return np.power(lhs, rhs)

    def diff(self, var):
        u, v = self.left, self.right
        du, dv = u.diff(var), v.diff(var)
        if self.op == "+":
            return _add(du, dv)
        if self.op == "-":
            return _sub(du, dv)
        if self.op == "*":
            return _add(_mul(du, v), _mul(u, dv))
        if self.op == "/":
            return _div(_sub(_mul(du, v), _mul(u, dv)), _mul(v, v))
        if not isinstance(v, Num):
            raise ExpressionError("only constant exponents can be differentiated")
        k = v.value
        return _mul(_mul(Num(k), _pow(u, Num(k - 1.0))), du)

    def max_var(self):
        return max(self.left.max_var(), self.right.max_var())

    def __str__(self):
        return f"({self.left} {self.op} {self.right})"


@dataclass(frozen=True)
class Call(Node):
    name: str
    arg: Node

    def evaluate(self, X):
        return FUNCTIONS[self.name](self.arg.evaluate(X))

    def diff(self, var):
        da = self.arg.diff(var)
        if self.name == "sin":
            outer = Call("cos", self.arg)
        elif self.name == "cos":
            outer = Neg(Call("sin", self.arg))
        else:
            outer = self
        return _mul(outer, da)

    def max_var(self):
        return self.arg.max_var()

    def __str__(self):
        return f"{self.name}({self.arg})"


ZERO = Num(0.0)
ONE = Num(1.0)


def _is(node, value):
    return isinstance(node, Num) and node.value == value


def _add(u, v):
    if _is(u, 0.0):
        return v
    if _is(v, 0.0):
        return u
    return BinOp("+", u, v)


def _sub(u, v):
    if _is(v, 0.0):
        return u
    if _is(u, 0.0):
        return _neg(v)
    return BinOp("-", u, v)


def _neg(u):
    if isinstance(u, Num):
        return Num(-u.value)
    return Neg(u)


def _mul(u, v):
    if _is(u, 0.0) or _is(v, 0.0):
        return ZERO
    if _is(u, 1.0):
        return v
    if _is(v, 1.0):
        return u
    return BinOp("*", u, v)


def _div(u, v):
    if _is(u, 0.0):
        return ZERO
    return BinOp("/", u, v)


def _pow(u, v):
    if _is(v, 0.0):
        return ONE
    if _is(v, 1.0):
        return u
    return BinOp("^", u, v)


_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)


def _tokenize(source):
    tokens = []
    pos = 0
    while pos < len(source):
        if source[pos:].strip() == "":
            break
        match = _TOKEN.match(source, pos)
        if match is None or match.end() == pos:
            col = pos + len(source[pos:]) - len(source[pos:].lstrip())
            raise ExpressionError(f"unexpected character {source[col]!r}", col, source)
        kind = match.lastgroup
        start = match.start(kind)
        tokens.append((kind, match.group(kind), start))
        pos = match.end()
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

    def error(self, message, tok=None):
        tok = tok or self.peek()
        return ExpressionError(message, tok[2], self.source)

    def expect(self, value):
        tok = self.peek()
        if tok[1] != value or tok[0] == "end":
            raise self.error(f"expected {value!r}")
        return self.advance()

    def parse(self):
        node = self.expr()
        if self.peek()[0] != "end":
            raise self.error(f"unexpected token {self.peek()[1]!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] in ("+", "-"):
            self.advance()
            inner = self.unary()
            return inner if tok[1] == "+" else Neg(inner)
        return self.power()

    def power(self):
        node = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.advance()
            node = BinOp("^", node, self.unary())
        return node

    def atom(self):
        tok = self.peek()
        kind, text, _ = tok
        if kind == "num":
            self.advance()
            return Num(float(text))
        if kind == "name":
            self.advance()
            if text == "pi":
                return Num(math.pi)
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(text, arg)
            m = re.fullmatch(r"x([1-9]\d*)", text)
            if m:
                return Var(int(m.group(1)))
            raise self.error(f"unknown name {text!r}", tok)
        if kind == "op" and text == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        if kind == "end":
            raise self.error("unexpected end of expression", tok)
        raise self.error(f"unexpected token {text!r}", tok)


class Expression:
    """Parsed expression keeping its source text for round-tripping."""

    def __init__(self, source, node=None):
        self.source = str(source)
        self.node = node if node is not None else _Parser(self.source).parse()

    @classmethod
    def constant(cls, value):
        return cls(repr(float(value)), Num(float(value)))

    def __call__(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.node.evaluate(X)

    def diff(self, var):
        node = self.node.diff(var)
        return Expression(str(node), node)

    @property
    def max_var(self):
        return self.node.max_var()

    @property
    def is_constant(self):
        return isinstance(self.node, Num)

    def check_dim(self, d):
        if self.max_var > d:
            raise ExpressionError(
                f"x{self.max_var} used but dimension is {d}", 0, self.source
            )

    def __repr__(self):
        return f"Expression({self.source!r})"


def parse(source):
    if isinstance(source, Expression):
        return source
    if isinstance(source, (int, float)):
        return Expression.constant(source)
    return Expression(source)
