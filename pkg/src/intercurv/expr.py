"""Scalar expression DSL with second-order forward-mode jets.

Grammar (EBNF)::

    expr    = term { ("+" | "-") term } ;
    term    = unary { ("*" | "/") unary } ;
    unary   = "-" unary | "+" unary | power ;
    power   = atom [ "^" unary ] ;              (* right associative *)
    atom    = number | "pi" | name | func "(" expr ")" | "(" expr ")" ;
    func    = "sin" | "cos" | "exp" | "log" | "sqrt"
            | "sinh" | "cosh" | "tanh" | "coth" ;
    number  = digits [ "." digits ] [ ("e" | "E") [ "+" | "-" ] digits ] ;

``^`` binds tighter than unary minus on its left, so ``-x^2`` is ``-(x^2)``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

__all__ = [
    "ExprError",
    "ExprSyntaxError",
    "UnknownIdentifierError",
    "ArityError",
    "DomainError",
    "Jet2",
    "Const",
    "Var",
    "BinOp",
    "Neg",
    "Call",
    "Expression",
    "parse",
    "eval_jet2",
    "FUNCTIONS",
]


class ExprError(ValueError):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class UnknownIdentifierError(ExprError):
    def __init__(self, name: str, position: int):
        super().__init__(f"unknown identifier {name!r} at position {position}")
        self.name = name
        self.position = position


class ArityError(ExprError):
    pass


class DomainError(ExprError, ArithmeticError):
    def __init__(self, message: str, node: "Node"):
        super().__init__(f"{message} in {node}")
        self.node = node


# ---------------------------------------------------------------------------
# Jets
# ---------------------------------------------------------------------------


class Jet2:
    """Value, gradient and Hessian of a scalar function, possibly batched.

    ``value`` has shape ``S``, ``grad`` shape ``S + (n,)`` and ``hess``
    shape ``S + (n, n)``.  Every operation builds the Hessian from
    symmetric pieces, so it stays exactly symmetric.
    """

    __slots__ = ("value", "grad", "hess")
    __array_priority__ = 1000

    def __init__(self, value, grad, hess):
        self.value = np.asarray(value, dtype=float)
        self.grad = np.asarray(grad, dtype=float)
        self.hess = np.asarray(hess, dtype=float)

    @property
    def nvars(self) -> int:
        return self.grad.shape[-1]

    @classmethod
    def constant(cls, c, nvars: int, shape=()) -> "Jet2":
        value = np.broadcast_to(np.asarray(c, dtype=float), shape).copy()
        return cls(value, np.zeros(shape + (nvars,)), np.zeros(shape + (nvars, nvars)))

    @classmethod
    def variable(cls, index: int, points) -> "Jet2":
        points = np.asarray(points, dtype=float)
        shape, n = points.shape[:-1], points.shape[-1]
        grad = np.zeros(shape + (n,))
        grad[..., index] = 1.0
        return cls(points[..., index].copy(), grad, np.zeros(shape + (n, n)))

    def _lift(self, other) -> "Jet2":
        if isinstance(other, Jet2):
            return other
        return Jet2.constant(other, self.nvars, self.value.shape)

    def apply(self, f0, f1, f2) -> "Jet2":
        """Compose with a scalar function given its value and two derivatives."""
        g = self.grad
        outer = g[..., :, None] * g[..., None, :]
        f1e = np.asarray(f1)[..., None]
        f2e = np.asarray(f2)[..., None, None]
        return Jet2(f0, f1e * g, f1e[..., None] * self.hess + f2e * outer)

    def __add__(self, other):
        o = self._lift(other)
        return Jet2(self.value + o.value, self.grad + o.grad, self.hess + o.hess)

    __radd__ = __add__

    def __neg__(self):
        return Jet2(-self.value, -self.grad, -self.hess)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        if not isinstance(other, Jet2):
            c = float(other)
            return Jet2(c * self.value, c * self.grad, c * self.hess)
        a, b = self, other
        cross = a.grad[..., :, None] * b.grad[..., None, :]
        av = a.value[..., None]
        bv = b.value[..., None]
        return Jet2(
            a.value * b.value,
            av * b.grad + bv * a.grad,
            av[..., None] * b.hess + bv[..., None] * a.hess + cross + np.swapaxes(cross, -1, -2),
        )

    __rmul__ = __mul__

    def reciprocal(self) -> "Jet2":
        v = self.value
        return self.apply(1.0 / v, -1.0 / v**2, 2.0 / v**3)

    def __truediv__(self, other):
        if not isinstance(other, Jet2):
            return self * (1.0 / float(other))
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self._lift(other) * self.reciprocal()

    def powc(self, p: float) -> "Jet2":
        """Raise to a constant power; integer powers allow negative bases."""
        v = self.value
        if float(p).is_integer():
            k = int(p)
            if k == 0:
                return Jet2.constant(1.0, self.nvars, v.shape)
            return self.apply(v**k, k * v ** (k - 1), k * (k - 1) * v ** (k - 2) if k != 1 else 0.0 * v)
        return self.apply(v**p, p * v ** (p - 1), p * (p - 1) * v ** (p - 2))

    def __pow__(self, p):
        if isinstance(p, Jet2):
            return (p * self.log()).exp()
        return self.powc(float(p))

    def exp(self):
        e = np.exp(self.value)
        return self.apply(e, e, e)

    def log(self):
        v = self.value
        return self.apply(np.log(v), 1.0 / v, -1.0 / v**2)

    def sqrt(self):
        s = np.sqrt(self.value)
        return self.apply(s, 0.5 / s, -0.25 / (s * self.value))

    def sin(self):
        s, c = np.sin(self.value), np.cos(self.value)
        return self.apply(s, c, -s)

    def cos(self):
        s, c = np.sin(self.value), np.cos(self.value)
        return self.apply(c, -s, -c)

    def sinh(self):
        s, c = np.sinh(self.value), np.cosh(self.value)
        return self.apply(s, c, s)

    def cosh(self):
        s, c = np.sinh(self.value), np.cosh(self.value)
        return self.apply(c, s, c)

    def tanh(self):
        t = np.tanh(self.value)
        d = 1.0 - t * t
        return self.apply(t, d, -2.0 * t * d)

    def coth(self):
        c = 1.0 / np.tanh(self.value)
        d = 1.0 - c * c
        return self.apply(c, d, -2.0 * c * d)

    def embed(self, indices: Sequence[int], nvars: int) -> "Jet2":
        """Re-express a jet over a subset of variables in a larger variable list."""
        idx = np.asarray(indices)
        shape = self.value.shape
        grad = np.zeros(shape + (nvars,))
        hess = np.zeros(shape + (nvars, nvars))
        grad[..., idx] = self.grad
        hess[..., idx[:, None], idx[None, :]] = self.hess
        return Jet2(self.value, grad, hess)

    def __repr__(self):
        return f"Jet2(value={self.value!r}, grad={self.grad!r}, hess={self.hess!r})"


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: float

    def __str__(self):
        return repr(self.value)


@dataclass(frozen=True)
class Var:
    name: str
    index: int

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"

    def __str__(self):
        return f"({self.left} {self.op} {self.right})"


@dataclass(frozen=True)
class Neg:
    operand: "Node"

    def __str__(self):
        return f"(-{self.operand})"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"

    def __str__(self):
        return f"{self.func}({self.arg})"


Node = Union[Const, Var, BinOp, Neg, Call]


def _check_positive(x, node, what):
    if np.any(~(x > 0)):
        raise DomainError(f"{what} of non-positive argument", node)


def _check_nonzero(x, node, what):
    if np.any(x == 0):
        raise DomainError(what, node)


def _f_log(j: Jet2, node):
    _check_positive(j.value, node, "log")
    return j.log()


def _f_sqrt(j: Jet2, node):
    _check_positive(j.value, node, "sqrt")
    return j.sqrt()


def _f_coth(j: Jet2, node):
    _check_nonzero(j.value, node, "coth at 0")
    return j.coth()


FUNCTIONS: dict[str, Callable[[Jet2, Node], Jet2]] = {
    "sin": lambda j, node: j.sin(),
    "cos": lambda j, node: j.cos(),
    "exp": lambda j, node: j.exp(),
    "log": _f_log,
    "sqrt": _f_sqrt,
    "sinh": lambda j, node: j.sinh(),
    "cosh": lambda j, node: j.cosh(),
    "tanh": lambda j, node: j.tanh(),
    "coth": _f_coth,
}

CONSTANTS = {"pi": math.pi}


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]|\S))"
)


def _tokenize(source: str):
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN.match(source, pos)
        if m is None or m.end() == pos:
            break
        start = m.start(m.lastgroup)
        kind = m.lastgroup
        text = m.group(kind)
        if kind == "op" and text not in "-+*/^()":
            raise ExprSyntaxError(f"unexpected character {text!r}", start)
        tokens.append((kind, text, start))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str, variables: Sequence[str]):
        self.tokens = _tokenize(source)
        self.i = 0
        self.vars = {name: k for k, name in enumerate(variables)}

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text):
        kind, t, pos = self.take()
        if t != text:
            raise ExprSyntaxError(f"expected {text!r}, found {t or 'end of input'!r}", pos)

    def parse(self) -> Node:
        node = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected token {text!r}", pos)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Node:
        kind, text, pos = self.peek()
        if kind == "op" and text == "-":
            self.take()
            return Neg(self.unary())
        if kind == "op" and text == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.peek()[1] == "^" and self.peek()[0] == "op":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Node:
        kind, text, pos = self.take()
        if kind == "num":
            return Const(float(text))
        if kind == "name":
            if text in FUNCTIONS:
                if self.peek()[1] != "(":
                    raise ArityError(f"function {text!r} at position {pos} needs one argument in parentheses")
                self.take()
                arg = self.expr()
                if self.peek()[1] == ",":
                    raise ArityError(f"function {text!r} takes exactly one argument")
                self.expect(")")
                return Call(text, arg)
            if text in self.vars:
                return Var(text, self.vars[text])
            if text in CONSTANTS:
                return Const(CONSTANTS[text])
            raise UnknownIdentifierError(text, pos)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        raise ExprSyntaxError(f"unexpected {text or 'end of input'!r}", pos)


def _eval(node: Node, points: np.ndarray) -> Jet2:
    if isinstance(node, Const):
        return Jet2.constant(node.value, points.shape[-1], points.shape[:-1])
    if isinstance(node, Var):
        return Jet2.variable(node.index, points)
    if isinstance(node, Neg):
        return -_eval(node.operand, points)
    if isinstance(node, Call):
        return FUNCTIONS[node.func](_eval(node.arg, points), node)
    a = _eval(node.left, points)
    if node.op == "^" and isinstance(node.right, Const):
        p = node.right.value
        if not float(p).is_integer():
            _check_positive(a.value, node, "non-integer power")
        elif p < 0:
            _check_nonzero(a.value, node, "division by zero")
        return a.powc(p)
    b = _eval(node.right, points)
    if node.op == "+":
        return a + b
    if node.op == "-":
        return a - b
    if node.op == "*":
        return a * b
    if node.op == "/":
        _check_nonzero(b.value, node, "division by zero")
        return a / b
    _check_positive(a.value, node, "power with variable exponent")
    return a**b


@dataclass(frozen=True)
class Expression:
    """A parsed expression bound to its ordered variable list."""

    source: str
    variables: tuple[str, ...]
    root: Node

    @property
    def nvars(self) -> int:
        return len(self.variables)

    def jet(self, points) -> Jet2:
        return eval_jet2(self, points)

    def free_variables(self) -> tuple[str, ...]:
        """Declared variables that actually occur, in declaration order."""
        seen = set()
        stack = [self.root]
        while stack:
            node = stack.pop()
            if isinstance(node, Var):
                seen.add(node.name)
            elif isinstance(node, BinOp):
                stack += [node.left, node.right]
            elif isinstance(node, Neg):
                stack.append(node.operand)
            elif isinstance(node, Call):
                stack.append(node.arg)
        return tuple(v for v in self.variables if v in seen)

    def __call__(self, points) -> np.ndarray:
        return self.jet(points).value

    def __str__(self):
        return self.source


def parse(source: str, variables: Sequence[str]) -> Expression:
    """Parse ``source`` into an immutable AST over the declared variables."""
    if not source or not source.strip():
        raise ExprSyntaxError("empty expression", 0)
    variables = tuple(variables)
    if len(set(variables)) != len(variables):
        raise ExprError(f"duplicate variable names in {variables}")
    for name in variables:
        if not re.fullmatch(r"[A-Za-z_][A-Za-z_0-9]*", name) or name in FUNCTIONS or name in CONSTANTS:
            raise ExprError(f"invalid variable name {name!r}")
    root = _Parser(source, variables).parse()
    return Expression(source, variables, root)


def eval_jet2(expression: Expression, points) -> Jet2:
    """Value, gradient and Hessian of ``expression`` at ``points``.

    ``points`` has shape ``(..., nvars)``; the jet is batched over the
    leading axes.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 0 or points.shape[-1] != expression.nvars:
        raise ExprError(f"expected points with last axis {expression.nvars}, got shape {points.shape}")
    with np.errstate(all="ignore"):
        return _eval(expression.root, points)
