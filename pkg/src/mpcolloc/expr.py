"""Tiny expression language with second-order forward-mode differentiation.

Grammar: +, -, *, /, ^ (right associative), unary minus, sin, cos, exp,
variables x1 and x2, numeric literals, parentheses. Evaluation propagates
the value together with first and second partial derivatives in (x1, x2),
which is exactly what is needed to derive a Poisson right-hand side from a
user-supplied exact solution.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError


@dataclass
class Jet2:
    """Value and derivatives (f, f_x, f_y, f_xx, f_xy, f_yy), vectorized."""

    f: np.ndarray
    fx: np.ndarray
    fy: np.ndarray
    fxx: np.ndarray
    fxy: np.ndarray
    fyy: np.ndarray

    @staticmethod
    def const(c, shape):
        z = np.zeros(shape)
        return Jet2(np.full(shape, float(c)), z, z.copy(), z.copy(), z.copy(), z.copy())

    @staticmethod
    def var(values, which):
        values = np.asarray(values, dtype=float)
        z = np.zeros_like(values)
        one = np.ones_like(values)
        if which == 1:
            return Jet2(values.copy(), one, z, z.copy(), z.copy(), z.copy())
        return Jet2(values.copy(), z, one, z.copy(), z.copy(), z.copy())

    def __add__(self, o):
        return Jet2(
            self.f + o.f, self.fx + o.fx, self.fy + o.fy,
            self.fxx + o.fxx, self.fxy + o.fxy, self.fyy + o.fyy,
        )

    def __sub__(self, o):
        return Jet2(
            self.f - o.f, self.fx - o.fx, self.fy - o.fy,
            self.fxx - o.fxx, self.fxy - o.fxy, self.fyy - o.fyy,
        )

    def __neg__(self):
        return Jet2(-self.f, -self.fx, -self.fy, -self.fxx, -self.fxy, -self.fyy)

    def __mul__(self, o):
        return Jet2(
            self.f * o.f,
            self.fx * o.f + self.f * o.fx,
            self.fy * o.f + self.f * o.fy,
            self.fxx * o.f + 2 * self.fx * o.fx + self.f * o.fxx,
            self.fxy * o.f + self.fx * o.fy + self.fy * o.fx + self.f * o.fxy,
            self.fyy * o.f + 2 * self.fy * o.fy + self.f * o.fyy,
        )

    def __truediv__(self, o):
        return self * o._reciprocal()

    def _reciprocal(self):
        g = 1.0 / self.f
        g2 = g * g
        return Jet2(
            g,
            -self.fx * g2,
            -self.fy * g2,
            (2 * self.fx**2 * g - self.fxx) * g2,
            (2 * self.fx * self.fy * g - self.fxy) * g2,
            (2 * self.fy**2 * g - self.fyy) * g2,
        )

    def _chain(self, v, dv, ddv):
        """Compose with a scalar function given value/1st/2nd derivative at f."""
        return Jet2(
            v,
            dv * self.fx,
            dv * self.fy,
            ddv * self.fx**2 + dv * self.fxx,
            ddv * self.fx * self.fy + dv * self.fxy,
            ddv * self.fy**2 + dv * self.fyy,
        )

    def sin(self):
        return self._chain(np.sin(self.f), np.cos(self.f), -np.sin(self.f))

    def cos(self):
        return self._chain(np.cos(self.f), -np.sin(self.f), -np.cos(self.f))

    def exp(self):
        e = np.exp(self.f)
        return self._chain(e, e, e)

    def log(self):
        return self._chain(np.log(self.f), 1.0 / self.f, -1.0 / self.f**2)

    def pow(self, o):
        if isinstance(o, Jet2):
            if np.allclose(o.fx, 0) and np.allclose(o.fy, 0):
                e = float(o.f.flat[0]) if np.ndim(o.f) else float(o.f)
                return self._pow_const(e)
            # general power via exp(b log a); requires positive base
            return (self.log() * o).exp()
        return self._pow_const(float(o))

    def _pow_const(self, e):
        if e == float(int(e)) and int(e) >= 0:
            n = int(e)
            v = self.f**n
            dv = n * self.f ** (n - 1) if n >= 1 else np.zeros_like(self.f)
            ddv = n * (n - 1) * self.f ** (n - 2) if n >= 2 else np.zeros_like(self.f)
        else:
            v = self.f**e
            dv = e * self.f ** (e - 1)
            ddv = e * (e - 1) * self.f ** (e - 2)
        return self._chain(v, dv, ddv)

    @property
    def laplacian(self):
        return self.fxx + self.fyy


_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)

_FUNCTIONS = ("sin", "cos", "exp", "log")


def tokenize(src):
    pos = 0
    out = []
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if not m or m.end() == pos:
            raise ParameterError(f"cannot tokenize expression at '...{src[pos:]}'")
        pos = m.end()
        if m.lastgroup == "num":
            out.append(("num", float(m.group("num"))))
        elif m.lastgroup == "name":
            out.append(("name", m.group("name")))
        else:
            out.append(("op", m.group("op")))
    out.append(("end", None))
    return out


class _Parser:
    """Recursive descent over +,-  *,/  ^(right)  unary-  atoms."""

    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def next(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, op):
        kind, val = self.next()
        if kind != "op" or val != op:
            raise ParameterError(f"expected '{op}' in expression")

    def parse(self):
        node = self.expr()
        if self.peek()[0] != "end":
            raise ParameterError(f"unexpected trailing tokens in expression")
        return node

    def expr(self):
        node = self.term()
        while self.peek() == ("op", "+") or self.peek() == ("op", "-"):
            _, op = self.next()
            rhs = self.term()
            node = ("add" if op == "+" else "sub", node, rhs)
        return node

    def term(self):
        node = self.factor()
        while self.peek() == ("op", "*") or self.peek() == ("op", "/"):
            _, op = self.next()
            rhs = self.factor()
            node = ("mul" if op == "*" else "div", node, rhs)
        return node

    def factor(self):
        # unary minus binds looser than '^': -x^2 means -(x^2)
        if self.peek() == ("op", "-"):
            self.next()
            return ("neg", self.factor())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek() == ("op", "^"):
            self.next()
            return ("pow", base, self.factor())
        return base

    def atom(self):
        kind, val = self.next()
        if kind == "num":
            return ("num", val)
        if kind == "name":
            if val in ("x1", "x2"):
                return ("var", val)
            if val in _FUNCTIONS:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return (val, arg)
            if val == "pi":
                return ("num", float(np.pi))
            raise ParameterError(f"unknown identifier '{val}' in expression")
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        raise ParameterError(f"unexpected token {val!r} in expression")


def parse_expression(src):
    return _Parser(tokenize(src)).parse()


def eval_jet(node, x1, x2):
    """Evaluate an expression AST to a Jet2 at (vectorized) coordinates."""
    x1 = np.asarray(x1, dtype=float)
    shape = x1.shape

    def rec(n):
        tag = n[0]
        if tag == "num":
            return Jet2.const(n[1], shape)
        if tag == "var":
            return Jet2.var(x1 if n[1] == "x1" else x2, 1 if n[1] == "x1" else 2)
        if tag == "neg":
            return -rec(n[1])
        if tag in ("add", "sub", "mul", "div", "pow"):
            a, b = rec(n[1]), rec(n[2])
            if tag == "add":
                return a + b
            if tag == "sub":
                return a - b
            if tag == "mul":
                return a * b
            if tag == "div":
                return a / b
            return a.pow(b)
        if tag in _FUNCTIONS:
            return getattr(rec(n[1]), tag)()
        raise AssertionError(f"unknown AST node {tag}")

    return rec(node)
