"""Coefficient expressions on chart coordinates with exact derivatives.

A :class:`ScalarField` is a real-valued function of the chart coordinates
``(x, y1..yn, z)``, parsed from a small closed grammar.  Evaluation runs
either on plain floats or on second-order jets (truncated Taylor
arithmetic carried through every primitive), so first and second partial
derivatives are exact up to roundoff -- no finite differencing anywhere.

Grammar (EBNF)::

    expression = term { ("+" | "-") term } ;
    term       = factor { ("*" | "/") factor } ;
    factor     = "-" factor | power ;
    power      = atom [ "^" exponent ] ;
    exponent   = [ "-" ] integer ;
    atom       = number | "pi" | variable
               | function "(" expression ")" | "(" expression ")" ;
    function   = "sin" | "cos" | "exp" | "sqrt" | "smoothstep" ;
    variable   = "x" | "z" | "y" integer ;

``smoothstep(t)`` is the C-infinity unit step (0 for t <= 0, 1 for
t >= 1, exp(-1/t)-mollified in between); it exists so compactly
supported plateau coefficients are expressible inside the grammar.

Coordinate slots: ``x -> 0``, ``y k -> k`` (1-based), ``z -> n+1``.
Fields are immutable after parsing and evaluation is pure, so they are
safe to share across threads without synchronization.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ExpressionError",
    "EvalDomainError",
    "Jet",
    "ScalarField",
    "parse_expression",
]


class ExpressionError(ValueError):
    """Syntax error, unknown identifier, or variable index out of range."""

    def __init__(self, message, position=None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position


class EvalDomainError(ArithmeticError):
    """Evaluation left the field's domain (division by zero, sqrt of a negative)."""


# ---------------------------------------------------------------------------
# jet arithmetic
#
# A Jet holds the value, gradient and Hessian of a subexpression at a batch
# of points: f has shape (B,), g has shape (B, m), h has shape (B, m, m).
# ``None`` for g or h means identically zero, which keeps constant and
# linear subtrees cheap.  Plain floats/arrays flow through as constants.
# ---------------------------------------------------------------------------


class Jet:
    """Second-order truncated Taylor value: (value, gradient, Hessian)."""

    __slots__ = ("f", "g", "h")

    def __init__(self, f, g=None, h=None):
        self.f = f
        self.g = g
        self.h = h


def _parts(v):
    if isinstance(v, Jet):
        return v.f, v.g, v.h
    return v, None, None


def _nadd(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return a + b


def _nneg(a):
    return None if a is None else -a


def _e1(s):
    """Expand a batch scalar for broadcasting against gradients."""
    return s[..., None] if isinstance(s, np.ndarray) else s


def _e2(s):
    """Expand a batch scalar for broadcasting against Hessians."""
    return s[..., None, None] if isinstance(s, np.ndarray) else s


def _jadd(a, b):
    if not isinstance(a, Jet) and not isinstance(b, Jet):
        return a + b
    af, ag, ah = _parts(a)
    bf, bg, bh = _parts(b)
    return Jet(af + bf, _nadd(ag, bg), _nadd(ah, bh))


def _jsub(a, b):
    if not isinstance(a, Jet) and not isinstance(b, Jet):
        return a - b
    af, ag, ah = _parts(a)
    bf, bg, bh = _parts(b)
    return Jet(af - bf, _nadd(ag, _nneg(bg)), _nadd(ah, _nneg(bh)))


def _jneg(a):
    if not isinstance(a, Jet):
        return -a
    return Jet(-a.f, _nneg(a.g), _nneg(a.h))


def _jmul(a, b):
    if not isinstance(a, Jet) and not isinstance(b, Jet):
        return a * b
    af, ag, ah = _parts(a)
    bf, bg, bh = _parts(b)
    g = None
    if ag is not None:
        g = ag * _e1(bf)
    if bg is not None:
        g = _nadd(g, bg * _e1(af))
    h = None
    if ah is not None:
        h = ah * _e2(bf)
    if bh is not None:
        h = _nadd(h, bh * _e2(af))
    if ag is not None and bg is not None:
        cross = ag[..., :, None] * bg[..., None, :]
        h = _nadd(h, cross + np.swapaxes(cross, -1, -2))
    return Jet(af * bf, g, h)


def _chain(a, f, d1, d2):
    """Compose a scalar function (value f, derivatives d1, d2 at a.f) with jet a."""
    if not isinstance(a, Jet):
        return f
    g = None if a.g is None else _e1(d1) * a.g
    h = None
    if a.h is not None:
        h = _e2(d1) * a.h
    if a.g is not None and d2 is not None:
        h = _nadd(h, _e2(d2) * (a.g[..., :, None] * a.g[..., None, :]))
    return Jet(f, g, h)


def _jinv(b):
    bf, _, _ = _parts(b)
    if np.any(np.asarray(bf) == 0.0):
        raise EvalDomainError("division by zero")
    vf = 1.0 / bf
    if not isinstance(b, Jet):
        return vf
    return _chain(b, vf, -vf * vf, 2.0 * vf * vf * vf)


def _jdiv(a, b):
    return _jmul(a, _jinv(b))


def _jpow(a, k):
    af, _, _ = _parts(a)
    if k < 0 and np.any(np.asarray(af) == 0.0):
        raise EvalDomainError("zero raised to a negative power")
    f = af ** k
    if not isinstance(a, Jet):
        return f
    d1 = k * af ** (k - 1) if k != 0 else 0.0
    d2 = k * (k - 1) * af ** (k - 2) if k not in (0, 1) else 0.0
    return _chain(a, f, d1, d2)


def _jsqrt(a, order):
    af, _, _ = _parts(a)
    arr = np.asarray(af)
    if np.any(arr < 0.0):
        raise EvalDomainError("sqrt of a negative value")
    f = np.sqrt(af) if isinstance(af, np.ndarray) else math.sqrt(af)
    if not isinstance(a, Jet):
        return f
    if order >= 1 and np.any(arr == 0.0):
        raise EvalDomainError("sqrt is not differentiable at zero")
    d1 = 0.5 / f
    return _chain(a, f, d1, -0.25 * f ** -3)


# Below ~1e-12 the mollifier and all its derivatives underflow to zero in
# float64, so the plateau branch is exact there and avoids inf/nan from 1/t.
_STEP_EDGE = 1e-12


def _step_scalar(t):
    t = np.asarray(t, dtype=float)
    lo = t <= _STEP_EDGE
    hi = t >= 1.0 - _STEP_EDGE
    mid = ~(lo | hi)
    tm = np.where(mid, t, 0.5)
    a = np.exp(-1.0 / tm)
    b = np.exp(-1.0 / (1.0 - tm))
    val = np.where(mid, a / (a + b), 0.0)
    val = np.where(hi, 1.0, val)
    # first and second derivative of a/(a+b) on (0, 1); zero on the plateaus
    da = a / tm ** 2
    db = -b / (1.0 - tm) ** 2
    dd = a + b
    num = da * b - a * db
    d1 = np.where(mid, num / dd ** 2, 0.0)
    d2a = a / tm ** 4 - 2.0 * a / tm ** 3
    d2b = b / (1.0 - tm) ** 4 - 2.0 * b / (1.0 - tm) ** 3
    dnum = d2a * b - a * d2b
    d2 = np.where(mid, dnum / dd ** 2 - 2.0 * num * (da + db) / dd ** 3, 0.0)
    return val, d1, d2


def _jstep(a):
    af, _, _ = _parts(a)
    f, d1, d2 = _step_scalar(af)
    if not isinstance(af, np.ndarray):
        f, d1, d2 = float(f), float(d1), float(d2)
    if not isinstance(a, Jet):
        return f
    return _chain(a, f, d1, d2)


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

_PREC_ADD, _PREC_MUL, _PREC_UNARY, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


class Node:
    __slots__ = ()
    prec = _PREC_ATOM

    def ev(self, c):
        raise NotImplementedError

    def jet(self, c, order):
        raise NotImplementedError

    def diff(self, idx):
        raise NotImplementedError

    def collect_vars(self, acc):
        pass

    def fmt(self, parent_prec=0):
        raise NotImplementedError

    def __repr__(self):
        return f"<{type(self).__name__} {self.fmt()}>"

    def __eq__(self, other):
        if type(self) is not type(other):
            # Pi and Const compare by value
            if isinstance(self, Const) and isinstance(other, Const):
                return self.value == other.value
            return NotImplemented
        return all(
            getattr(self, s) == getattr(other, s) for s in self.__slots__
        )

    def __hash__(self):
        return hash((type(self).__name__, self.fmt()))


class Const(Node):
    __slots__ = ("value",)

    def __init__(self, value):
        self.value = float(value)

    def ev(self, c):
        return self.value

    def jet(self, c, order):
        return self.value

    def diff(self, idx):
        return Const(0.0)

    def fmt(self, parent_prec=0):
        if self.value < 0:
            s = repr(self.value)
            return f"({s})" if parent_prec > _PREC_ADD else s
        return repr(self.value)


class Pi(Const):
    __slots__ = ()

    def __init__(self):
        super().__init__(math.pi)

    def fmt(self, parent_prec=0):
        return "pi"


class Var(Node):
    __slots__ = ("index", "name")

    def __init__(self, index, name):
        self.index = index
        self.name = name

    def ev(self, c):
        return c[..., self.index]

    def jet(self, c, order):
        if order == 0:
            return c[..., self.index]
        batch, m = c.shape
        g = np.zeros((batch, m))
        g[:, self.index] = 1.0
        return Jet(c[..., self.index], g, None)

    def diff(self, idx):
        return Const(1.0 if idx == self.index else 0.0)

    def collect_vars(self, acc):
        acc.add(self.index)

    def fmt(self, parent_prec=0):
        return self.name


class _Binary(Node):
    __slots__ = ("a", "b")

    def __init__(self, a, b):
        self.a = a
        self.b = b

    def collect_vars(self, acc):
        self.a.collect_vars(acc)
        self.b.collect_vars(acc)


class Add(_Binary):
    __slots__ = ()
    prec = _PREC_ADD

    def ev(self, c):
        return self.a.ev(c) + self.b.ev(c)

    def jet(self, c, order):
        return _jadd(self.a.jet(c, order), self.b.jet(c, order))

    def diff(self, idx):
        return _sadd(self.a.diff(idx), self.b.diff(idx))

    def fmt(self, parent_prec=0):
        s = f"{self.a.fmt(_PREC_ADD)} + {self.b.fmt(_PREC_ADD)}"
        return f"({s})" if parent_prec > _PREC_ADD else s


class Sub(_Binary):
    __slots__ = ()
    prec = _PREC_ADD

    def ev(self, c):
        return self.a.ev(c) - self.b.ev(c)

    def jet(self, c, order):
        return _jsub(self.a.jet(c, order), self.b.jet(c, order))

    def diff(self, idx):
        return _ssub(self.a.diff(idx), self.b.diff(idx))

    def fmt(self, parent_prec=0):
        s = f"{self.a.fmt(_PREC_ADD)} - {self.b.fmt(_PREC_MUL)}"
        return f"({s})" if parent_prec > _PREC_ADD else s


class Mul(_Binary):
    __slots__ = ()
    prec = _PREC_MUL

    def ev(self, c):
        return self.a.ev(c) * self.b.ev(c)

    def jet(self, c, order):
        return _jmul(self.a.jet(c, order), self.b.jet(c, order))

    def diff(self, idx):
        return _sadd(
            _smul(self.a.diff(idx), self.b), _smul(self.a, self.b.diff(idx))
        )

    def fmt(self, parent_prec=0):
        s = f"{self.a.fmt(_PREC_MUL)}*{self.b.fmt(_PREC_MUL)}"
        return f"({s})" if parent_prec > _PREC_MUL else s


class Div(_Binary):
    __slots__ = ()
    prec = _PREC_MUL

    def ev(self, c):
        denom = self.b.ev(c)
        if np.any(np.asarray(denom) == 0.0):
            raise EvalDomainError("division by zero")
        return self.a.ev(c) / denom

    def jet(self, c, order):
        return _jdiv(self.a.jet(c, order), self.b.jet(c, order))

    def diff(self, idx):
        num = _ssub(
            _smul(self.a.diff(idx), self.b), _smul(self.a, self.b.diff(idx))
        )
        return _sdiv(num, _spow(self.b, 2))

    def fmt(self, parent_prec=0):
        s = f"{self.a.fmt(_PREC_MUL)}/{self.b.fmt(_PREC_UNARY)}"
        return f"({s})" if parent_prec > _PREC_MUL else s


class Neg(Node):
    __slots__ = ("a",)
    prec = _PREC_UNARY

    def __init__(self, a):
        self.a = a

    def ev(self, c):
        return -self.a.ev(c)

    def jet(self, c, order):
        return _jneg(self.a.jet(c, order))

    def diff(self, idx):
        return _sneg(self.a.diff(idx))

    def collect_vars(self, acc):
        self.a.collect_vars(acc)

    def fmt(self, parent_prec=0):
        s = f"-{self.a.fmt(_PREC_UNARY)}"
        return f"({s})" if parent_prec > _PREC_UNARY else s


class Pow(Node):
    __slots__ = ("a", "k")
    prec = _PREC_POW

    def __init__(self, a, k):
        self.a = a
        self.k = int(k)

    def ev(self, c):
        base = self.a.ev(c)
        if self.k < 0 and np.any(np.asarray(base) == 0.0):
            raise EvalDomainError("zero raised to a negative power")
        return base ** self.k

    def jet(self, c, order):
        return _jpow(self.a.jet(c, order), self.k)

    def diff(self, idx):
        return _smul(
            _smul(Const(self.k), _spow(self.a, self.k - 1)), self.a.diff(idx)
        )

    def collect_vars(self, acc):
        self.a.collect_vars(acc)

    def fmt(self, parent_prec=0):
        s = f"{self.a.fmt(_PREC_ATOM)}^{self.k}"
        return f"({s})" if parent_prec > _PREC_POW else s


class Func(Node):
    __slots__ = ("name", "a")

    def __init__(self, name, a):
        self.name = name
        self.a = a

    def ev(self, c):
        v = self.a.ev(c)
        if self.name == "sin":
            return np.sin(v)
        if self.name == "cos":
            return np.cos(v)
        if self.name == "exp":
            return np.exp(v)
        if self.name == "sqrt":
            if np.any(np.asarray(v) < 0.0):
                raise EvalDomainError("sqrt of a negative value")
            return np.sqrt(v)
        if self.name == "smoothstep":
            return _jstep(v)
        raise AssertionError(self.name)

    def jet(self, c, order):
        a = self.a.jet(c, order)
        af, _, _ = _parts(a)
        if self.name == "sin":
            s, co = np.sin(af), np.cos(af)
            return _chain(a, s, co, -s) if isinstance(a, Jet) else s
        if self.name == "cos":
            s, co = np.sin(af), np.cos(af)
            return _chain(a, co, -s, -co) if isinstance(a, Jet) else co
        if self.name == "exp":
            e = np.exp(af)
            return _chain(a, e, e, e) if isinstance(a, Jet) else e
        if self.name == "sqrt":
            return _jsqrt(a, order)
        if self.name == "smoothstep":
            return _jstep(a)
        raise AssertionError(self.name)

    def diff(self, idx):
        inner = self.a.diff(idx)
        if self.name == "sin":
            return _smul(Func("cos", self.a), inner)
        if self.name == "cos":
            return _sneg(_smul(Func("sin", self.a), inner))
        if self.name == "exp":
            return _smul(Func("exp", self.a), inner)
        if self.name == "sqrt":
            return _sdiv(inner, _smul(Const(2.0), Func("sqrt", self.a)))
        raise ExpressionError(
            f"{self.name} has no symbolic derivative in the grammar"
        )

    def collect_vars(self, acc):
        self.a.collect_vars(acc)

    def fmt(self, parent_prec=0):
        return f"{self.name}({self.a.fmt(0)})"


def _is_const(node, value=None):
    return isinstance(node, Const) and (value is None or node.value == value)


def _sadd(a, b):
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    return Add(a, b)


def _ssub(a, b):
    if _is_const(b, 0.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if _is_const(a, 0.0):
        return _sneg(b)
    return Sub(a, b)


def _sneg(a):
    if isinstance(a, Const):
        return Const(-a.value)
    return Neg(a)


def _smul(a, b):
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return Const(0.0)
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    return Mul(a, b)


def _sdiv(a, b):
    if _is_const(a, 0.0) and not _is_const(b, 0.0):
        return Const(0.0)
    if _is_const(b, 1.0):
        return a
    return Div(a, b)


def _spow(a, k):
    if k == 0:
        return Const(1.0)
    if k == 1:
        return a
    if isinstance(a, Const):
        return Const(a.value ** k)
    return Pow(a, k)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"(?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()])"
)

_INT_RE = re.compile(r"\d+$")

_FUNCTIONS = ("sin", "cos", "exp", "sqrt", "smoothstep")


def _tokenize(src):
    tokens = []
    pos = 0
    while pos < len(src):
        if src[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(src, pos)
        if m is None:
            raise ExpressionError(f"unexpected character {src[pos]!r}", pos)
        kind = m.lastgroup
        tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(src)))
    return tokens


class _Parser:
    def __init__(self, src, n):
        self.src = src
        self.n = n
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op):
        kind, text, pos = self.peek()
        if kind != "op" or text != op:
            raise ExpressionError(f"expected {op!r}", pos)
        self.advance()

    def parse(self):
        node = self.expression()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ExpressionError(f"unexpected token {text!r}", pos)
        return node

    def expression(self):
        node = self.term()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.advance()
                rhs = self.term()
                node = Add(node, rhs) if text == "+" else Sub(node, rhs)
            else:
                return node

    def term(self):
        node = self.factor()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "*/":
                self.advance()
                rhs = self.factor()
                node = Mul(node, rhs) if text == "*" else Div(node, rhs)
            else:
                return node

    def factor(self):
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.advance()
            return Neg(self.factor())
        return self.power()

    def power(self):
        node = self.atom()
        kind, text, _ = self.peek()
        if kind == "op" and text == "^":
            self.advance()
            node = Pow(node, self.exponent())
        return node

    def exponent(self):
        sign = 1
        kind, text, pos = self.peek()
        if kind == "op" and text == "-":
            self.advance()
            sign = -1
            kind, text, pos = self.peek()
        if kind != "num" or not _INT_RE.match(text):
            raise ExpressionError("exponent must be an integer literal", pos)
        self.advance()
        return sign * int(text)

    def atom(self):
        kind, text, pos = self.advance()
        if kind == "num":
            return Const(float(text))
        if kind == "op" and text == "(":
            node = self.expression()
            self.expect_op(")")
            return node
        if kind == "name":
            return self.name_atom(text, pos)
        raise ExpressionError(f"unexpected token {text!r}", pos)

    def name_atom(self, text, pos):
        if text == "pi":
            return Pi()
        if text in _FUNCTIONS:
            self.expect_op("(")
            node = self.expression()
            self.expect_op(")")
            return Func(text, node)
        if text == "x":
            return Var(0, "x")
        if text == "z":
            return Var(self.n + 1, "z")
        m = re.fullmatch(r"y(\d+)", text)
        if m:
            k = int(m.group(1))
            if not 1 <= k <= self.n:
                raise ExpressionError(
                    f"variable y{k} out of range for n={self.n}", pos
                )
            return Var(k, text)
        if text == "y":
            raise ExpressionError("write screen coordinates as y1..yn", pos)
        raise ExpressionError(f"unknown identifier {text!r}", pos)


# ---------------------------------------------------------------------------
# public field type
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScalarField:
    """Immutable real field on an (n+2)-coordinate chart with exact partials."""

    ast: Node
    n: int

    @property
    def nvars(self):
        return self.n + 2

    def _coords(self, p):
        c = np.asarray(p, dtype=float)
        single = c.ndim == 1
        if single:
            c = c[None, :]
        if c.shape[-1] != self.nvars:
            raise ValueError(
                f"point has {c.shape[-1]} coordinates, chart needs {self.nvars}"
            )
        return c, single

    def __call__(self, p):
        c, single = self._coords(p)
        val = self.ast.ev(c)
        val = np.broadcast_to(np.asarray(val, dtype=float), c.shape[:-1])
        return float(val[0]) if single else np.array(val)

    def jet(self, p, order=2):
        """Value, gradient and Hessian arrays at ``p`` (batched)."""
        c, single = self._coords(p)
        batch, m = c.shape
        res = self.ast.jet(c, order)
        f, g, h = _parts(res)
        f = np.broadcast_to(np.asarray(f, dtype=float), (batch,))
        g = np.zeros((batch, m)) if g is None else g
        h = np.zeros((batch, m, m)) if h is None else h
        if single:
            return float(f[0]), g[0], (h[0] if order >= 2 else h[0])
        return np.array(f), g, h

    def partial(self, p, idx):
        """Exact partial derivative for a multi-index ``idx`` with |idx| <= 2."""
        idx = tuple(idx)
        if len(idx) > 2:
            raise ValueError("only derivatives of order <= 2 are available")
        for i in idx:
            if not 0 <= i < self.nvars:
                raise ValueError(f"coordinate index {i} out of range")
        if len(idx) == 0:
            return self(p)
        c, single = self._coords(p)
        res = self.ast.jet(c, len(idx))
        _, g, h = _parts(res)
        if len(idx) == 1:
            out = np.zeros(c.shape[0]) if g is None else g[:, idx[0]]
        else:
            out = np.zeros(c.shape[0]) if h is None else h[:, idx[0], idx[1]]
        out = np.asarray(out, dtype=float)
        return float(out[0]) if single else out

    def diff(self, idx):
        """Symbolic partial derivative as a new field (constant-folded)."""
        return ScalarField(self.ast.diff(idx), self.n)

    def depends_on(self, idx):
        acc = set()
        self.ast.collect_vars(acc)
        return idx in acc

    def is_constant(self):
        acc = set()
        self.ast.collect_vars(acc)
        return not acc

    def __str__(self):
        return self.ast.fmt(0)


def parse_expression(src, n):
    """Parse ``src`` over coordinates (x, y1..yn, z) into a :class:`ScalarField`."""
    if n < 0:
        raise ValueError("screen dimension must be nonnegative")
    return ScalarField(_Parser(src, n).parse(), n)


def as_field(value, n):
    """Coerce a string, number or field to a :class:`ScalarField` on n screen dims."""
    if isinstance(value, ScalarField):
        if value.n != n:
            raise ValueError("field has mismatched screen dimension")
        return value
    if isinstance(value, (int, float)):
        return ScalarField(Const(float(value)), n)
    return parse_expression(value, n)
