"""Arithmetic expressions for boundary data over variables x1..xd.

Grammar (loosest to tightest): additive + -, multiplicative * /, unary -,
power ^ (right associative), atoms.  Functions: abs(a), min(a, b),
max(a, b), pow(a, b).  Evaluation is vectorized over (N, d) point arrays.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import ExprError

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^(),]))"
)

_FUNCTIONS = {
    "abs": (1, lambda a: np.abs(a)),
    "min": (2, np.minimum),
    "max": (2, np.maximum),
    "pow": (2, lambda a, b: np.power(a, b)),
}


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> list[_Tok]:
    toks, i = [], 0
    while i < len(text):
        m = _TOKEN.match(text, i)
        if not m or m.end() == i:
            if text[i:].strip():
                raise ExprError(f"unexpected character {text[i:].strip()[0]!r}", i)
            break
        if m.group("num"):
            toks.append(_Tok("num", m.group("num"), m.start("num")))
        elif m.group("name"):
            toks.append(_Tok("name", m.group("name"), m.start("name")))
        else:
            toks.append(_Tok("op", m.group("op"), m.start("op")))
        i = m.end()
    return toks


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Const:
    value: float

    def __call__(self, pts):
        return np.full(len(pts), self.value)


@dataclass(frozen=True)
class Var:
    index: int  # 0-based axis

    def __call__(self, pts):
        if self.index >= pts.shape[1]:
            raise ExprError(f"variable x{self.index + 1} exceeds point dimension {pts.shape[1]}")
        return pts[:, self.index]


@dataclass(frozen=True)
class Unary:
    op: str
    arg: object

    def __call__(self, pts):
        return -self.arg(pts)


@dataclass(frozen=True)
class Binary:
    op: str
    left: object
    right: object

    def __call__(self, pts):
        a, b = self.left(pts), self.right(pts)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        if self.op == "/":
            with np.errstate(divide="ignore", invalid="ignore"):
                return a / b
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.power(a, b)


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple

    def __call__(self, pts):
        return _FUNCTIONS[self.name][1](*(a(pts) for a in self.args))


class BoundaryExpr:
    """Parsed expression; callable on (N, d) arrays of points."""

    def __init__(self, root, text: str, max_var: int):
        self._root = root
        self.text = text
        self.max_var = max_var  # highest 1-based variable index used

    def evaluate(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        if single:
            pts = pts[None, :]
        out = np.asarray(self._root(pts), dtype=float)
        if out.shape != (len(pts),):
            out = np.broadcast_to(out, (len(pts),)).astype(float)
        return float(out[0]) if single else out

    def __repr__(self):
        return f"BoundaryExpr({self.text!r})"


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0
        self.max_var = 0

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else None

    def take(self):
        tok = self.peek()
        if tok is None:
            raise ExprError("unexpected end of expression", len(self.text))
        self.i += 1
        return tok

    def expect(self, text):
        tok = self.take()
        if tok.kind != "op" or tok.text != text:
            raise ExprError(f"expected {text!r}, found {tok.text!r}", tok.pos)

    def parse(self):
        node = self.additive()
        tok = self.peek()
        if tok is not None:
            raise ExprError(f"unexpected token {tok.text!r}", tok.pos)
        return node

    def additive(self):
        node = self.multiplicative()
        while (tok := self.peek()) and tok.kind == "op" and tok.text in "+-":
            self.take()
            node = Binary(tok.text, node, self.multiplicative())
        return node

    def multiplicative(self):
        node = self.unary()
        while (tok := self.peek()) and tok.kind == "op" and tok.text in "*/":
            self.take()
            node = Binary(tok.text, node, self.unary())
        return node

    def unary(self):
        tok = self.peek()
        if tok and tok.kind == "op" and tok.text == "-":
            self.take()
            return Unary("-", self.unary())
        return self.power()

    def power(self):
        node = self.atom()
        tok = self.peek()
        if tok and tok.kind == "op" and tok.text == "^":
            self.take()
            # right associative; exponent may start with unary minus
            return Binary("^", node, self.unary())
        return node

    def atom(self):
        tok = self.take()
        if tok.kind == "num":
            return Const(float(tok.text))
        if tok.kind == "name":
            if tok.text in _FUNCTIONS:
                arity = _FUNCTIONS[tok.text][0]
                self.expect("(")
                args = [self.additive()]
                while (nxt := self.peek()) and nxt.kind == "op" and nxt.text == ",":
                    self.take()
                    args.append(self.additive())
                self.expect(")")
                if len(args) != arity:
                    raise ExprError(
                        f"{tok.text} takes {arity} argument(s), got {len(args)}", tok.pos
                    )
                return Call(tok.text, tuple(args))
            m = re.fullmatch(r"x(\d+)", tok.text)
            if m and int(m.group(1)) >= 1:
                self.max_var = max(self.max_var, int(m.group(1)))
                return Var(int(m.group(1)) - 1)
            raise ExprError(f"unknown identifier {tok.text!r}", tok.pos)
        if tok.text == "(":
            node = self.additive()
            self.expect(")")
            return node
        raise ExprError(f"unexpected token {tok.text!r}", tok.pos)


def parse_boundary_expr(text: str) -> BoundaryExpr:
    if not text or not text.strip():
        raise ExprError("empty expression", 0)
    parser = _Parser(text)
    root = parser.parse()
    return BoundaryExpr(root, text, parser.max_var)


def probe_validate(expr: BoundaryExpr, box, dim: int, n_probes: int = 64) -> None:
    """Reject expressions that blow up on the domain box.

    Evaluates at box corners, the center and a fixed pseudo-random sample;
    any non-finite value (division by zero, 0^negative, ...) is an error.
    """
    if expr.max_var > dim:
        raise ExprError(f"expression uses x{expr.max_var} but the domain has dimension {dim}")
    box = np.asarray(box, dtype=float).reshape(-1, 2)
    lo, hi = box[:, 0], box[:, 1]
    corners = np.stack(np.meshgrid(*box.tolist(), indexing="ij"), axis=-1).reshape(-1, dim) if dim <= 12 else np.empty((0, dim))
    center = 0.5 * (lo + hi)[None, :]
    rng = np.random.default_rng(0xC0FFEE)
    sample = lo[None, :] + rng.random((n_probes, dim)) * (hi - lo)[None, :]
    probes = np.vstack([corners, center, sample])
    vals = expr.evaluate(probes)
    if not np.isfinite(vals).all():
        bad = probes[~np.isfinite(vals)][0]
        raise ExprError(f"expression is not finite at probe point {bad.tolist()}")
