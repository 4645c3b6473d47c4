"""Initial conditions and their conversion into a particle front.

Smooth pieces are sampled at equidistant positions. Where two pieces meet
with different values the jump becomes two stacked particles. Crossings of a
flux inflection value get an inflection particle, found by bisection.
"""
from __future__ import annotations

import ast
import math
import operator
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from raretrack.flux import FluxModel
from raretrack.front import ParticleFront
from raretrack.wave import Role


class SamplingError(ValueError):
    pass


# {{{ function specs

_FUNCS = {
    "exp": np.exp, "log": np.log, "sqrt": np.sqrt, "abs": np.abs,
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "tanh": np.tanh,
    "sinh": np.sinh, "cosh": np.cosh, "arctan": np.arctan,
    "minimum": np.minimum, "maximum": np.maximum,
    "where": np.where, "heaviside": lambda z: np.heaviside(z, 0.5),
}
_CONSTS = {"pi": math.pi, "e": math.e}
_BINOPS = {
    ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
    ast.Div: operator.truediv, ast.Pow: operator.pow, ast.Mod: operator.mod,
}
_CMPOPS = {
    ast.Lt: operator.lt, ast.LtE: operator.le, ast.Gt: operator.gt, ast.GtE: operator.ge,
}
_UNOPS = {ast.USub: operator.neg, ast.UAdd: operator.pos}


def compile_expr(text: str, params: Mapping[str, float] | None = None) -> Callable:
    """A vectorized function of ``x`` from a plain arithmetic expression.

    Only numbers, ``x``, parameters, a few constants, arithmetic, comparisons
    and the functions in ``_FUNCS`` are allowed.
    """
    params = dict(params or {})
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise SamplingError(f"cannot parse expression {text!r}: {exc.msg}") from None

    def check(node):
        if isinstance(node, ast.Expression):
            check(node.body)
        elif isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)):
                raise SamplingError(f"unsupported constant {node.value!r}")
        elif isinstance(node, ast.Name):
            if node.id != "x" and node.id not in params and node.id not in _CONSTS:
                raise SamplingError(f"unknown name {node.id!r} in expression")
        elif isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            check(node.left)
            check(node.right)
        elif isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
            check(node.operand)
        elif isinstance(node, ast.Compare) and len(node.ops) == 1 and type(node.ops[0]) in _CMPOPS:
            check(node.left)
            check(node.comparators[0])
        elif isinstance(node, ast.Call) and isinstance(node.func, ast.Name) \
                and node.func.id in _FUNCS and not node.keywords:
            for a in node.args:
                check(a)
        else:
            raise SamplingError(f"unsupported syntax in expression {text!r}")

    check(tree)

    def ev(node, x):
        if isinstance(node, ast.Expression):
            return ev(node.body, x)
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id == "x":
                return x
            return float(params[node.id]) if node.id in params else _CONSTS[node.id]
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](ev(node.left, x), ev(node.right, x))
        if isinstance(node, ast.UnaryOp):
            return _UNOPS[type(node.op)](ev(node.operand, x))
        if isinstance(node, ast.Compare):
            return _CMPOPS[type(node.ops[0])](ev(node.left, x), ev(node.comparators[0], x)) * 1.0
        return _FUNCS[node.func.id](*(ev(a, x) for a in node.args))

    def fn(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(ev(tree, x), x.shape) * 1.0

    return fn


def _gaussian_cosine(p):
    return lambda x: np.exp(-np.asarray(x, dtype=float) ** 2) * np.cos(math.pi * np.asarray(x, dtype=float))


def _constant(p):
    c = float(p.get("value", 0.0))
    return lambda x: np.full(np.shape(x), c)


def _linear(p):
    a, b = float(p.get("intercept", 0.0)), float(p.get("slope", 0.0))
    return lambda x: a + b * np.asarray(x, dtype=float)


BUILTIN_FUNCTIONS = {
    "gaussian_cosine": _gaussian_cosine,
    "constant": _constant,
    "linear": _linear,
}


def make_function(spec: Mapping[str, Any]) -> Callable:
    """``{"id": ..., "params": {...}}`` or ``{"expr": "...", "params": {...}}``."""
    params = dict(spec.get("params") or {})
    if "expr" in spec:
        return compile_expr(spec["expr"], params)
    fid = spec.get("id")
    if fid not in BUILTIN_FUNCTIONS:
        raise SamplingError(f"unknown function id {fid!r}; try one of {tuple(BUILTIN_FUNCTIONS)}")
    return BUILTIN_FUNCTIONS[fid](params)

# }}}


@dataclass(frozen=True)
class SmoothPiece:
    a: float
    b: float
    fn: Callable = field(repr=False)
    spec: Mapping[str, Any] | None = None


@dataclass(frozen=True)
class InitialCondition:
    """Contiguous smooth pieces; a jump sits wherever adjacent pieces disagree."""

    pieces: tuple[SmoothPiece, ...]

    def __post_init__(self):
        if not self.pieces:
            raise SamplingError("initial condition needs at least one piece")
        for p in self.pieces:
            if not p.b > p.a:
                raise SamplingError(f"empty piece [{p.a}, {p.b}]")
        for p, q in zip(self.pieces, self.pieces[1:]):
            if p.b != q.a:
                raise SamplingError(f"pieces not contiguous at {p.b} / {q.a}")

    @property
    def domain(self) -> tuple[float, float]:
        return self.pieces[0].a, self.pieces[-1].b

    def __call__(self, x):
        """Point values; at a piece boundary the right piece wins."""
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        for k, p in enumerate(self.pieces):
            last = k == len(self.pieces) - 1
            m = (x >= p.a) & ((x <= p.b) if last else (x < p.b))
            if k == 0:
                m |= x < p.a
            if last:
                m |= x > p.b
            out[m] = p.fn(x[m])
        return out

    @classmethod
    def from_spec(cls, spec: Mapping[str, Any]) -> "InitialCondition":
        pieces = []
        for ps in spec["pieces"]:
            if ps.get("type", "smooth") == "jump":
                # jumps are implied by the neighbouring pieces
                continue
            a, b = ps["interval"]
            pieces.append(SmoothPiece(float(a), float(b), make_function(ps["function"]),
                    ps["function"]))
        return cls(tuple(pieces))

    @classmethod
    def piecewise_constant(cls, breaks: Sequence[float], values: Sequence[float]) -> "InitialCondition":
        if len(breaks) != len(values) + 1:
            raise SamplingError("need one more break than values")
        return cls(tuple(SmoothPiece(float(a), float(b), _constant({"value": v}),
                {"id": "constant", "params": {"value": v}})
                for a, b, v in zip(breaks, breaks[1:], values)))


def _counts(ic: InitialCondition, n: int) -> list[int]:
    lo, hi = ic.domain
    total = hi - lo
    return [max(2, int(round(n * (p.b - p.a) / total))) for p in ic.pieces]


def sample(ic: InitialCondition, flux: FluxModel, n: int, d_max: float | None = None,
        d_min: float = 0.0, t: float = 0.0) -> ParticleFront:
    """Sample ``ic`` with about ``n`` particles in total.

    ``d_max`` defaults to the coarsest sampling spacing.
    """
    if n < 2:
        raise SamplingError("need at least two particles")
    xs: list[float] = []
    us: list[float] = []
    roles: list[int] = []
    spacing = 0.0
    stars = flux.inflections

    def push(x, u, role=Role.REGULAR):
        if stars and any(u == w for w in stars):
            role = Role.INFLECTION
        xs.append(float(x))
        us.append(float(u))
        roles.append(int(role))

    for k, (piece, m) in enumerate(zip(ic.pieces, _counts(ic, n))):
        grid = np.linspace(piece.a, piece.b, m)
        vals = np.asarray(piece.fn(grid), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise SamplingError(f"non-finite initial values on [{piece.a}, {piece.b}]")
        flux.check_domain(vals)
        spacing = max(spacing, grid[1] - grid[0])
        if k > 0:
            ul = us[-1]
            ur = float(vals[0])
            if ur == ul:
                vals, grid = vals[1:], grid[1:]
            else:
                w = flux.inflection_between(ul, ur)
                if w is not None:
                    push(grid[0], w, Role.INFLECTION)
        for j in range(len(grid)):
            if j > 0:
                for w in stars:
                    if (vals[j - 1] - w) * (vals[j] - w) < 0:
                        push(_crossing(piece.fn, grid[j - 1], grid[j], w), w, Role.INFLECTION)
            push(grid[j], vals[j])
    if d_max is None:
        d_max = spacing * (1.0 + 1e-12)
    return ParticleFront(xs, us, roles, flux, d_max, d_min, t, cover=ic.domain)


def _crossing(fn: Callable, a: float, b: float, w: float) -> float:
    ga = float(fn(np.array([a]))[0]) - w
    gb = float(fn(np.array([b]))[0]) - w
    if ga * gb > 0:
        raise SamplingError(f"no crossing of {w} on [{a}, {b}]")
    for _ in range(200):
        m = 0.5 * (a + b)
        if m in (a, b):
            break
        gm = float(fn(np.array([m]))[0]) - w
        if gm == 0.0:
            return m
        if (gm < 0) == (ga < 0):
            a, ga = m, gm
        else:
            b, gb = m, gm
    return 0.5 * (a + b)
