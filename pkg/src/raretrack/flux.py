"""Flux functions and the calculus the particle method consumes.

Every built-in flux carries hand-derived first and second derivatives. User
fluxes must supply ``df`` and ``ddf`` explicitly; ``ddf`` is assumed to be
continuous on the domain.
"""
from __future__ import annotations

import enum
import math
import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

ArrayLike = Any
Scalar = Callable[[ArrayLike], ArrayLike]

#: absolute tolerance for the bisection that locates inflection points
INFLECTION_TOL = 1e-12
#: slack allowed when checking that a value lies inside the flux domain
DOMAIN_SLACK = 1e-12


class FluxError(ValueError):
    """Unknown flux id, invalid parameters, or a value outside the domain."""


class Convexity(enum.IntEnum):
    CONCAVE = -1
    FLAT = 0
    CONVEX = 1
    MIXED = 2


class EvalCounter:
    """Thread-safe tally of flux evaluations (counted per element)."""

    def __init__(self, enabled: bool = True) -> None:
        self.enabled = enabled
        self._lock = threading.Lock()
        self._counts = {"f": 0, "df": 0, "ddf": 0}

    def add(self, name: str, n: int) -> None:
        if not self.enabled:
            return
        with self._lock:
            self._counts[name] += n

    def snapshot(self) -> dict[str, int]:
        with self._lock:
            return dict(self._counts)

    @property
    def total(self) -> int:
        with self._lock:
            return sum(self._counts.values())

    def reset(self) -> None:
        with self._lock:
            for k in self._counts:
                self._counts[k] = 0


@dataclass(frozen=True)
class FluxModel:
    """A scalar flux with its first two derivatives.

    Calls to :meth:`f`, :meth:`df` and :meth:`ddf` accept floats or arrays and
    are tallied in :attr:`counter`.
    """

    id: str
    params: Mapping[str, float]
    _f: Scalar = field(repr=False)
    _df: Scalar = field(repr=False)
    _ddf: Scalar = field(repr=False)
    inflections: tuple[float, ...] = ()
    domain: tuple[float, float] = (-math.inf, math.inf)
    #: inflection-free flux with f'' constant, so averages are arithmetic means
    quadratic: bool = False
    #: points where f' vanishes (used by the finite-volume reference)
    stationary: tuple[float, ...] = ()
    counter: EvalCounter = field(default_factory=EvalCounter, repr=False, compare=False)

    def f(self, u):
        self.counter.add("f", np.size(u))
        return self._f(u)

    def df(self, u):
        self.counter.add("df", np.size(u))
        return self._df(u)

    def ddf(self, u):
        self.counter.add("ddf", np.size(u))
        return self._ddf(u)

    def legendre(self, u):
        """``F(u) = f'(u) u - f(u)``, the flux through characteristic boundaries."""
        self.check_domain(u)
        return self.df(u) * u - self.f(u)

    def check_domain(self, u) -> None:
        lo, hi = self.domain
        arr = np.asarray(u, dtype=float)
        if np.any(arr < lo - DOMAIN_SLACK) or np.any(arr > hi + DOMAIN_SLACK) or np.any(np.isnan(arr)):
            raise FluxError(f"value outside the domain [{lo}, {hi}] of flux '{self.id}'")

    def inflection_between(self, u1: float, u2: float) -> float | None:
        """The inflection value strictly between ``u1`` and ``u2``, if any."""
        lo, hi = (u1, u2) if u1 <= u2 else (u2, u1)
        for w in self.inflections:
            if lo < w < hi:
                return w
        return None

    def is_inflection(self, u: float) -> bool:
        return any(u == w for w in self.inflections)

    def convexity_sign(self, u1: float, u2: float) -> Convexity:
        self.check_domain([u1, u2])
        if u1 == u2:
            return Convexity(int(np.sign(self.ddf(u1))))
        if self.inflection_between(u1, u2) is not None:
            return Convexity.MIXED
        lo, hi = min(u1, u2), max(u1, u2)
        # sign is constant on the open interval; probe off-centre points in case
        # f'' touches zero without changing sign (e.g. u^4 at 0)
        for frac in (0.5, 1.0 / 3.0, 2.0 / 3.0, 0.1, 0.9):
            v = float(np.sign(self.ddf(lo + frac * (hi - lo))))
            if v != 0.0:
                return Convexity(int(v))
        return Convexity.FLAT


def legendre(flux: FluxModel, u):
    return flux.legendre(u)


def convexity_sign(flux: FluxModel, u1: float, u2: float) -> Convexity:
    return flux.convexity_sign(u1, u2)


# {{{ root location helpers

def _bisect(fn: Callable[[float], float], a: float, b: float, tol: float) -> float:
    fa = fn(a)
    if fa == 0.0:
        return a
    fb = fn(b)
    if fb == 0.0:
        return b
    if fa * fb > 0.0:
        raise FluxError(f"no sign change on [{a}, {b}]")
    while b - a > tol:
        m = 0.5 * (a + b)
        if m in (a, b):
            break
        fm = fn(m)
        if fm == 0.0:
            return m
        if fa * fm < 0.0:
            b, fb = m, fm
        else:
            a, fa = m, fm
    return 0.5 * (a + b)


def scan_sign_changes(fn: Callable, lo: float, hi: float, n: int = 4096,
        tol: float = INFLECTION_TOL) -> tuple[float, ...]:
    """Roots of ``fn`` on ``[lo, hi]`` located by a sign scan plus bisection.

    Only sign changes are reported; touching zeros (``u^2`` at 0) are not.
    """
    grid = np.linspace(lo, hi, n + 1)
    vals = np.asarray(fn(grid), dtype=float)
    roots = []
    sgn = np.sign(vals)
    # carry the last nonzero sign across exact zeros
    last_i = None
    for i in range(len(grid)):
        if sgn[i] == 0.0:
            continue
        if last_i is not None and sgn[i] != sgn[last_i]:
            roots.append(_bisect(lambda v: float(fn(v)), grid[last_i], grid[i], tol))
        last_i = i
    return tuple(roots)

# }}}


# {{{ built-ins

def _burgers(params):
    return dict(
        f=lambda u: 0.5 * u * u,
        df=lambda u: u * 1.0,
        ddf=lambda u: np.ones_like(u, dtype=float) if np.ndim(u) else 1.0,
        domain=(-math.inf, math.inf), quadratic=True, stationary=(0.0,))


def _quartic(params):
    return dict(
        f=lambda u: 0.25 * u**4,
        df=lambda u: u**3,
        ddf=lambda u: 3.0 * u * u,
        domain=(-math.inf, math.inf), stationary=(0.0,))


def _buckley_leverett(params):
    m = float(params.get("mobility_ratio", 0.5))
    if not m > 0:
        raise FluxError("buckley_leverett requires mobility_ratio > 0")

    def den(u):
        return u * u + m * (1.0 - u) ** 2

    def f(u):
        return u * u / den(u)

    def df(u):
        d = den(u)
        return 2.0 * m * u * (1.0 - u) / (d * d)

    def ddf(u):
        d = den(u)
        dp = 2.0 * u - 2.0 * m * (1.0 - u)
        return 2.0 * m * ((1.0 - 2.0 * u) * d - 2.0 * u * (1.0 - u) * dp) / d**3

    return dict(f=f, df=df, ddf=ddf, domain=(0.0, 1.0), stationary=(0.0, 1.0),
            inflection_bracket=(1e-6, 1.0 - 1e-6))


def _lwr_linear(params):
    vmax = float(params.get("v_max", 1.0))
    rmax = float(params.get("rho_max", 1.0))
    if not (vmax > 0 and rmax > 0):
        raise FluxError("lwr_linear requires v_max > 0 and rho_max > 0")
    return dict(
        f=lambda r: vmax * r * (1.0 - r / rmax),
        df=lambda r: vmax * (1.0 - 2.0 * r / rmax),
        ddf=lambda r: (-2.0 * vmax / rmax) * (np.ones_like(r, dtype=float) if np.ndim(r) else 1.0),
        domain=(0.0, rmax), quadratic=True, stationary=(0.5 * rmax,))


def _lwr_exponential(params):
    vmax = float(params.get("v_max", 1.0))
    r0 = float(params.get("rho_0", 1.0))
    rmax = float(params.get("rho_max", math.inf))
    if not (vmax > 0 and r0 > 0 and rmax > 0):
        raise FluxError("lwr_exponential requires v_max, rho_0, rho_max > 0")
    return dict(
        f=lambda r: vmax * r * np.exp(-r / r0),
        df=lambda r: vmax * np.exp(-r / r0) * (1.0 - r / r0),
        ddf=lambda r: vmax * np.exp(-r / r0) * (r / r0 - 2.0) / r0,
        domain=(0.0, rmax), stationary=(r0,) if r0 < rmax else (),
        inflections=(2.0 * r0,) if 2.0 * r0 < rmax else ())


BUILTIN_FLUXES = {
    "burgers": _burgers,
    "quartic": _quartic,
    "buckley_leverett": _buckley_leverett,
    "lwr_linear": _lwr_linear,
    "lwr_exponential": _lwr_exponential,
}


def flux_ids() -> tuple[str, ...]:
    return tuple(BUILTIN_FLUXES)


def make_flux(spec: Mapping[str, Any] | str, **params: float) -> FluxModel:
    """Build a :class:`FluxModel` from ``{"id": ..., "params": {...}}`` or an id."""
    if isinstance(spec, str):
        fid, p = spec, dict(params)
    else:
        fid = spec.get("id")
        p = dict(spec.get("params") or {})
        p.update(params)
    builder = BUILTIN_FLUXES.get(fid)
    if builder is None:
        raise FluxError(f"flux '{fid}' not found; try one of {flux_ids()}")
    d = builder(p)

    inflections = d.get("inflections")
    if inflections is None and "inflection_bracket" in d:
        lo, hi = d["inflection_bracket"]
        inflections = (_bisect(lambda v: float(d["ddf"](v)), lo, hi, INFLECTION_TOL),)
    return FluxModel(
        id=fid, params=p, _f=d["f"], _df=d["df"], _ddf=d["ddf"],
        inflections=tuple(inflections or ()), domain=d["domain"],
        quadratic=d.get("quadratic", False),
        stationary=tuple(d.get("stationary", ())))


def custom_flux(f: Scalar, df: Scalar, ddf: Scalar, *,
        domain: tuple[float, float], inflections: tuple[float, ...] | None = None,
        stationary: tuple[float, ...] | None = None, name: str = "custom") -> FluxModel:
    """A user flux. Inflections and stationary points are located by scanning
    ``ddf`` and ``df`` when not given; that needs a finite ``domain``."""
    lo, hi = domain
    if inflections is None or stationary is None:
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise FluxError("custom flux on an unbounded domain must list inflections and stationary points")
    if inflections is None:
        inflections = scan_sign_changes(ddf, lo, hi)
    if stationary is None:
        stationary = scan_sign_changes(df, lo, hi)
    return FluxModel(id=name, params={}, _f=f, _df=df, _ddf=ddf,
            inflections=tuple(inflections), domain=domain, stationary=tuple(stationary))

# }}}
