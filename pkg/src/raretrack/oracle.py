"""Independent references for verification: a first-order Godunov scheme and
closed-form or characteristic solutions of the test problems.

Nothing here shares code with the particle method beyond the flux model and
the polyline type used for comparisons.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from raretrack.flux import FluxModel, _bisect
from raretrack.postprocess import Polyline, kruzkov_entropy  # noqa: F401  (re-export)
from raretrack.sampling import InitialCondition

CFL = 0.9
_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(4)


class OracleError(ValueError):
    pass


# {{{ Godunov

@dataclass(frozen=True)
class CellSolution:
    edges: np.ndarray
    averages: np.ndarray
    t: float

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def dx(self) -> float:
        return float(self.edges[1] - self.edges[0])

    def total(self) -> float:
        return float(np.sum(self.averages) * self.dx)

    def polyline(self) -> Polyline:
        """Piecewise-constant graph with jumps at the cell faces."""
        x = np.repeat(self.edges, 2)[1:-1]
        u = np.repeat(self.averages, 2)
        return Polyline(x, u)


def cell_averages(ic, edges: np.ndarray) -> np.ndarray:
    """Cell averages by 4-point Gauss quadrature on every sub-interval
    between faces and piece boundaries."""
    breaks = [edges]
    if isinstance(ic, InitialCondition):
        breaks.append(np.array([p.a for p in ic.pieces[1:]]))
    pts = np.unique(np.concatenate(breaks))
    pts = pts[(pts >= edges[0]) & (pts <= edges[-1])]
    a, b = pts[:-1], pts[1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    nodes = mid[:, None] + half[:, None] * _GAUSS_X[None, :]
    vals = np.asarray(ic(nodes.ravel()), dtype=float).reshape(nodes.shape)
    integ = np.sum(vals * _GAUSS_W[None, :], axis=1) * half
    cell = np.searchsorted(edges, mid, side="right") - 1
    out = np.zeros(len(edges) - 1)
    np.add.at(out, cell, integ)
    return out / np.diff(edges)


def osher_flux(flux: FluxModel, ul: np.ndarray, ur: np.ndarray) -> np.ndarray:
    """Exact Godunov flux: min of f over [ul, ur] if ul <= ur, else max."""
    fl, fr = flux.f(ul), flux.f(ur)
    up = ul <= ur
    out = np.where(up, np.minimum(fl, fr), np.maximum(fl, fr))
    lo, hi = np.minimum(ul, ur), np.maximum(ul, ur)
    for w in flux.stationary:
        inside = (lo < w) & (w < hi)
        if np.any(inside):
            fw = float(flux.f(w))
            out = np.where(inside & up, np.minimum(out, fw), out)
            out = np.where(inside & ~up, np.maximum(out, fw), out)
    return out


def _speed_bound(flux: FluxModel, u: np.ndarray) -> float:
    lo, hi = float(np.min(u)), float(np.max(u))
    grid = np.linspace(lo, hi, 257) if hi > lo else np.array([lo])
    return float(max(np.max(np.abs(flux.df(grid))), np.max(np.abs(flux.df(u)))))


def _rk4_source(source, x, u, dt, substeps=1):
    h = dt / substeps
    for _ in range(substeps):
        k1 = source.g(x, u)
        k2 = source.g(x, u + 0.5 * h * k1)
        k3 = source.g(x, u + 0.5 * h * k2)
        k4 = source.g(x, u + h * k3)
        u = u + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return u


def godunov_solve(flux: FluxModel, ic, cells: int, t_end: float, *,
        domain: tuple[float, float] | None = None, source=None, cfl: float = CFL,
        pad: float = 0.0, t0: float = 0.0) -> CellSolution:
    """First-order Godunov solution at ``t_end`` on ``cells`` uniform cells.

    Ghost cells extend the boundary values as constants. ``pad`` widens the
    domain on both sides (cell size kept). With a ``source`` the update is
    Strang split, the source half steps integrated by RK4 per cell.
    """
    if domain is None:
        domain = ic.domain
    lo, hi = map(float, domain)
    if cells < 1 or not hi > lo:
        raise OracleError("need cells >= 1 and a non-empty domain")
    dx = (hi - lo) / cells
    extra = int(math.ceil(pad / dx)) if pad > 0 else 0
    edges = lo + dx * np.arange(-extra, cells + extra + 1)
    u = cell_averages(ic, edges)
    xc = 0.5 * (edges[1:] + edges[:-1])
    smax = _speed_bound(flux, u)
    t = float(t0)
    if source is not None:
        # cells outside the source support never change in the source steps
        act = np.nonzero(source.support(xc))[0] if source.support is not None else slice(None)
    while t < t_end:
        if source is not None:
            smax = max(smax, float(np.max(np.abs(flux.df(u)))))
        if not math.isfinite(smax):
            raise OracleError("unbounded characteristic speed")
        dt = cfl * dx / smax if smax > 0 else t_end - t
        if t + dt >= t_end:
            dt = t_end - t
        if source is not None:
            u[act] = _rk4_source(source, xc[act], u[act], 0.5 * dt)
        ue = np.concatenate([[u[0]], u, [u[-1]]])
        F = osher_flux(flux, ue[:-1], ue[1:])
        u = u - dt / dx * (F[1:] - F[:-1])
        if source is not None:
            u[act] = _rk4_source(source, xc[act], u[act], 0.5 * dt)
        t += dt
    return CellSolution(edges, u, t)


def self_convergence(flux, ic, cells: int, t_end: float, factor: int = 16, **kw) -> float:
    """``||G_N - G_{factor N}||_1``, an estimate of the oracle's own error at ``N`` cells."""
    coarse = godunov_solve(flux, ic, cells, t_end, **kw)
    fine = godunov_solve(flux, ic, factor * cells, t_end, **kw)
    from raretrack.postprocess import l1_distance
    return l1_distance(coarse.polyline(), fine.polyline())

# }}}


# {{{ analytic references

def _window(window, default):
    return default if window is None else (float(window[0]), float(window[1]))


def burgers_fan(t: float, u_l: float = 0.0, u_r: float = 1.0, x0: float = 0.0,
        window=None) -> Polyline:
    """Burgers rarefaction fan ``u = (x - x0)/t`` between ``u_l < u_r``."""
    if not u_l <= u_r:
        raise OracleError("a fan needs u_l <= u_r")
    lo, hi = _window(window, (x0 + min(u_l * t, 0.0) - 1.0, x0 + max(u_r * t, 0.0) + 1.0))
    xa, xb = x0 + u_l * t, x0 + u_r * t
    return Polyline(np.array([min(lo, xa), xa, xb, max(hi, xb)]), np.array([u_l, u_l, u_r, u_r]))


def burgers_shock(t: float, u_l: float = 1.0, u_r: float = 0.0, x0: float = 0.0,
        window=None) -> Polyline:
    """Burgers shock moving at ``(u_l + u_r)/2``."""
    if not u_l > u_r:
        raise OracleError("a shock needs u_l > u_r")
    xs = x0 + 0.5 * (u_l + u_r) * t
    lo, hi = _window(window, (xs - 1.0, xs + 1.0))
    return Polyline(np.array([min(lo, xs), xs, xs, max(hi, xs)]), np.array([u_l, u_l, u_r, u_r]))


def gaussian_cosine(x):
    return np.exp(-np.asarray(x, dtype=float) ** 2) * np.cos(math.pi * np.asarray(x, dtype=float))


def quartic_presshock_moc(t: float, u0: Callable = gaussian_cosine,
        domain: tuple[float, float] = (-3.0, 3.0), samples: int = 60001) -> Polyline:
    """Characteristic solution of ``u_t + (u^4/4)_x = 0`` before shocks form:
    the curve ``(y + t u0(y)^3, u0(y))`` on a fine ``y`` grid."""
    y = np.linspace(domain[0], domain[1], samples)
    v = u0(y)
    x = y + t * v**3
    if np.any(np.diff(x) <= 0):
        raise OracleError(f"characteristics have crossed by t={t}; no smooth solution")
    return Polyline(x, v)


def quartic_breaking_time(u0: Callable = gaussian_cosine, domain=(-3.0, 3.0)) -> float:
    y = np.linspace(domain[0], domain[1], 200001)
    d = np.gradient(u0(y) ** 3, y)
    return float(-1.0 / d.min()) if d.min() < 0 else math.inf


def riemann_waves(flux: FluxModel, u_l: float, u_r: float) -> list[tuple[str, float, float]]:
    """Entropy Riemann solution for a flux with at most one inflection, as a
    left-to-right list of ``("shock"|"fan", ua, ub)``.

    A fan runs along ``f'``; a shock connects two values whose chord is
    tangent to the flux at an inflection-side endpoint (convex hull rule).
    """
    if u_l == u_r:
        return []
    inc = u_l < u_r
    lo, hi = min(u_l, u_r), max(u_l, u_r)
    # convex hull for increasing data, concave hull for decreasing
    sgn = 1.0 if inc else -1.0

    def d2(u):
        return sgn * float(flux.ddf(u))

    w = flux.inflection_between(lo, hi)
    if w is None:
        mid = 0.5 * (lo + hi)
        if d2(mid) >= 0:
            return [("fan", u_l, u_r)]
        return [("shock", u_l, u_r)]

    def chord(a, b):
        return (float(flux.f(b)) - float(flux.f(a))) / (b - a)

    # the hull follows f on the side where sgn*f'' > 0 (near the start value
    # for the envelope direction) and is a chord elsewhere
    if d2(0.5 * (u_l + w)) > 0:
        # hull follows f from u_l towards w, then a chord to u_r
        def g(v):
            return float(flux.df(v)) - chord(v, u_r)
        if g(u_l) * g(w) > 0:
            return [("shock", u_l, u_r)]
        us = _bisect(g, min(u_l, w), max(u_l, w), 1e-15)
        return [("fan", u_l, us), ("shock", us, u_r)]
    # chord from u_l, tangent on the far side, then f towards u_r
    def g(v):
        return float(flux.df(v)) - chord(u_l, v)
    if g(w) * g(u_r) > 0:
        return [("shock", u_l, u_r)]
    us = _bisect(g, min(w, u_r), max(w, u_r), 1e-15)
    return [("shock", u_l, us), ("fan", us, u_r)]


def riemann_solution(flux: FluxModel, u_l: float, u_r: float, t: float, x0: float = 0.0,
        window=None, samples: int = 2001) -> Polyline:
    xs, us = [], []
    for kind, a, b in riemann_waves(flux, u_l, u_r):
        if kind == "shock":
            s = (float(flux.f(b)) - float(flux.f(a))) / (b - a)
            xs += [x0 + s * t, x0 + s * t]
            us += [a, b]
        else:
            v = np.linspace(a, b, samples)
            xs += list(x0 + t * flux.df(v))
            us += list(v)
    if not xs:
        xs, us = [x0, x0], [u_l, u_r]
    xs, us = np.array(xs, dtype=float), np.array(us, dtype=float)
    xs = np.maximum.accumulate(xs)
    lo, hi = _window(window, (xs[0] - 1.0, xs[-1] + 1.0))
    return Polyline(np.concatenate([[min(lo, xs[0])], xs, [max(hi, xs[-1])]]),
            np.concatenate([[u_l], us, [u_r]]))


def bl_riemann(t: float, u_l: float = 1.0, u_r: float = 0.0, x0: float = 0.0,
        mobility_ratio: float = 0.5, window=None) -> Polyline:
    from raretrack.flux import make_flux
    flux = make_flux("buckley_leverett", mobility_ratio=mobility_ratio)
    return riemann_solution(flux, u_l, u_r, t, x0, window)


ANALYTIC = {
    "burgers_fan": burgers_fan,
    "burgers_shock": burgers_shock,
    "quartic_presshock_moc": quartic_presshock_moc,
    "bl_riemann": bl_riemann,
}


def analytic_reference(name: str, t: float, **kw) -> Polyline:
    if name not in ANALYTIC:
        raise OracleError(f"unknown reference {name!r}; try one of {tuple(ANALYTIC)}")
    if t < 0:
        raise OracleError("t must be non-negative")
    return ANALYTIC[name](t, **kw)

# }}}
