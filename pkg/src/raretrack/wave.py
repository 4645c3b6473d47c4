r"""Similarity-wave interpolation between two particles.

Between particles :math:`(x_1, u_1)` and :math:`(x_2, u_2)` the solution is the
similarity wave

.. math::

    x(u) = x_1 + \frac{f'(u) - f'(u_1)}{f'(u_2) - f'(u_1)} (x_2 - x_1),

which is a rarefaction when the particles depart and a compression wave when
they approach. The area under it is :math:`(x_2 - x_1)\, a(u_1, u_2)` with the
nonlinear average :math:`a = [f'u - f] / [f']`.

The ``*_cached`` helpers work from precomputed speeds ``s = f'(u)`` and
Lagrangian fluxes ``F = f'(u) u - f(u)`` so that the solver can evaluate areas
without touching the flux.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from raretrack.flux import FluxModel

EPS_REL = 1e-13
#: only guards exact zero speed differences; any absolute floor above the
#: underflow range would flatten segments of fluxes with f' ~ u^3 near zero
EPS_ABS = 1e-300
#: relative value separation below which the divided difference of F loses
#: more digits than the midpoint approximation does
NEAR_RTOL = 1e-7


class WaveError(ValueError):
    pass


class Role(enum.IntEnum):
    REGULAR = 0
    SHOCK = 1
    INFLECTION = 2


@dataclass(frozen=True)
class Particle:
    x: float
    u: float
    role: Role = Role.REGULAR


@dataclass(frozen=True)
class WaveSegment:
    left: Particle
    right: Particle
    flux: FluxModel

    def __post_init__(self):
        if self.left.x > self.right.x:
            raise WaveError("segment endpoints out of order")


def _degenerate(u1, u2, s1, s2):
    return (abs(s2 - s1) < EPS_REL * (abs(s1) + abs(s2)) + EPS_ABS
            or abs(u2 - u1) <= NEAR_RTOL * (abs(u1) + abs(u2)))


def avg_cached(u1: float, u2: float, s1: float, s2: float, F1: float, F2: float,
        quadratic: bool = False) -> float:
    """Nonlinear average from cached speeds and Lagrangian fluxes. Quadratic
    fluxes have the exact arithmetic mean."""
    if quadratic or u1 == u2 or _degenerate(u1, u2, s1, s2):
        return 0.5 * (u1 + u2)
    return (F2 - F1) / (s2 - s1)


def averages_cached(u: np.ndarray, s: np.ndarray, F: np.ndarray, quadratic: bool = False) -> np.ndarray:
    """Nonlinear averages of all adjacent pairs."""
    mid = 0.5 * (u[1:] + u[:-1])
    if quadratic:
        return mid
    ds = s[1:] - s[:-1]
    degen = ((np.abs(ds) < EPS_REL * (np.abs(s[1:]) + np.abs(s[:-1])) + EPS_ABS)
            | (np.abs(u[1:] - u[:-1]) <= NEAR_RTOL * (np.abs(u[1:]) + np.abs(u[:-1]))))
    with np.errstate(divide="ignore", invalid="ignore"):
        a = (F[1:] - F[:-1]) / np.where(degen, 1.0, ds)
    return np.where(degen, mid, a)


def _check_no_inflection(flux: FluxModel, u1: float, u2: float) -> None:
    w = flux.inflection_between(u1, u2)
    if w is not None:
        raise WaveError(f"inflection u*={w} lies strictly between {u1} and {u2}")


def average(flux: FluxModel, u1: float, u2: float) -> float:
    """The nonlinear average ``a(u1, u2)``; continuous limit ``u1`` at ``u1 == u2``."""
    if u1 == u2:
        return float(u1)
    _check_no_inflection(flux, u1, u2)
    flux.check_domain([u1, u2])
    if flux.quadratic:
        return 0.5 * (u1 + u2)
    s1, s2 = flux.df(u1), flux.df(u2)
    F1, F2 = s1 * u1 - flux.f(u1), s2 * u2 - flux.f(u2)
    return float(avg_cached(u1, u2, s1, s2, F1, F2))


def interpolate(seg: WaveSegment, u: float) -> float:
    """Position ``x(u)`` on the similarity wave."""
    p, q = seg.left, seg.right
    lo, hi = min(p.u, q.u), max(p.u, q.u)
    if not lo <= u <= hi:
        raise WaveError(f"u={u} outside the segment range [{lo}, {hi}]")
    if p.u == q.u:
        raise WaveError("constant segment: x(u) is undefined")
    _check_no_inflection(seg.flux, p.u, q.u)
    if u == p.u:
        return p.x
    if u == q.u:
        return q.x
    s1, s2, s = seg.flux.df(p.u), seg.flux.df(q.u), seg.flux.df(u)
    if s1 == s2:
        raise WaveError("equal characteristic speeds at distinct values")
    return p.x + (s - s1) / (s2 - s1) * (q.x - p.x)


def segment_area(seg: WaveSegment) -> float:
    w = seg.right.x - seg.left.x
    if w == 0.0:
        return 0.0
    return w * average(seg.flux, seg.left.u, seg.right.u)


def collision_time_cached(x1: float, x2: float, s1: float, s2: float) -> float | None:
    if not s1 > s2:
        return None
    dt = (x2 - x1) / (s1 - s2)
    if not (math.isfinite(dt) and dt >= 0.0):
        return None
    return dt


def collision_time(seg: WaveSegment) -> float | None:
    """Time until the two particles meet, or ``None`` if they never do."""
    p, q = seg.left, seg.right
    if p.u == q.u:
        return None
    return collision_time_cached(p.x, q.x, seg.flux.df(p.u), seg.flux.df(q.u))
