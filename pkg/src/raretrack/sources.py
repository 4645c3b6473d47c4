"""Simple balance laws ``u_t + f(u)_x = g(x, u)``.

Particles follow ``x' = f'(u)``, ``u' = g(x, u)``, integrated by classical
RK4 with a fixed substep. Collision times are estimated from frozen speeds
and capped, so overtaking is possible and is repaired by management.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

from raretrack.front import ParticleFront, next_event


class SourceError(ValueError):
    pass


@dataclass(frozen=True)
class SourceModel:
    id: str
    g: Callable = field(repr=False)
    params: Mapping[str, float] = field(default_factory=dict)
    #: optional dg/du, used only by tests
    dg_du: Callable | None = field(default=None, repr=False)
    #: optional mask of positions where g may be nonzero
    support: Callable | None = field(default=None, repr=False)

    def __call__(self, x, u):
        return self.g(x, u)

    @property
    def is_zero(self) -> bool:
        return self.id == "zero"


def _zero(p):
    return dict(g=lambda x, u: np.zeros(np.broadcast(x, u).shape), dg_du=lambda x, u: 0.0 * u)


def bottom_slope(x, lo: float = 4.5, hi: float = 5.5):
    """b'(x) for b = cos(pi x) on [lo, hi], zero elsewhere; the interior
    derivative is used at the edges."""
    x = np.asarray(x, dtype=float)
    return np.where((x >= lo) & (x <= hi), -math.pi * np.sin(math.pi * x), 0.0)


def _bottom_profile(p):
    lo, hi = float(p.get("lo", 4.5)), float(p.get("hi", 5.5))
    return dict(g=lambda x, u: bottom_slope(x, lo, hi) * u,
            dg_du=lambda x, u: bottom_slope(x, lo, hi) + 0.0 * u,
            support=lambda x: (np.asarray(x) >= lo) & (np.asarray(x) <= hi))


def _linear_damping(p):
    rate = float(p.get("rate", 1.0))
    return dict(g=lambda x, u: -rate * np.asarray(u, dtype=float) + 0.0 * np.asarray(x),
            dg_du=lambda x, u: -rate + 0.0 * u)


BUILTIN_SOURCES = {
    "zero": _zero,
    "bottom_profile": _bottom_profile,
    "linear_damping": _linear_damping,
}


def make_source(spec: Mapping[str, Any] | str | None) -> SourceModel | None:
    if spec is None:
        return None
    if isinstance(spec, str):
        sid, params = spec, {}
    else:
        sid, params = spec.get("id"), dict(spec.get("params") or {})
    if sid not in BUILTIN_SOURCES:
        raise SourceError(f"unknown source id {sid!r}; try one of {tuple(BUILTIN_SOURCES)}")
    d = BUILTIN_SOURCES[sid](params)
    return SourceModel(sid, d["g"], params, d.get("dg_du"), d.get("support"))


def rk4_characteristics(flux, source: SourceModel, x: np.ndarray, u: np.ndarray,
        dt: float, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Integrate every particle's characteristic ODE over ``dt``."""
    if dt == 0:
        return x.copy(), u.copy()
    steps = max(1, int(math.ceil(dt / h - 1e-12)))
    hh = dt / steps
    x, u = x.copy(), u.copy()

    def rhs(xv, uv):
        flux.check_domain(uv)
        return flux.df(uv), source.g(xv, uv)

    for _ in range(steps):
        k1x, k1u = rhs(x, u)
        k2x, k2u = rhs(x + 0.5 * hh * k1x, u + 0.5 * hh * k1u)
        k3x, k3u = rhs(x + 0.5 * hh * k2x, u + 0.5 * hh * k2u)
        k4x, k4u = rhs(x + hh * k3x, u + hh * k3u)
        x = x + hh / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
        u = u + hh / 6.0 * (k1u + 2 * k2u + 2 * k3u + k4u)
    return x, u


def advance_with_source(front: ParticleFront, source: SourceModel, dt: float,
        h_rk: float | None = None) -> ParticleFront:
    """Advance all particles by ``dt`` along the source-bent characteristics."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    new = front.copy()
    if dt == 0:
        return new
    if h_rk is None:
        h_rk = dt / 4.0
    if not h_rk > 0:
        raise ValueError("h_rk must be positive")
    if source.is_zero:
        new.x = front.x + front.s * dt
    else:
        x, u = rk4_characteristics(front.flux, source, front.x, front.u, dt, min(h_rk, dt))
        # a particle that does not feel the source keeps its value and cache
        same = u == front.u
        new.x, new.u = x, u
        new.s = front.s.copy()
        new.F = front.F.copy()
        if not np.all(same):
            ch = ~same
            front.flux.check_domain(u[ch])
            s = front.flux.df(u[ch])
            new.s[ch] = s
            new.F[ch] = s * u[ch] - front.flux.f(u[ch])
    new.t = front.t + dt
    return new


def default_dt_cap(front: ParticleFront) -> float:
    smax = float(np.max(np.abs(front.s))) if len(front) else 0.0
    return 0.5 * front.d_max / smax if smax > 0 else math.inf


def next_event_source(front: ParticleFront, dt_cap: float | None = None) -> float:
    if dt_cap is None:
        dt_cap = default_dt_cap(front)
    return min(next_event(front), dt_cap)


def rk4_error_estimate(flux, source: SourceModel, x: np.ndarray, u: np.ndarray,
        dt: float, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Step-doubling estimate: ``(u_h, |u_h - u_(h/2)|)`` over one step ``dt``."""
    _, u1 = rk4_characteristics(flux, source, x, u, dt, h)
    _, u2 = rk4_characteristics(flux, source, x, u, dt, 0.5 * h)
    return u1, np.abs(u1 - u2)


class RecoveryRecorder:
    """Observer that follows particles across the support ``[lo, hi]`` of a
    source whose integral vanishes there (so values should come out as they
    went in).

    For every particle id it keeps the last value seen left of ``lo``, the
    first value seen right of ``hi`` and the summed RK4 error estimate of the
    steps in between, replayed with the same substeps as the run. Particles
    removed by management simply never get an ``after`` value.
    """

    def __init__(self, flux, source: SourceModel, lo: float, hi: float,
            rk_substep: float | None = None):
        self.flux, self.source = flux, source
        self.lo, self.hi = float(lo), float(hi)
        self.rk_substep = rk_substep
        self.before: dict[int, float] = {}
        self.after: dict[int, float] = {}
        self.estimate: dict[int, float] = {}
        #: largest mismatch between a replayed step and the run
        self.replay_error = 0.0
        self._prev: dict[int, tuple[float, float]] = {}

    def __call__(self, event, snap) -> None:
        # management events only change membership, so they just refresh the state
        if event.kind == "advance":
            self._step(float(event.info["dt"]), snap)
        self._remember(snap)

    def _remember(self, snap) -> None:
        self._prev = {int(i): (float(x), float(u)) for i, x, u in zip(snap.ids, snap.x, snap.u)}

    def _step(self, dt: float, snap) -> None:
        rows = [(k, int(i)) for k, i in enumerate(snap.ids) if int(i) in self._prev]
        if not rows or dt <= 0:
            return
        k = np.array([r[0] for r in rows])
        ids = [r[1] for r in rows]
        x0 = np.array([self._prev[i][0] for i in ids])
        u0 = np.array([self._prev[i][1] for i in ids])
        x1, u1 = np.asarray(snap.x)[k], np.asarray(snap.u)[k]
        touch = (np.minimum(x0, x1) <= self.hi) & (np.maximum(x0, x1) >= self.lo)
        if np.any(touch):
            h = self.rk_substep if self.rk_substep is not None else dt / 4.0
            uh, est = rk4_error_estimate(self.flux, self.source, x0[touch], u0[touch], dt, min(h, dt))
            self.replay_error = max(self.replay_error, float(np.max(np.abs(uh - u1[touch]))))
            for j, e in zip(np.nonzero(touch)[0], est):
                i = ids[j]
                if i in self.before and i not in self.after:
                    self.estimate[i] = self.estimate.get(i, 0.0) + float(e)
        for j, i in enumerate(ids):
            if x1[j] < self.lo:
                self.before[i] = float(u1[j])
                self.estimate.pop(i, None)
            elif x1[j] > self.hi and i in self.before and i not in self.after:
                self.after[i] = float(u1[j])

    def crossings(self) -> list[tuple[int, float, float, float]]:
        """``(id, u_before, u_after, error_estimate)`` per completed crossing."""
        return [(i, self.before[i], self.after[i], self.estimate.get(i, 0.0))
                for i in sorted(self.after)]
