"""The particle front: global solution state, characteristic motion, and the
event-driven driver loop.

Particles cache their characteristic speed ``s = f'(u)`` and Lagrangian flux
``F = f'(u) u - f(u)``. Moving particles and measuring areas therefore never
evaluates the flux; only management (new values) does.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from raretrack.flux import FluxModel
from raretrack.wave import Particle, Role, averages_cached, avg_cached

#: relative pair-collision tolerance when deciding which pairs meet at a step
COLLISION_RTOL = 1e-12
#: position tolerance relative to the initial extent of the front
X_RTOL = 1e-12


class SolverError(RuntimeError):
    """Solver abort. ``dump`` holds whatever local state explains the failure."""

    def __init__(self, message: str, dump: dict | None = None):
        super().__init__(message)
        self.dump = dump or {}


@dataclass(frozen=True)
class Pt:
    """A particle together with its cached flux data."""

    x: float
    u: float
    s: float
    F: float
    role: int = int(Role.REGULAR)
    id: int = -1

    def moved(self, x: float) -> "Pt":
        return Pt(x, self.u, self.s, self.F, self.role, -1)

    def as_particle(self) -> Particle:
        return Particle(float(self.x), float(self.u), Role(self.role))


def make_pt(flux: FluxModel, x: float, u: float, role: int = int(Role.REGULAR)) -> Pt:
    s = float(flux.df(u))
    return Pt(float(x), float(u), s, s * u - float(flux.f(u)), int(role), -1)


def pair_average(p: Pt, q: Pt, quadratic: bool = False) -> float:
    return avg_cached(p.u, q.u, p.s, q.s, p.F, q.F, quadratic)


@dataclass(frozen=True)
class FrontSnapshot:
    """Immutable copy of a front handed to observers."""

    t: float
    x: np.ndarray
    u: np.ndarray
    s: np.ndarray
    F: np.ndarray
    role: np.ndarray
    ids: np.ndarray
    ledger: float
    flux: FluxModel = field(repr=False)

    def __len__(self) -> int:
        return len(self.x)


class ParticleFront:
    """Ordered particles with positions, values, roles and cached flux data.

    ``ledger`` is the area the front should have: the initial area plus the
    Lagrangian flux through the extreme particles, plus any constant-state
    extension added at the ends. Management must leave it unchanged.
    """

    def __init__(self, x, u, role, flux: FluxModel, d_max: float, d_min: float = 0.0,
            t: float = 0.0, *, s=None, F=None, ids=None, x_tol: float | None = None,
            ledger: float | None = None, next_id: int | None = None,
            cover: tuple[float, float] | None = None):
        x = np.array(x, dtype=float)
        u = np.array(u, dtype=float)
        if x.shape != u.shape or x.ndim != 1:
            raise ValueError("x and u must be 1-d arrays of equal length")
        if not d_max > d_min >= 0.0:
            raise ValueError("need d_max > d_min >= 0")
        if np.any(np.diff(x) < 0):
            raise ValueError("particle positions must be non-decreasing")
        flux.check_domain(u)
        self.flux = flux
        self.t = float(t)
        self.x = x
        self.u = u
        self.role = np.zeros(len(x), dtype=np.int8) if role is None else np.array(role, dtype=np.int8)
        if s is None:
            s = flux.df(u)
            F = s * u - flux.f(u)
        self.s = np.array(s, dtype=float)
        self.F = np.array(F, dtype=float)
        n = len(x)
        self.ids = np.arange(n, dtype=np.int64) if ids is None else np.array(ids, dtype=np.int64)
        self._next_id = int(self.ids.max()) + 1 if next_id is None and n else (next_id or 0)
        self.d_max = float(d_max)
        self.d_min = float(d_min)
        if x_tol is None:
            width = float(x[-1] - x[0]) if n > 1 else 1.0
            x_tol = X_RTOL * (width if width > 0 else 1.0)
        self.x_tol = float(x_tol)
        self.ledger = total_area(self) if ledger is None else float(ledger)
        #: number of particles created by management
        self.inserted = 0
        #: area gained from a source over the movement phases
        self.source_integral = 0.0
        #: interval the front must keep spanning; ends that move inward are
        #: re-extended with their constant state
        self.cover = None if cover is None else (float(cover[0]), float(cover[1]))

    @classmethod
    def from_particles(cls, particles: Sequence[Particle], flux: FluxModel,
            d_max: float, d_min: float = 0.0, t: float = 0.0) -> "ParticleFront":
        return cls([p.x for p in particles], [p.u for p in particles],
                [int(p.role) for p in particles], flux, d_max, d_min, t)

    # {{{ access

    def __len__(self) -> int:
        return len(self.x)

    def pt(self, i: int) -> Pt:
        return Pt(float(self.x[i]), float(self.u[i]), float(self.s[i]), float(self.F[i]),
                int(self.role[i]), int(self.ids[i]))

    def particle(self, i: int) -> Particle:
        return Particle(float(self.x[i]), float(self.u[i]), Role(int(self.role[i])))

    def particles(self) -> list[Particle]:
        return [self.particle(i) for i in range(len(self))]

    def copy(self) -> "ParticleFront":
        new = object.__new__(ParticleFront)
        new.__dict__.update(self.__dict__)
        for name in ("x", "u", "role", "s", "F", "ids"):
            setattr(new, name, getattr(self, name).copy())
        return new

    def snapshot(self) -> FrontSnapshot:
        arrays = {}
        for name in ("x", "u", "s", "F", "role", "ids"):
            a = getattr(self, name).copy()
            a.setflags(write=False)
            arrays[name] = a
        return FrontSnapshot(t=self.t, ledger=self.ledger, flux=self.flux, **arrays)

    # }}}

    # {{{ mutation (management only)

    def replace_range(self, lo: int, hi: int, pts: Iterable[Pt]) -> None:
        """Replace particles ``lo:hi`` by ``pts``; points with ``id < 0`` get new ids."""
        pts = list(pts)
        ids = []
        for p in pts:
            if p.id < 0:
                ids.append(self._next_id)
                self._next_id += 1
                self.inserted += 1
            else:
                ids.append(p.id)

        def splice(arr, vals, dtype):
            return np.concatenate([arr[:lo], np.asarray(vals, dtype=dtype), arr[hi:]])

        self.x = splice(self.x, [p.x for p in pts], float)
        self.u = splice(self.u, [p.u for p in pts], float)
        self.s = splice(self.s, [p.s for p in pts], float)
        self.F = splice(self.F, [p.F for p in pts], float)
        self.role = splice(self.role, [p.role for p in pts], np.int8)
        self.ids = splice(self.ids, ids, np.int64)

    def set_values(self, x, u) -> None:
        """Overwrite all positions and values, refreshing caches (source mode)."""
        self.x = np.asarray(x, dtype=float)
        self.u = np.asarray(u, dtype=float)
        self.flux.check_domain(self.u)
        self.s = self.flux.df(self.u)
        self.F = self.s * self.u - self.flux.f(self.u)

    # }}}


# {{{ global quantities

def segment_areas(front) -> np.ndarray:
    if len(front.x) < 2:
        return np.zeros(0)
    return np.diff(front.x) * averages_cached(front.u, front.s, front.F, front.flux.quadratic)


def total_area(front) -> float:
    return float(np.sum(segment_areas(front)))


def total_variation(front) -> float:
    return float(np.sum(np.abs(np.diff(front.u))))


@dataclass(frozen=True)
class EntropyLevels:
    """Kruzkov levels ``k`` with their cached speeds and Lagrangian fluxes."""

    k: np.ndarray
    s: np.ndarray
    F: np.ndarray

    @classmethod
    def spanning(cls, flux: FluxModel, umin: float, umax: float, count: int = 9) -> "EntropyLevels":
        k = np.linspace(umin, umax, count)
        s = flux.df(k)
        return cls(k, s, s * k - flux.f(k))


def kruzkov_entropies(front, levels: EntropyLevels) -> np.ndarray:
    """``int |u - k| dx`` over the front for every level, exactly.

    Segments are split at the level-set crossing ``x(k)``, which the
    interpolant gives in closed form; each piece is itself a similarity wave.
    """
    x, u, s, F = front.x, front.u, front.s, front.F
    out = np.zeros(len(levels.k))
    if len(x) < 2:
        return out
    x1, x2, u1, u2, s1, s2, F1, F2 = x[:-1], x[1:], u[:-1], u[1:], s[:-1], s[1:], F[:-1], F[1:]
    w = x2 - x1
    quad = front.flux.quadratic
    a = averages_cached(u, s, F, quad)
    lo, hi = np.minimum(u1, u2), np.maximum(u1, u2)
    for j, (k, sk, Fk) in enumerate(zip(levels.k, levels.s, levels.F)):
        inside = (lo < k) & (k < hi) & (w > 0)
        plain = np.abs(w * (a - k))
        if np.any(inside):
            idx = np.nonzero(inside)[0]
            ds = s2[idx] - s1[idx]
            # equal speeds at distinct values (underflow): the segment is a plain ramp
            frac = np.where(ds != 0, (sk - s1[idx]) / np.where(ds != 0, ds, 1.0),
                    (k - u1[idx]) / (u2[idx] - u1[idx]))
            xk = x1[idx] + frac * w[idx]
            kk = np.full(len(idx), k)
            left = averages_cached(np.stack([u1[idx], kk]), np.stack([s1[idx], np.full(len(idx), sk)]),
                    np.stack([F1[idx], np.full(len(idx), Fk)]), quad)[0]
            right = averages_cached(np.stack([kk, u2[idx]]), np.stack([np.full(len(idx), sk), s2[idx]]),
                    np.stack([np.full(len(idx), Fk), F2[idx]]), quad)[0]
            plain[idx] = (xk - x1[idx]) * np.abs(left - k) + (x2[idx] - xk) * np.abs(right - k)
        out[j] = float(np.sum(plain))
    return out

# }}}


# {{{ motion

def pair_collision_times(front) -> np.ndarray:
    """Per adjacent pair: time to collision (``inf`` if departing, 0 if stacked
    or overtaken while approaching)."""
    x, s = front.x, front.s
    if len(x) < 2:
        return np.zeros(0)
    closing = s[:-1] - s[1:]
    gap = np.diff(x)
    dt = np.full(len(gap), np.inf)
    comp = closing > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        dt[comp] = np.maximum(gap[comp], 0.0) / closing[comp]
    # overtaken pairs must be resolved immediately regardless of direction
    dt[gap < -front.x_tol] = 0.0
    return dt


def next_event(front) -> float:
    dt = pair_collision_times(front)
    return float(dt.min()) if len(dt) else math.inf


def advance(front: ParticleFront, dt: float) -> ParticleFront:
    """Move every particle along its characteristic for ``dt``."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    new = front.copy()
    if dt == 0:
        return new
    nxt = next_event(front)
    new.x = front.x + front.s * dt
    if dt > nxt:
        gap = np.diff(new.x)
        if np.any(gap < -front.x_tol):
            raise SolverError(f"dt={dt} exceeds the next collision time {nxt}")
    new.t = front.t + dt
    if len(new.x) > 1:
        new.ledger = front.ledger + dt * (front.F[-1] - front.F[0])
    return new


def snap_groups(front, mask: np.ndarray) -> None:
    """Put runs of colliding pairs at one common position."""
    i, n = 0, len(mask)
    while i < n:
        if not mask[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and mask[j + 1]:
            j += 1
        # particles i..j+1 meet
        xs = front.x[i:j + 2]
        front.x[i:j + 2] = float(np.mean(xs))
        i = j + 1
    # rounding in the mean can disturb ordering with outside neighbours
    np.maximum.accumulate(front.x, out=front.x)

# }}}


@dataclass(frozen=True)
class Event:
    kind: str
    t: float
    info: dict = field(default_factory=dict)


Observer = Callable[[Event, FrontSnapshot], Any]


def run(front: ParticleFront, t_end: float, observer: Observer | None = None, *,
        source=None, rk_substep: float | None = None, dt_cap: float | None = None,
        entropy_fix: bool = True) -> ParticleFront:
    """Evolve ``front`` to ``t_end``.

    Steps to the next collision (or ``t_end``), then performs particle
    management. With a ``source`` the characteristic equations are integrated
    by RK4 and steps are additionally capped by ``dt_cap``.
    """
    from raretrack import management

    if t_end < front.t:
        raise ValueError("t_end precedes the front time")
    front = front.copy()
    if t_end == front.t:
        return front

    if observer is not None:
        def emit(kind, **info):
            observer(Event(kind, front.t, info), front.snapshot())
    else:
        emit = None

    if source is not None:
        from raretrack import sources
        if dt_cap is None:
            dt_cap = sources.default_dt_cap(front)
    if emit:
        emit("start")

    n0 = len(front)
    span = t_end - front.t
    events = 0
    while True:
        remaining = t_end - front.t
        if source is None:
            dts = pair_collision_times(front)
            dt_s = float(dts.min()) if len(dts) else math.inf
        else:
            dts = pair_collision_times(front)
            dt_s = float(dts.min()) if len(dts) else math.inf
            dt_s = min(dt_s, dt_cap)
        final = dt_s >= remaining
        dt = remaining if final else dt_s
        if source is None:
            moved = advance(front, dt)
            front.x, front.t, front.ledger = moved.x, moved.t, moved.ledger
            if not final:
                mask = dts <= dt * (1.0 + COLLISION_RTOL) + 1e-300
                mask |= np.diff(front.x) < 0
                snap_groups(front, mask)
        else:
            from raretrack import sources
            before = total_area(front)
            moved = sources.advance_with_source(front, source, dt, rk_substep)
            front.x, front.u, front.s, front.F, front.t = moved.x, moved.u, moved.s, moved.F, moved.t
            gained = total_area(front) - before
            front.ledger += gained
            front.source_integral += gained
        if final:
            front.t = float(t_end)
        if emit:
            emit("advance", dt=dt)
        management.manage(front, emit=emit, entropy_fix=entropy_fix, strict=source is None)
        events += 1
        if final:
            break
        cap = 10 * (n0 + front.inserted) * max(1.0, span) + 100
        if source is not None:
            cap += span / dt_cap
        if events > cap:
            raise SolverError(f"event cap {cap:.0f} exceeded at t={front.t}",
                    {"t": front.t, "particles": len(front)})
    if emit:
        emit("end")
    return front


# {{{ diagnostics

@dataclass
class EventRecord:
    kind: str
    t: float
    area: float
    ledger: float
    tv: float
    particles: int
    evals: dict
    entropies: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    @property
    def conservation_error(self) -> float:
        return self.area - self.ledger


class RunDiagnostics:
    """Observer recording area, total variation, entropies and evaluation
    counts after every event."""

    def __init__(self, flux: FluxModel, levels: EntropyLevels | None = None,
            area_scale: float = 1.0, hooks: Sequence[Observer] = ()):
        self.flux = flux
        self.levels = levels
        self.area_scale = area_scale
        self.records: list[EventRecord] = []
        self.hooks = list(hooks)

    @classmethod
    def for_front(cls, front: ParticleFront, entropy: bool = True, **kw) -> "RunDiagnostics":
        levels = None
        if entropy and len(front):
            levels = EntropyLevels.spanning(front.flux, float(front.u.min()), float(front.u.max()))
        w = np.diff(front.x)
        l1 = float(np.sum(np.abs(segment_areas(front)))) if len(w) else 0.0
        # a front of zero width still spans one cell once it moves
        cell = float(np.max(np.abs(front.u))) * max(float(front.x[-1] - front.x[0]), front.d_max) \
            if len(w) else 0.0
        scale = max(abs(total_area(front)), l1, cell, 1e-300)
        return cls(front.flux, levels, scale, **kw)

    def __call__(self, event: Event, snap: FrontSnapshot) -> None:
        ent = kruzkov_entropies(snap, self.levels) if self.levels is not None else None
        self.records.append(EventRecord(event.kind, snap.t, total_area(snap), snap.ledger,
                total_variation(snap), len(snap), self.flux.counter.snapshot(), ent,
                dict(event.info)))
        for h in self.hooks:
            h(event, snap)

    def event_counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for r in self.records:
            out[r.kind] = out.get(r.kind, 0) + 1
        return out

    def steps(self):
        """Consecutive record pairs ``(before, after)``."""
        return zip(self.records, self.records[1:])

    def max_event_drift(self, kinds: Iterable[str] | None = None) -> float:
        """Largest relative change of ``area - ledger`` caused by one event."""
        worst = 0.0
        kinds = set(kinds) if kinds is not None else None
        for a, b in self.steps():
            if kinds is None or b.kind in kinds:
                worst = max(worst, abs(b.conservation_error - a.conservation_error) / self.area_scale)
        return worst

    def max_drift(self) -> float:
        if not self.records:
            return 0.0
        e0 = self.records[0].conservation_error
        return max(abs(r.conservation_error - e0) for r in self.records) / self.area_scale

    def max_tv_increase(self) -> float:
        return max((b.tv - a.tv for a, b in self.steps()), default=0.0)

    def max_entropy_increase(self, kinds: Iterable[str] = ("merge", "merge_inflection")) -> float:
        kinds = set(kinds)
        worst = 0.0
        for a, b in self.steps():
            if b.kind in kinds and a.entropies is not None:
                worst = max(worst, float(np.max(b.entropies - a.entropies)))
        return worst

# }}}
