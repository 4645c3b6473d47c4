"""Output-side processing: shock sharpening, polyline evaluation of the
interpolant, and L1 distances between polylines."""
from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass

import numpy as np

from raretrack.front import ParticleFront, Pt, segment_areas
from raretrack.wave import Role

PLOT_SAMPLES = 8
ERROR_SAMPLES = 64


@dataclass(frozen=True)
class Polyline:
    """Graph of a function as an ordered point list; repeated ``x`` is a jump."""

    x: np.ndarray
    u: np.ndarray
    segment_id: np.ndarray | None = None

    def __post_init__(self):
        if len(self.x) != len(self.u) or len(self.x) == 0:
            raise ValueError("polyline needs matching, non-empty x and u")
        if np.any(np.diff(self.x) < 0):
            raise ValueError("polyline x must be non-decreasing")

    @property
    def is_jump(self) -> np.ndarray:
        """True for a point that starts a vertical piece (next point has equal x
        and a different value)."""
        j = np.zeros(len(self.x), dtype=bool)
        j[:-1] = (np.diff(self.x) == 0) & (np.diff(self.u) != 0)
        return j

    @classmethod
    def from_points(cls, x, u) -> "Polyline":
        return cls(np.asarray(x, dtype=float), np.asarray(u, dtype=float))

    def __call__(self, x) -> np.ndarray:
        """Right-continuous evaluation with constant extension."""
        return _right_limit(self, np.asarray(x, dtype=float))


# {{{ shocks

def sharpen_shocks(front: ParticleFront) -> ParticleFront:
    """Copy of ``front`` where each interior shock particle between a
    compressive, monotone pair of neighbours becomes a discontinuity.

    The jump position follows from keeping the area over the two adjacent
    segments, which turn into constants.
    """
    out = front.copy()
    n = len(front)
    if n < 3:
        return out
    areas = segment_areas(front)
    x, u, s = front.x, front.u, front.s
    pts: list[Pt] = [front.pt(0)]
    i = 1
    changed = False
    while i < n - 1:
        if (int(front.role[i]) == Role.SHOCK and s[i - 1] > s[i + 1] and u[i - 1] != u[i + 1]
                and (u[i - 1] - u[i]) * (u[i] - u[i + 1]) >= 0):
            A = areas[i - 1] + areas[i]
            xbar = (A - x[i + 1] * u[i + 1] + x[i - 1] * u[i - 1]) / (u[i - 1] - u[i + 1])
            if x[i - 1] <= xbar <= x[i + 1]:
                p1, p3 = front.pt(i - 1), front.pt(i + 1)
                pts.append(Pt(xbar, p1.u, p1.s, p1.F, int(Role.SHOCK), -1))
                pts.append(Pt(xbar, p3.u, p3.s, p3.F, int(Role.SHOCK), -1))
                # the right neighbour stays an ordinary particle
                pts.append(p3)
                i += 2
                changed = True
                continue
        pts.append(front.pt(i))
        i += 1
    if i == n - 1:
        pts.append(front.pt(n - 1))
    if changed:
        out.replace_range(0, n, pts)
    return out


def shock_positions(front: ParticleFront) -> np.ndarray:
    """Positions of the discontinuities of a sharpened front."""
    gap = np.diff(front.x)
    return front.x[:-1][(gap == 0) & (front.u[:-1] != front.u[1:])]


def shock_jumps(front: ParticleFront, min_jump: float | None = None) -> list[tuple[float, float, float]]:
    """``(x, u_left, u_right)`` for every jump of the sharpened front at least
    ``min_jump`` high (default: 5% of the value range)."""
    sh = sharpen_shocks(front)
    if min_jump is None:
        min_jump = 0.05 * float(np.ptp(sh.u)) if len(sh) else 0.0
    x, u = sh.x, sh.u
    j = np.nonzero((np.diff(x) == 0) & (np.abs(np.diff(u)) >= max(min_jump, 1e-300)))[0]
    return [(float(x[i]), float(u[i]), float(u[i + 1])) for i in j]


def count_shocks(front: ParticleFront, min_jump: float | None = None) -> int:
    return len(shock_jumps(front, min_jump))


class ShockLog:
    """Observer sampling the shock count at ``every`` time units (and at the end)."""

    def __init__(self, every: float, min_jump: float | None = None):
        self.every = float(every)
        self.min_jump = min_jump
        self.entries: list[tuple[float, list[tuple[float, float, float]]]] = []
        self._next = 0.0

    def __call__(self, event, snap) -> None:
        if event.kind in ("advance", "end") and (snap.t >= self._next or event.kind == "end"):
            if np.any(np.diff(snap.x) < 0):
                # overtaken pairs before management; take the next event instead
                return
            # snapshots are read-only; sharpening wants a front
            fr = ParticleFront(snap.x, snap.u, snap.role, snap.flux, 1.0, s=snap.s, F=snap.F)
            self.entries.append((float(snap.t), shock_jumps(fr, self.min_jump)))
            while self._next <= snap.t:
                self._next += self.every

    def counts(self) -> list[tuple[float, int]]:
        return [(t, len(j)) for t, j in self.entries]

    def merged(self) -> tuple[float, float] | None:
        """``(t_two, t_one)``: last sample with two or more shocks followed only
        by samples with exactly one; ``None`` if that never happens."""
        c = self.counts()
        for k in range(len(c) - 1, 0, -1):
            if c[k - 1][1] >= 2 and all(m == 1 for _, m in c[k:]):
                return c[k - 1][0], c[k][0]
        return None

# }}}


# {{{ evaluation

def evaluate(front, samples_per_segment: int = PLOT_SAMPLES) -> Polyline:
    """Sample the interpolant parametrically: ``(x(u_j), u_j)`` at equispaced
    values on each segment. Works on fronts and snapshots."""
    m = max(2, int(samples_per_segment))
    x, u, s = np.asarray(front.x), np.asarray(front.u), np.asarray(front.s)
    n = len(x)
    if n == 1:
        return Polyline(x.copy(), u.copy(), np.zeros(1, dtype=int))
    xs, us, ids = [], [], []
    frac = np.linspace(0.0, 1.0, m)
    for j in range(n - 1):
        u1, u2 = u[j], u[j + 1]
        if u1 == u2 or x[j] == x[j + 1] or s[j] == s[j + 1]:
            xs.append([x[j], x[j + 1]])
            us.append([u1, u2])
            ids.append([j, j])
            continue
        uj = u1 + frac * (u2 - u1)
        uj[0], uj[-1] = u1, u2
        sj = front.flux.df(uj[1:-1])
        xj = np.empty(m)
        xj[0], xj[-1] = x[j], x[j + 1]
        xj[1:-1] = x[j] + (sj - s[j]) / (s[j + 1] - s[j]) * (x[j + 1] - x[j])
        # rounding can break monotonicity by an ulp
        xj = np.clip(np.maximum.accumulate(xj), x[j], x[j + 1])
        xs.append(xj)
        us.append(uj)
        ids.append(np.full(m, j))
    return Polyline(np.concatenate(xs), np.concatenate(us), np.concatenate(ids).astype(int))

# }}}


# {{{ L1 distance

def _right_limit(p: Polyline, a: np.ndarray) -> np.ndarray:
    x, u = p.x, p.u
    idx = np.searchsorted(x, a, side="right") - 1
    out = np.empty(len(a))
    left = idx < 0
    right = idx >= len(x) - 1
    out[left] = u[0]
    out[right] = u[-1]
    mid = ~(left | right)
    k = idx[mid]
    x0, x1, u0, u1 = x[k], x[k + 1], u[k], u[k + 1]
    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.where(x1 > x0, (a[mid] - x0) / np.where(x1 > x0, x1 - x0, 1.0), 0.0)
    out[mid] = u0 + w * (u1 - u0)
    return out


def _left_limit(p: Polyline, b: np.ndarray) -> np.ndarray:
    x, u = p.x, p.u
    idx = np.searchsorted(x, b, side="left")
    out = np.empty(len(b))
    left = idx <= 0
    right = idx >= len(x)
    out[left] = u[0]
    out[right] = u[-1]
    mid = ~(left | right)
    k = idx[mid]
    x0, x1, u0, u1 = x[k - 1], x[k], u[k - 1], u[k]
    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.where(x1 > x0, (b[mid] - x0) / np.where(x1 > x0, x1 - x0, 1.0), 1.0)
    out[mid] = u0 + w * (u1 - u0)
    return out


def _abs_linear_integral(width, d1, d2):
    """Exact integral of ``|d|`` for ``d`` linear from ``d1`` to ``d2``."""
    a1, a2 = np.abs(d1), np.abs(d2)
    same = d1 * d2 >= 0
    with np.errstate(invalid="ignore", divide="ignore"):
        cross = (d1 * d1 + d2 * d2) / np.where(a1 + a2 > 0, 2.0 * (a1 + a2), 1.0)
    return width * np.where(same, 0.5 * (a1 + a2), cross)


def l1_distance(a: Polyline, b: Polyline, window: tuple[float, float] | None = None) -> float:
    """``int |a - b| dx`` on ``window`` (default: the overlap of both ranges).

    Both graphs are piecewise linear, so the integral over each interval of
    the merged breakpoint set is computed exactly; vertical pieces have zero
    width. Outside its range a polyline extends as a constant.
    """
    if window is None:
        lo, hi = max(a.x[0], b.x[0]), min(a.x[-1], b.x[-1])
        if not hi >= lo:
            raise ValueError("polylines have disjoint x-ranges")
    else:
        lo, hi = window
    if hi == lo:
        return 0.0
    pts = np.concatenate([a.x, b.x, [lo, hi]])
    pts = np.unique(pts[(pts >= lo) & (pts <= hi)])
    x0, x1 = pts[:-1], pts[1:]
    d1 = _right_limit(a, x0) - _right_limit(b, x0)
    d2 = _left_limit(a, x1) - _left_limit(b, x1)
    return float(np.sum(_abs_linear_integral(x1 - x0, d1, d2)))


def kruzkov_entropy(p: Polyline, k: float, window: tuple[float, float] | None = None) -> float:
    """``int |u - k| dx`` over the polyline's range (or ``window``)."""
    lo, hi = window if window is not None else (p.x[0], p.x[-1])
    const = Polyline(np.array([lo, hi]), np.array([k, k], dtype=float))
    return l1_distance(p, const, (lo, hi))

# }}}


# {{{ CSV

def polyline_csv(p: Polyline) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "u", "segment_id", "is_jump"])
    seg = p.segment_id if p.segment_id is not None else np.zeros(len(p.x), dtype=int)
    for xi, ui, si, ji in zip(p.x, p.u, seg, p.is_jump):
        w.writerow([repr(float(xi)), repr(float(ui)), int(si), int(ji)])
    return buf.getvalue()


def write_polyline_csv(path: str | os.PathLike, p: Polyline) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(polyline_csv(p))


def read_polyline_csv(path: str | os.PathLike) -> Polyline:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return Polyline(np.array([float(r["x"]) for r in rows]), np.array([float(r["u"]) for r in rows]),
            np.array([int(r["segment_id"]) for r in rows]))

# }}}
