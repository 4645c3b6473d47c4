"""Particle management at a fixed time.

Insertion refines rarefactions, merging replaces a colliding pair by one
shock particle. Both choose the new value so that the area under the
interpolant is unchanged. Collisions involving an inflection particle use the
three window strategies of :func:`merge_at_inflection`.

Every operation works on the cached speeds and Lagrangian fluxes of the
front; flux evaluations happen only for new values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from raretrack.flux import FluxModel
from raretrack.front import ParticleFront, Pt, SolverError, make_pt, pair_average, snap_groups
from raretrack.wave import EPS_ABS, EPS_REL, NEAR_RTOL, Particle, Role

NEWTON_MAXITER = 50
RESIDUAL_RTOL = 1e-12
#: each retry halves the distance to the failing neighbour, so about 52
#: retries exhaust the precision of any window
ENTROPY_FIX_RETRIES = 60
#: stacked jumps below this (relative) change the interpolant by less than
#: any tolerance downstream, so their merge skips the entropy repair
NEGLIGIBLE_JUMP = 1e-12

Emit = Callable[..., None] | None


class ManagementError(SolverError):
    pass


# {{{ area equations

@dataclass(frozen=True)
class SolveResult:
    value: float
    iterations: int
    method: str
    residual: float


@dataclass(frozen=True)
class AreaEquation:
    """``sum_j w_j a(c_j, v) = target`` for the unknown value ``v``.

    Each term is a width and an anchor point with cached speed and flux.
    """

    flux: FluxModel
    terms: tuple[tuple[float, Pt], ...]
    target: float

    def scale(self, lo: float, hi: float) -> float:
        umax = max(abs(lo), abs(hi))
        return sum(abs(w) * (abs(p.u) + umax) for w, p in self.terms) + abs(self.target) + 1e-300

    def _eval(self, v: float, sv: float, Fv: float) -> tuple[float, list]:
        r = -self.target
        parts = []
        quad = self.flux.quadratic
        for w, p in self.terms:
            ds = sv - p.s
            if (quad or v == p.u or abs(ds) < EPS_REL * (abs(sv) + abs(p.s)) + EPS_ABS
                    or abs(v - p.u) <= NEAR_RTOL * (abs(v) + abs(p.u))):
                a = 0.5 * (v + p.u)
                parts.append((w, None, a))
            else:
                a = (Fv - p.F) / ds
                parts.append((w, ds, a))
            r += w * a
        return r, parts

    def residual(self, v: float) -> float:
        sv = float(self.flux.df(v))
        return self._eval(v, sv, sv * v - float(self.flux.f(v)))[0]

    def residual_and_slope(self, v: float) -> tuple[float, float]:
        sv = float(self.flux.df(v))
        fv = float(self.flux.f(v))
        r, parts = self._eval(v, sv, sv * v - fv)
        d2 = float(self.flux.ddf(v))
        slope = 0.0
        for w, ds, a in parts:
            slope += w * (0.5 if ds is None else d2 * (v - a) / ds)
        return r, slope


def solve_u(eq: AreaEquation, lo: float, hi: float, guess: float | None = None) -> SolveResult:
    """Root of an area equation on ``[lo, hi]``.

    Quadratic fluxes have arithmetic averages and are solved in closed form.
    Otherwise Newton from ``guess``, falling back to bisection when an iterate
    leaves the bracket or after ``NEWTON_MAXITER`` steps.
    """
    if lo > hi:
        lo, hi = hi, lo
    tol = RESIDUAL_RTOL * eq.scale(lo, hi)
    slack = 1e-12 * (abs(hi - lo) + abs(hi) + abs(lo))
    if eq.flux.quadratic:
        wsum = sum(w for w, _ in eq.terms)
        if wsum == 0:
            raise ManagementError("degenerate area equation: zero total width")
        v = (2.0 * eq.target - sum(w * p.u for w, p in eq.terms)) / wsum
        if not lo - slack <= v <= hi + slack:
            raise ManagementError(f"closed-form root {v} outside bracket [{lo}, {hi}]",
                    {"lo": lo, "hi": hi, "value": v})
        return SolveResult(min(max(v, lo), hi), 0, "closed_form", 0.0)

    v = 0.5 * (lo + hi) if guess is None else min(max(guess, lo), hi)
    for it in range(NEWTON_MAXITER):
        r, dr = eq.residual_and_slope(v)
        if abs(r) <= tol:
            # one more step: a flat residual leaves the value short of the
            # precision the residual suggests
            if r != 0.0 and dr != 0.0 and math.isfinite(dr):
                pv = v - r / dr
                if lo <= pv <= hi:
                    pr = eq.residual(pv)
                    if abs(pr) <= abs(r):
                        return SolveResult(pv, it + 1, "newton", pr)
            return SolveResult(v, it, "newton", r)
        if dr == 0.0 or not math.isfinite(dr):
            break
        nv = v - r / dr
        if not (lo <= nv <= hi) or not math.isfinite(nv):
            break
        if nv == v:
            return SolveResult(v, it + 1, "newton", r)
        v = nv
    return _bisect(eq, lo, hi, tol)


def _bisect(eq: AreaEquation, lo: float, hi: float, tol: float) -> SolveResult:
    rlo, rhi = eq.residual(lo), eq.residual(hi)
    if abs(rlo) <= tol:
        return SolveResult(lo, 0, "bisection", rlo)
    if abs(rhi) <= tol:
        return SolveResult(hi, 0, "bisection", rhi)
    if rlo * rhi > 0:
        raise ManagementError(f"no sign change of the area residual over [{lo}, {hi}]",
                {"lo": lo, "hi": hi, "r_lo": rlo, "r_hi": rhi})
    it = 0
    while True:
        it += 1
        m = 0.5 * (lo + hi)
        rm = eq.residual(m)
        if abs(rm) <= tol or m in (lo, hi) or it > 200:
            return SolveResult(m, it, "bisection", rm)
        if (rm < 0) == (rlo < 0):
            lo, rlo = m, rm
        else:
            hi, rhi = m, rm

# }}}


# {{{ insertion

def _emit(emit: Emit, kind: str, **info) -> None:
    if emit is not None:
        emit(kind, **info)


def split_value(flux: FluxModel, p: Pt, q: Pt, xm: float) -> Pt:
    """The point at ``xm`` between ``p`` and ``q`` preserving the segment area."""
    if p.u == q.u:
        return Pt(xm, p.u, p.s, p.F, int(Role.REGULAR), -1)
    area = (q.x - p.x) * pair_average(p, q, flux.quadratic)
    eq = AreaEquation(flux, ((xm - p.x, p), (q.x - xm, q)), area)
    res = solve_u(eq, p.u, q.u, 0.5 * (p.u + q.u))
    return make_pt(flux, xm, res.value)


def insert(front: ParticleFront, i: int, emit: Emit = None) -> Particle:
    """Insert a particle at the midpoint of gap ``i`` (between ``i`` and ``i+1``)."""
    return _insert_between(front, i, emit)


def fill_gaps(front: ParticleFront, emit: Emit = None) -> int:
    """Refine every departing pair wider than ``d_max`` by repeated midpoint
    insertion, so that refined spacings end up in ``[d_max/2, d_max]``."""
    gap = np.diff(front.x)
    cand = np.nonzero((gap > front.d_max) & (front.s[:-1] < front.s[1:]))[0]
    count = 0
    for j in cand[::-1]:
        stack = [int(j)]
        while stack:
            m = stack.pop()
            if front.x[m + 1] - front.x[m] > front.d_max and front.s[m] < front.s[m + 1]:
                insert(front, m, emit)
                count += 1
                # right half first so the left index stays valid
                stack.append(m)
                stack.append(m + 1)
    return count

# }}}


# {{{ boundaries

def extend(front: ParticleFront, side: str, emit: Emit = None) -> None:
    """Materialize the constant extension beyond an end as a real particle."""
    if side == "left":
        p = front.pt(0)
        new = Pt(p.x - front.d_max, p.u, p.s, p.F, int(Role.REGULAR), -1)
        front.replace_range(0, 0, [new])
    else:
        p = front.pt(len(front) - 1)
        new = Pt(p.x + front.d_max, p.u, p.s, p.F, int(Role.REGULAR), -1)
        front.replace_range(len(front), len(front), [new])
    front.ledger += front.d_max * p.u
    _emit(emit, "extend", side=side)


def cover_domain(front: ParticleFront, emit: Emit = None) -> int:
    """Extend the ends until the front spans ``front.cover`` again."""
    if front.cover is None or not len(front):
        return 0
    lo, hi = front.cover
    count = 0
    while front.x[0] > lo:
        extend(front, "left", emit)
        count += 1
    while front.x[-1] < hi:
        extend(front, "right", emit)
        count += 1
    return count


def _ensure_span(front: ParticleFront, lo: int, hi: int, emit: Emit) -> int:
    """Make indices ``lo..hi`` exist; returns the shift applied to indices."""
    shift = 0
    while lo + shift < 0:
        extend(front, "left", emit)
        shift += 1
    while hi + shift >= len(front):
        extend(front, "right", emit)
    return shift

# }}}


# {{{ merging

@dataclass(frozen=True)
class MergeContext:
    p1: Pt
    p2: Pt
    p3: Pt
    p4: Pt
    flux: FluxModel

    @property
    def particles(self) -> tuple[Particle, ...]:
        return tuple(p.as_particle() for p in (self.p1, self.p2, self.p3, self.p4))

    def area(self) -> float:
        p1, p2, p3, p4 = self.p1, self.p2, self.p3, self.p4
        q = self.flux.quadratic
        return ((p2.x - p1.x) * pair_average(p1, p2, q) + (p3.x - p2.x) * pair_average(p2, p3, q)
                + (p4.x - p3.x) * pair_average(p3, p4, q))

    def dump(self) -> dict:
        return {"ctx": [(p.x, p.u) for p in (self.p1, self.p2, self.p3, self.p4)]}


def context(flux: FluxModel, particles: Sequence[Particle]) -> MergeContext:
    """A merge context from four plain particles (evaluates the flux)."""
    pts = [make_pt(flux, p.x, p.u, int(p.role)) for p in particles]
    return MergeContext(*pts, flux=flux)


def merge_context(front: ParticleFront, i: int, emit: Emit = None) -> tuple[MergeContext, int]:
    """Context for the pair ``(i, i+1)``; returns it with the (possibly shifted) ``i``."""
    i += _ensure_span(front, i - 1, i + 2, emit)
    return MergeContext(front.pt(i - 1), front.pt(i), front.pt(i + 1), front.pt(i + 2),
            front.flux), i


def merge_value(ctx: MergeContext, x23: float | None = None) -> float:
    """Value at ``x23`` replacing particles 2 and 3 with the window area kept."""
    p1, p2, p3, p4 = ctx.p1, ctx.p2, ctx.p3, ctx.p4
    if x23 is None:
        x23 = 0.5 * (p2.x + p3.x)
    eq = AreaEquation(ctx.flux, ((x23 - p1.x, p1), (p4.x - x23, p4)), ctx.area())
    guess = 0.5 * (p2.u + p3.u)
    try:
        return solve_u(eq, p2.u, p3.u, guess).value
    except ManagementError as exc:
        if p2.x == p3.x:
            exc.dump.update(ctx.dump())
            raise
    # pairs merged before meeting (d_min, overtaking under sources) may need
    # the full window range
    us = [p.u for p in (p1, p2, p3, p4)]
    try:
        return solve_u(eq, min(us), max(us), guess).value
    except ManagementError as exc:
        exc.dump.update(ctx.dump())
        raise


def positional_merge(ctx: MergeContext) -> tuple[float, float]:
    """Fallback for a pair merged before meeting: keep the value of one of
    the two particles and place it so that the window area is kept."""
    p1, p4 = ctx.p1, ctx.p4
    q = ctx.flux.quadratic
    mid = 0.5 * (ctx.p2.x + ctx.p3.x)
    best = None
    for p in (ctx.p2, ctx.p3):
        a1, a4 = pair_average(p1, p, q), pair_average(p, p4, q)
        if a1 == a4:
            continue
        x = (ctx.area() - p4.x * a4 + p1.x * a1) / (a1 - a4)
        if p1.x <= x <= p4.x and (best is None or abs(x - mid) < abs(best[0] - mid)):
            best = (x, p.u)
    if best is None:
        raise ManagementError("no area-preserving merge for a separated pair", ctx.dump())
    return best


def _orientation(ctx: MergeContext) -> int:
    """+1 where f is convex on the pair's interval, -1 where concave."""
    du, ds = ctx.p2.u - ctx.p3.u, ctx.p2.s - ctx.p3.s
    if du * ds != 0:
        return 1 if du * ds > 0 else -1
    return 1 if float(ctx.flux.ddf(0.5 * (ctx.p2.u + ctx.p3.u))) >= 0 else -1


def entropy_failures(ctx: MergeContext, u23: float, x23: float | None = None,
        x_tol: float = 0.0) -> tuple[bool, bool]:
    """(left fails, right fails) for the merge sign condition; misses at the
    rounding level of the merge solve do not count, and neither does a side
    whose segment after the merge is no wider than ``x_tol``."""
    u1, u4 = ctx.p1.u, ctx.p4.u
    if x23 is None:
        x23 = 0.5 * (ctx.p2.x + ctx.p3.x)
    tol = NEGLIGIBLE_JUMP * max(1.0, abs(u1), abs(u23), abs(u4))
    if _orientation(ctx) > 0:
        left, right = not u1 >= u23 - tol, not u23 >= u4 - tol
    else:
        left, right = not u1 <= u23 + tol, not u23 <= u4 + tol
    return left and x23 - ctx.p1.x > x_tol, right and ctx.p4.x - x23 > x_tol


def entropy_check(ctx: MergeContext, u23: float) -> bool:
    left, right = entropy_failures(ctx, u23)
    return not (left or right)


def merge(front: ParticleFront, i: int, emit: Emit = None, fix: bool = True,
        strict: bool = True) -> Particle:
    """Replace the pair ``(i, i+1)`` by one shock particle.

    A candidate failing the entropy sign condition is rejected; the failing
    side gets a particle half-way towards its neighbour and the merge is
    retried with the nearer neighbour. When the retries run out this raises,
    unless ``strict`` is off: then the last candidate is kept and an
    ``entropy_violation`` event is emitted.
    """
    for attempt in range(ENTROPY_FIX_RETRIES + 1):
        ctx, i = merge_context(front, i, emit)
        x23 = 0.5 * (ctx.p2.x + ctx.p3.x)
        try:
            v = merge_value(ctx, x23)
        except ManagementError:
            if ctx.p2.x == ctx.p3.x:
                raise
            x23, v = positional_merge(ctx)
        left, right = entropy_failures(ctx, v, x23, front.x_tol)
        if abs(ctx.p2.u - ctx.p3.u) <= NEGLIGIBLE_JUMP * max(1.0, abs(ctx.p2.u), abs(ctx.p3.u)):
            left = right = False
        if (left or right) and fix and attempt == ENTROPY_FIX_RETRIES and not strict:
            _emit(emit, "entropy_violation", index=i, left=left, right=right)
            left = right = False
        if not (left or right) or not fix:
            new = make_pt(front.flux, x23, v, int(Role.SHOCK))
            front.replace_range(i, i + 2, [new])
            _emit(emit, "merge", index=i, retries=attempt)
            return new.as_particle()
        if attempt == ENTROPY_FIX_RETRIES:
            break
        if right:
            _insert_between(front, i + 1, emit)
        if left:
            _insert_between(front, i - 1, emit)
            i += 1
        _emit(emit, "entropy_fix", index=i, left=left, right=right)
    raise ManagementError("entropy fix did not succeed within the retry cap", ctx.dump())


def _insert_between(front: ParticleFront, j: int, emit: Emit) -> Particle:
    p, q = front.pt(j), front.pt(j + 1)
    new = split_value(front.flux, p, q, 0.5 * (p.x + q.x))
    front.replace_range(j + 1, j + 1, [new])
    _emit(emit, "insert", index=j + 1)
    return new.as_particle()


def entropy_fix(front: ParticleFront, i: int, emit: Emit = None) -> Particle:
    """Merge pair ``i`` with a-posteriori entropy repair (alias of :func:`merge`)."""
    return merge(front, i, emit, fix=True)

# }}}


# {{{ inflection windows

def _is_inflection(front: ParticleFront, j: int) -> bool:
    return int(front.role[j]) == Role.INFLECTION or front.flux.is_inflection(float(front.u[j]))


def merge_at_inflection(front: ParticleFront, i: int, emit: Emit = None) -> int:
    """Resolve the collision of pair ``(i, i+1)`` where one particle sits at
    the inflection value. Returns the strategy applied (1, 2 or 3).

    The window is mapped to ``y = -x`` when the partner is right of the
    inflection particle, so that the partner always approaches from the
    left; areas are invariant under this reflection.
    """
    if _is_inflection(front, i + 1):
        k, d = i + 1, 1
    elif _is_inflection(front, i):
        k, d = i, -1
    else:
        raise ManagementError("no inflection particle in the pair", {"index": i})
    idx = [k - 2 * d, k - d, k, k + d, k + 2 * d]
    shift = _ensure_span(front, min(idx), max(idx), emit)
    k += shift
    idx = [j + shift for j in idx]
    p1, p2, p3, p4, p5 = (front.pt(j) for j in idx)
    y = [d * p.x for p in (p1, p2, p3, p4, p5)]
    y1, y2, y3, y4, y5 = y
    quad = front.flux.quadratic
    a12, a23, a34, a45 = (pair_average(a, b, quad) for a, b in ((p1, p2), (p2, p3), (p3, p4), (p4, p5)))
    a13 = pair_average(p1, p3, quad)
    A4 = (y2 - y1) * a12 + (y3 - y2) * a23 + (y4 - y3) * a34
    A5 = A4 + (y5 - y4) * a45

    window: list[Pt] | None = None
    strategy = 0
    # 1: drop p2, slide the inflection particle
    if a13 != a34:
        xi = (A4 - y4 * a34 + y1 * a13) / (a13 - a34)
        if y1 <= xi <= y4:
            window, strategy = [p1, p3.moved(d * xi), p4, p5], 1
    # 2: drop p2, slide the inflection particle stacked with p4
    if window is None and a13 != a45:
        eta = (A5 - y5 * a45 + y1 * a13) / (a13 - a45)
        if y1 <= eta < y5:
            window, strategy = [p1, p3.moved(d * eta), p4.moved(d * eta), p5], 2
    # 3: drop p4, move the inflection particle onto p5 and lower p2
    if window is None:
        ustar = p3.u
        far = p1.u if abs(p1.u - ustar) > abs(p2.u - ustar) else p2.u
        eq = AreaEquation(front.flux, ((y2 - y1, p1), (y5 - y2, p3)), A5)
        brackets = [(far, ustar)]
        lo_d, hi_d = front.flux.domain
        bound = lo_d if p2.u < ustar else hi_d
        if math.isfinite(bound):
            brackets.append((bound, ustar))
        for lo, hi in brackets:
            try:
                v = solve_u(eq, lo, hi, p2.u).value
            except ManagementError:
                continue
            new2 = make_pt(front.flux, p2.x, v, int(Role.SHOCK))
            window, strategy = [p1, new2, p3.moved(p5.x), p5], 3
            break
    if window is None:
        raise ManagementError("no inflection merging strategy applies",
                {"window": [(p.x, p.u) for p in (p1, p2, p3, p4, p5)], "strategy": None})
    lo, hi = min(idx), max(idx) + 1
    if d < 0:
        window = window[::-1]
    front.replace_range(lo, hi, window)
    _emit(emit, "merge_inflection", index=k, strategy=strategy)
    return strategy

# }}}


# {{{ stacked particles and the management pass

def dedupe_stacked(front: ParticleFront, emit: Emit = None) -> int:
    """In every stack of three or more particles at one position keep only the
    first and last (plus any inflection particle, which keeps the neighbouring
    intervals inflection-free). The outer two carry the states of the
    neighbouring segments, so the area is unchanged; in a monotone stack they
    are the smallest and largest value. Exact duplicates are collapsed in
    stacks of two as well."""
    x = front.x
    if len(x) < 2:
        return 0
    same = x[1:] == x[:-1]
    if not np.any(same):
        return 0
    removed = 0
    dup = np.nonzero(same & (front.u[1:] == front.u[:-1]))[0]
    for j in dup[::-1]:
        # keep the copy with a special role, if any
        k = j + 1 if int(front.role[j]) == Role.REGULAR else j
        front.replace_range(k, k + 1, [])
        removed += 1
        _emit(emit, "dedupe", index=int(j), removed=1)
    i = 0
    while i < len(front):
        j = i
        while j + 1 < len(front) and front.x[j + 1] == front.x[i]:
            j += 1
        if j - i >= 2:
            keep = {0, j - i}
            keep |= {m for m in range(j - i + 1) if _is_inflection(front, i + m)}
            pts = [front.pt(i + m) for m in sorted(keep)]
            front.replace_range(i, j + 1, pts)
            removed += (j - i + 1) - len(pts)
            _emit(emit, "dedupe", index=i, removed=(j - i + 1) - len(pts))
            i += len(pts)
        else:
            i = j + 1
    return removed


def _collisions(front: ParticleFront) -> np.ndarray:
    """Indices of stacked compressive or overtaken pairs."""
    gap = np.diff(front.x)
    comp = front.s[:-1] > front.s[1:]
    return np.nonzero((comp & (gap <= front.x_tol)) | (gap < -front.x_tol))[0]


def _dmin_pairs_touch(front: ParticleFront, ids: set[int]) -> bool:
    """Whether a compressive pair closer than ``d_min`` contains one of ``ids``."""
    if not ids:
        return False
    comp = (front.s[:-1] > front.s[1:]) & (np.diff(front.x) <= front.d_min)
    mine = np.isin(front.ids, list(ids))
    return bool(np.any(comp & (mine[:-1] | mine[1:])))


def _pairs_to_merge(front: ParticleFront) -> np.ndarray:
    """Indices of pairs due for merging: stacked or overtaken pairs first,
    then compressive pairs closer than ``d_min``."""
    hits = _collisions(front)
    if len(hits) or front.d_min <= 0:
        return hits
    comp = front.s[:-1] > front.s[1:]
    return np.nonzero(comp & (np.diff(front.x) <= front.d_min))[0]


def _snap_near(front: ParticleFront) -> None:
    """Put particles closer than ``x_tol`` at one position; without this the
    entropy repair would keep refining inside a sub-tolerance gap."""
    gap = np.diff(front.x)
    close = gap <= front.x_tol
    if not np.any(close & (gap > 0)):
        return
    # only groups with a positive gap move; exact stacks stay bit-identical
    mask = np.zeros_like(close)
    i, n = 0, len(close)
    while i < n:
        if not close[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and close[j + 1]:
            j += 1
        if np.any(gap[i:j + 1] > 0):
            mask[i:j + 1] = True
        i = j + 1
    snap_groups(front, mask)


def manage(front: ParticleFront, emit: Emit = None, entropy_fix: bool = True,
        strict: bool = True) -> None:
    """Dedupe stacks, refine wide rarefactions, then merge colliding pairs
    left to right until none remain. ``strict`` is passed on to ``merge``."""
    cover_domain(front, emit)
    _snap_near(front)
    dedupe_stacked(front, emit)
    fill_gaps(front, emit)
    # entropy repairs insert particles, so the budget follows the front size
    deferred: set[tuple[int, int]] = set()
    steps = 0
    while steps <= 10 * len(front) + 100:
        steps += 1
        hits = [int(j) for j in _pairs_to_merge(front)
                if (int(front.ids[j]), int(front.ids[j + 1])) not in deferred]
        if not hits:
            return
        i = hits[0]
        if _is_inflection(front, i) or _is_inflection(front, i + 1):
            merge_at_inflection(front, i, emit)
        else:
            w = front.flux.inflection_between(float(front.u[i]), float(front.u[i + 1]))
            if w is not None:
                raise ManagementError("colliding pair brackets an inflection value without an "
                        "inflection particle", {"index": i, "u": (front.u[i], front.u[i + 1])})
            if front.x[i + 1] - front.x[i] <= front.x_tol:
                merge(front, i, emit, fix=entropy_fix, strict=strict)
                continue
            # a pair merged before meeting has no guaranteed area-preserving
            # merge, its merged particle may overtake an entropy repair
            # insertion, and a repair inside d_min starts the same merge over;
            # such a pair is left until it meets or separates
            trial = front.copy()
            added: set[int] = set()

            def note_insert(kind, index=None, **info):
                if kind == "insert":
                    added.add(int(trial.ids[index]))

            try:
                merge(trial, i, note_insert, fix=entropy_fix, strict=strict)
                clean = len(_collisions(trial)) == 0 and not _dmin_pairs_touch(trial, added)
            except ManagementError:
                clean = False
            if not clean:
                deferred.add((int(front.ids[i]), int(front.ids[i + 1])))
                _emit(emit, "merge_deferred", index=i)
                continue
            merge(front, i, emit, fix=entropy_fix, strict=strict)
        dedupe_stacked(front, emit)
    raise ManagementError("management pass did not terminate", {"particles": len(front)})

# }}}
