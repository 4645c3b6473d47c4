"""Randomized invariants of the particle method."""
import math

import numpy as np
from hypothesis import HealthCheck, assume, given, note, settings, strategies as st

from raretrack import management as M
from raretrack.flux import make_flux
from raretrack.front import (EntropyLevels, ParticleFront, RunDiagnostics, advance,
        kruzkov_entropies, next_event, run, total_area, total_variation)
from raretrack.sampling import InitialCondition, sample
from raretrack.wave import Particle, WaveSegment, interpolate

FLUXES = {
    "burgers": make_flux("burgers"),
    "quartic": make_flux("quartic"),
    "bl": make_flux("buckley_leverett", mobility_ratio=0.5),
}
U_STAR = FLUXES["bl"].inflections[0]
AREA_RTOL = 1e-10
TV_SLACK = 1e-12
ENTROPY_SLACK = 1e-10

coord = st.floats(-5, 5, allow_nan=False, allow_infinity=False)
width = st.floats(1e-3, 3, allow_nan=False, allow_infinity=False)


def value_range(fid, side):
    """Values of one convexity region, so that no pair brackets u*."""
    if fid != "bl":
        return -1.5, 1.5
    return (0.0, U_STAR) if side == 0 else (U_STAR, 1.0)


def describe(front):
    note(f"flux={front.flux.id} d_max={front.d_max!r} d_min={front.d_min!r}\n"
            f"x={front.x.tolist()!r}\nu={front.u.tolist()!r}\nrole={front.role.tolist()!r}")


def normal(v):
    # below this the quartic flux u^4/4 is subnormal and carries no digits
    return 0.0 if abs(v) < 1e-30 else v


@st.composite
def values(draw, fid, count):
    lo, hi = value_range(fid, draw(st.integers(0, 1)))
    return [normal(draw(st.floats(lo, hi, allow_nan=False))) for _ in range(count)]


def area_tol(*areas_and_widths):
    return AREA_RTOL * max(1.0, *map(abs, areas_and_widths))


# {{{ refinement identity

@st.composite
def segments(draw):
    fid = draw(st.sampled_from(sorted(FLUXES)))
    u1, u2 = draw(values(fid, 2))
    x1 = draw(coord)
    return fid, x1, x1 + draw(width), u1, u2


@settings(max_examples=1000)
@given(segments())
def test_refinement_identity(case):
    fid, x1, x2, u1, u2 = case
    flux = FLUXES[fid]
    f = ParticleFront([x1, x2], [u1, u2], None, flux, 10.0)
    a0 = total_area(f)
    new = M.insert(f, 0)
    assert abs(total_area(f) - a0) <= area_tol(a0, x2 - x1)
    assert min(u1, u2) <= new.u <= max(u1, u2)
    if u1 == u2 or flux.df(u1) == flux.df(u2):
        assert new.u == u1 or flux.df(u1) == flux.df(u2)
        return
    orig = WaveSegment(Particle(x1, u1), Particle(x2, u2), flux)
    left = WaveSegment(Particle(x1, u1), Particle(new.x, new.u), flux)
    right = WaveSegment(Particle(new.x, new.u), Particle(x2, u2), flux)
    # relative to the value range, plus an absolute floor for segments whose
    # speeds differ by less than the degeneracy threshold of the averages
    tol = 1e-9 * abs(u2 - u1) + 1e-14 * max(1.0, abs(u1), abs(u2))
    for xv in np.linspace(x1, x2, 17):
        want = value_at(orig, xv)
        got = value_at(left if xv <= new.x else right, xv)
        assert abs(got - want) <= tol, (xv, got, want)


def value_at(seg, xv):
    """u(x) on a segment by bisection on the monotone x(u)."""
    a, b = seg.left.u, seg.right.u
    if a == b or xv <= seg.left.x:
        return a
    if xv >= seg.right.x:
        return b
    for _ in range(200):
        m = 0.5 * (a + b)
        if m in (a, b):
            break
        if interpolate(seg, m) < xv:
            a = m
        else:
            b = m
    return 0.5 * (a + b)

# }}}


# {{{ merge robustness

@st.composite
def compressive_contexts(draw):
    fid = draw(st.sampled_from(sorted(FLUXES)))
    flux = FLUXES[fid]
    u1, u2, u3, u4 = draw(values(fid, 4))
    assume(flux.df(u2) > flux.df(u3))
    x2 = draw(coord)
    stacked = draw(st.booleans())
    x3 = x2 if stacked else x2 + draw(st.floats(0, 1e-3))
    return fid, [(x2 - draw(width), u1), (x2, u2), (x3, u3), (x3 + draw(width), u4)]


@settings(max_examples=1000, suppress_health_check=[HealthCheck.filter_too_much])
@given(compressive_contexts())
def test_merge_robustness(case):
    fid, pts = case
    flux = FLUXES[fid]
    x, u = zip(*pts)
    gap = x[2] - x[1]
    # a separated pair is due only through d_min
    f = ParticleFront(x, u, None, flux, 100.0, d_min=1.5 * gap)
    a0, tv0 = total_area(f), total_variation(f)
    c0 = a0 - f.ledger
    levels = EntropyLevels.spanning(flux, min(u), max(u))
    e0 = kruzkov_entropies(f, levels)
    if gap == 0:
        p = M.merge(f, 1)
        assert min(u[1], u[2]) <= p.u <= max(u[1], u[2])
        assert np.all(kruzkov_entropies(f, levels) - e0 <= ENTROPY_SLACK)
    else:
        # entropy repairs may put new pairs within d_min, which merge too;
        # a pair without an area-preserving merge is deferred untouched
        log = []
        M.manage(f, emit=lambda kind, **info: log.append(kind))
        if "merge_deferred" in log and "merge" not in log:
            np.testing.assert_array_equal(f.u, u)
        assert np.all((f.u >= min(u)) & (f.u <= max(u)))
    assert abs(total_area(f) - f.ledger - c0) <= area_tol(a0, f.ledger, x[-1] - x[0])
    assert total_variation(f) <= tv0 + TV_SLACK
    assert np.all(np.diff(f.x) >= 0)

# }}}


# {{{ random fronts

@st.composite
def random_fronts(draw):
    """Sampled piecewise data (jumps included) for any flux, or raw particle
    lists for the fluxes without inflection. Buckley-Leverett data is
    monotone."""
    fid = draw(st.sampled_from(sorted(FLUXES)))
    flux = FLUXES[fid]
    lo_u, hi_u = flux.domain if fid == "bl" else (-1.5, 1.5)
    if fid == "bl" or draw(st.booleans()):
        k = draw(st.integers(1, 5))
        cuts = sorted(draw(st.lists(st.floats(0.05, 0.95), min_size=k - 1, max_size=k - 1, unique=True)))
        breaks = [0.0] + cuts + [1.0]
        assume(all(b - a > 0.02 for a, b in zip(breaks, breaks[1:])))
        vals = [normal(draw(st.floats(lo_u, hi_u))) for _ in range(k)]
        if fid == "bl":
            # interacting inflection points are out of scope: monotone data
            # crosses the inflection value at most once
            vals = sorted(vals, reverse=draw(st.booleans()))
        slopes = [draw(st.floats(-0.5, 0.5)) if fid != "bl" else 0.0 for _ in range(k)]
        pieces = []
        for a, b, v, m in zip(breaks, breaks[1:], vals, slopes):
            pieces.append({"interval": [a, b], "function": {"id": "linear",
                    "params": {"intercept": v - m * a, "slope": m}}})
        ic = InitialCondition.from_spec({"pieces": pieces})
        return sample(ic, flux, draw(st.integers(10, 40)))
    m = draw(st.integers(3, 15))
    x = np.sort(np.array([draw(st.floats(0, 1)) for _ in range(m)]))
    u = np.array([normal(draw(st.floats(lo_u, hi_u))) for _ in range(m)])
    return ParticleFront(x, u, None, flux, draw(st.floats(0.05, 0.3)))


@settings(max_examples=200, suppress_health_check=[HealthCheck.filter_too_much,
        HealthCheck.too_slow])
@given(random_fronts(), st.floats(0.05, 1.0))
def test_random_front_runs(front, t_end):
    describe(front)
    diag = RunDiagnostics.for_front(front)
    out = run(front, t_end, diag)
    assert out.t == t_end
    assert np.all(np.diff(out.x) >= -out.x_tol)
    assert diag.max_tv_increase() <= TV_SLACK
    assert diag.max_event_drift() <= AREA_RTOL
    assert diag.max_entropy_increase() <= ENTROPY_SLACK
    assert abs(total_area(out) - out.ledger) <= 1e-9 * diag.area_scale
    for a, b in zip(out.u, out.u[1:]):
        w = out.flux.inflection_between(a, b)
        assert w is None


@settings(max_examples=200)
@given(random_fronts())
def test_fill_gaps_band(front):
    M.fill_gaps(front)
    gap = np.diff(front.x)
    dep = front.s[:-1] < front.s[1:]
    assert np.all(gap[dep] <= front.d_max * (1 + 1e-12))


@settings(max_examples=200)
@given(segments(), st.integers(1, 6))
def test_fill_gaps_lower_bound(case, k):
    # a single long departing gap refined from scratch stays within the band
    fid, x1, _, u1, u2 = case
    flux = FLUXES[fid]
    assume(flux.df(u1) < flux.df(u2))
    d = 0.1
    f = ParticleFront([x1, x1 + d * (k + 0.37)], [u1, u2], None, flux, d)
    M.fill_gaps(f)
    gap = np.diff(f.x)
    assert np.all(gap >= d / 2 - 1e-12) and np.all(gap <= d + 1e-12)


@settings(max_examples=200)
@given(random_fronts())
def test_area_linear_between_events(front):
    describe(front)
    M.manage(front)
    dt = next_event(front)
    dt = 0.5 if not math.isfinite(dt) else dt
    a = [total_area(advance(front, s * dt)) for s in (0.0, 0.5, 1.0)]
    slope = front.F[-1] - front.F[0]
    tol = 1e-12 * max(1.0, abs(a[0]), abs(slope * dt))
    assert abs((a[1] - a[0]) - 0.5 * dt * slope) <= tol
    assert abs((a[2] - a[1]) - 0.5 * dt * slope) <= tol

# }}}
