import math

import numpy as np
import pytest

from raretrack.front import ParticleFront, RunDiagnostics, advance, next_event, run, total_area
from raretrack.sampling import InitialCondition, sample
from raretrack.sources import (RecoveryRecorder, SourceError, advance_with_source, bottom_slope,
        make_source, next_event_source, rk4_characteristics, rk4_error_estimate)


def front(flux, pts, d_max=1.0, **kw):
    x, u = zip(*pts)
    return ParticleFront(x, u, None, flux, d_max, **kw)


def test_zero_source_matches_advance(quartic):
    f = front(quartic, [(0, 1), (1, 0.3), (2, -0.4)])
    a = advance(f, 0.2)
    b = advance_with_source(f, make_source("zero"), 0.2)
    np.testing.assert_allclose(a.x, b.x, atol=1e-15)
    np.testing.assert_array_equal(a.u, b.u)


def test_damping_rk4_order(burgers):
    src = make_source({"id": "linear_damping", "params": {"rate": 1.0}})
    x0, u0, T = 0.3, 0.8, 1.0
    exact_u = u0 * math.exp(-T)
    exact_x = x0 + u0 * (1 - math.exp(-T))
    errs = []
    for h in (0.2, 0.1, 0.05):
        x, u = rk4_characteristics(burgers, src, np.array([x0]), np.array([u0]), T, h)
        errs.append(max(abs(x[0] - exact_x), abs(u[0] - exact_u)))
    r = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((r > 13) & (r < 19))


def test_advance_with_source_updates_cache(burgers):
    src = make_source({"id": "linear_damping", "params": {"rate": 0.5}})
    f = advance_with_source(front(burgers, [(0, 1.0), (1, 0.5)]), src, 0.4)
    np.testing.assert_allclose(f.s, burgers.df(f.u))
    assert f.t == 0.4


def test_bottom_slope_edges():
    assert bottom_slope(4.5) == pytest.approx(-math.pi * math.sin(4.5 * math.pi))
    assert bottom_slope(4.4) == 0.0 and bottom_slope(5.6) == 0.0
    # b' integrates to zero over the support, so values recover downstream
    x = np.linspace(4.5, 5.5, 100001)
    assert abs(np.trapezoid(bottom_slope(x), x)) < 1e-9


def test_bottom_profile_recovery(burgers):
    """A particle passing over the bump comes out with its inflow value up
    to the step-doubling error estimate of the RK4 steps it took."""
    src = make_source("bottom_profile")
    # u = u_in + b(x) - b(4.5) along a characteristic, so u_in must exceed 1
    f = front(burgers, [(3.0, 1.5), (3.5, 1.5), (4.0, 1.5)], d_max=0.5)
    rec = RecoveryRecorder(burgers, src, 4.5, 5.5)
    out = run(f, 3.0, rec, source=src)
    cx = rec.crossings()
    assert len(cx) == 3
    for _, ub, ua, est in cx:
        assert ub == 1.5
        assert abs(ua - ub) <= 10 * est
    inside = run(f, 1.7, source=src)
    assert np.any(inside.u != 1.5)
    assert np.all(out.x > 5.5)


def test_rk4_error_estimate(burgers):
    src = make_source({"id": "linear_damping"})
    u1, est = rk4_error_estimate(burgers, src, np.array([0.0]), np.array([1.0]), 1.0, 0.25)
    assert abs(u1[0] - math.exp(-1)) <= 20 * est[0]
    assert est[0] > 0


def test_next_event_source(burgers):
    f = front(burgers, [(0, 1), (1, 0)])
    assert next_event_source(f, dt_cap=math.inf) == next_event(f) == 1.0
    assert next_event_source(f, dt_cap=0.01) == 0.01


def test_stiff_overtaking_is_merged(burgers):
    # a strong damping brakes the leading particle faster than the
    # frozen-speed prediction assumes
    src = make_source({"id": "linear_damping", "params": {"rate": 50.0}})
    f = front(burgers, [(0, 1.0), (0.05, 4.0), (0.06, 0.0)], d_max=0.5, d_min=0.005)
    log = []
    out = run(f, 0.2, lambda e, s: log.append(e.kind), source=src, dt_cap=0.05)
    assert np.all(np.diff(out.x) >= 0)
    assert "merge" in log


def test_zero_source_run_equivalent(quartic):
    ic = InitialCondition.from_spec({"pieces": [{"interval": [-3, 3], "function": {"id": "gaussian_cosine"}}]})
    kinds_a, kinds_b = [], []
    a = run(sample(ic, quartic, 60), 2.0, lambda e, s: kinds_a.append(e.kind))
    b = run(sample(ic, quartic, 60), 2.0, lambda e, s: kinds_b.append(e.kind),
            source=make_source("zero"), dt_cap=math.inf)
    assert [k for k in kinds_a] == [k for k in kinds_b]
    np.testing.assert_allclose(a.x, b.x, atol=1e-12)
    np.testing.assert_allclose(a.u, b.u, atol=1e-12)


def test_source_mode_management_conserves(burgers):
    src = make_source("bottom_profile")
    ic = InitialCondition.from_spec({"pieces": [
        {"interval": [0, 1], "function": {"id": "constant", "params": {"value": 1.0}}},
        {"interval": [1, 10], "function": {"id": "constant", "params": {"value": 0.0}}}]})
    f = sample(ic, burgers, 100, d_min=0.001)
    diag = RunDiagnostics.for_front(f)
    out = run(f, 6.0, diag, source=src)
    assert diag.max_event_drift(("insert", "merge", "entropy_fix", "dedupe", "extend")) <= 1e-10
    assert abs(total_area(out) - out.ledger) <= 1e-9 * abs(out.ledger)


def test_unknown_source():
    with pytest.raises(SourceError):
        make_source("volcano")
