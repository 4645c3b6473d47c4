import math

import numpy as np
import pytest

from raretrack.front import (ParticleFront, RunDiagnostics, SolverError, advance, next_event, run,
        total_area, total_variation)
from raretrack.sampling import InitialCondition, sample


def front(flux, pts, d_max=10.0, **kw):
    x, u = zip(*pts)
    return ParticleFront(x, u, None, flux, d_max, **kw)


def test_advance_burgers(burgers):
    f = advance(front(burgers, [(0, 2)]), 0.5)
    assert (f.x[0], f.u[0], f.t) == (1.0, 2.0, 0.5)


def test_advance_zero_is_identity(quartic):
    f0 = front(quartic, [(0, 1), (1, -1), (2, 0.3)])
    f1 = advance(f0, 0.0)
    np.testing.assert_array_equal(f0.x, f1.x)
    np.testing.assert_array_equal(f0.u, f1.u)


def test_advance_quartic(quartic):
    f = advance(front(quartic, [(1, -1)]), 1.0)
    assert f.x[0] == 0.0 and f.u[0] == -1.0


def test_advance_past_collision_fails(burgers):
    with pytest.raises(SolverError):
        advance(front(burgers, [(0, 1), (1, 0)]), 2.0)


def test_next_event(burgers):
    assert next_event(front(burgers, [(0, 1), (1, 0), (3, 2), (4, 3)])) == 1.0
    assert next_event(front(burgers, [(0, 0), (1, 1), (2, 3)])) == math.inf
    assert next_event(front(burgers, [(1, 1), (1, 0)])) == 0.0


def test_total_area(burgers):
    assert total_area(front(burgers, [(0, 0), (2, 1)])) == 1.0
    assert total_area(front(burgers, [(0, 0)])) == 0.0
    assert total_area(front(burgers, [(0, 0), (1, 0.5), (2, 1)])) == 1.0


def test_total_variation(burgers):
    assert total_variation(front(burgers, [(0, 0), (1, 0.3), (2, 1)])) == 1.0
    assert total_variation(front(burgers, [(0, 0.4), (1, 0.4)])) == 0.0
    assert total_variation(front(burgers, [(0, 0), (1, 1), (2, 0)])) == 2.0


def test_area_linear_between_events(burgers):
    f = front(burgers, [(0, 1), (1, 0.2), (2, 0.5), (4, -1)])
    dt = next_event(f)
    a = [total_area(advance(f, s * dt)) for s in (0.0, 0.4, 0.8)]
    assert a[1] - a[0] == pytest.approx(a[2] - a[1], abs=1e-14)
    assert a[1] - a[0] == pytest.approx(0.4 * dt * (f.F[-1] - f.F[0]), abs=1e-14)


def riemann(flux, ul, ur, n=40, d_max=None):
    ic = InitialCondition.piecewise_constant([-1.0, 0.0, 1.0], [ul, ur])
    return sample(ic, flux, n, d_max=d_max)


def test_run_rarefaction_fan(burgers):
    f = run(riemann(burgers, 0.0, 1.0, d_max=0.05), 1.0)
    assert f.t == 1.0
    fan = (f.x > 0) & (f.x < 1)
    assert fan.sum() >= 20
    np.testing.assert_allclose(f.u[fan], f.x[fan], atol=1e-12)
    gaps = np.diff(f.x[(f.x >= 0) & (f.x <= 1)])
    assert gaps.max() <= 0.05 * (1 + 1e-9)


def test_run_constant_data(burgers):
    f0 = front(burgers, [(0, 0.5), (1, 0.5), (2, 0.5)])
    f = run(f0, 3.0)
    assert f.t == 3.0
    np.testing.assert_allclose(f.x - f0.x, 1.5, atol=1e-15)
    np.testing.assert_array_equal(f.u, f0.u)


def test_run_compressive_shock(burgers):
    from raretrack.postprocess import shock_positions, sharpen_shocks
    f = run(front(burgers, [(0, 1), (0, 0)], d_max=1.0), 1.0)
    # one shock particle between the constant states; sharpening turns it
    # back into the stacked pair
    assert list(f.role).count(1) == 1
    s = sharpen_shocks(f)
    jump = np.nonzero(np.diff(s.x) == 0)[0]
    assert len(jump) == 1
    assert s.x[jump[0]] == pytest.approx(0.5, abs=1e-15)
    assert (s.u[jump[0]], s.u[jump[0] + 1]) == (1.0, 0.0)
    g = run(riemann(burgers, 1.0, 0.0, n=40), 1.0)
    xs = shock_positions(sharpen_shocks(g))
    assert xs == pytest.approx([0.5], abs=1e-12)


def test_run_stops_exactly(burgers):
    g = run(riemann(burgers, 1.0, -0.5), 0.7)
    assert g.t == 0.7


def test_run_rejects_past(burgers):
    f = front(burgers, [(0, 1), (1, 0)], t=1.0)
    with pytest.raises(ValueError):
        run(f, 0.5)


def test_observer_times_and_ordering(quartic):
    ic = InitialCondition.from_spec({"pieces": [{"interval": [-3, 3], "function": {"id": "gaussian_cosine"}}]})
    diag = RunDiagnostics.for_front(sample(ic, quartic, 100))
    seen = []

    def obs(ev, snap):
        diag(ev, snap)
        assert np.all(np.diff(snap.x) >= -1e-12 * 6)
        seen.append(snap.t)

    run(sample(ic, quartic, 100), 8.0, obs)
    assert np.all(np.diff(seen) >= 0)
    assert diag.max_tv_increase() <= 1e-12
    assert diag.max_event_drift() <= 1e-10


def test_snapshots_immutable(burgers):
    snaps = []
    run(riemann(burgers, 1.0, 0.0), 0.5, lambda ev, s: snaps.append(s))
    with pytest.raises((ValueError, AttributeError, TypeError)):
        snaps[0].x[0] = 99.0


def test_d_max_validation(burgers):
    with pytest.raises(ValueError):
        ParticleFront([0, 1], [0, 1], None, burgers, d_max=0.0)
    with pytest.raises(ValueError):
        ParticleFront([1, 0], [0, 1], None, burgers, d_max=1.0)
