import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mhdstage.gluing import (
    FlowSample,
    GluingSchedule,
    exact_sample,
    fd_derivative,
    glue_fields,
    glue_sample,
    initial_glue_sample,
    pair_glue,
    relaxed_residual,
    residual_norms,
    trace_free_outer,
    trajectory_samples,
)
from mhdstage.mhd_flows import exact_shear_solution, nonlinear, pressure
from mhdstage.spectral_core import Grid3, SpectralError

from conftest import rel_l2, solenoidal

G = Grid3(8)


def _instant(grid, seed):
    """Fields with dt v, dt b set to the exact MHD right-hand side."""
    rng = np.random.default_rng(seed)
    v, b = solenoidal(grid, rng), solenoidal(grid, rng)
    nv, nb = nonlinear(grid, v, b)
    return FlowSample(v, b, grid.lap(v) + nv, grid.lap(b) + nb, pressure(grid, v, b))


def _scale(grid, s):
    terms = [s.dv, s.db, grid.lap(s.v), grid.lap(s.b), grid.div(s.R), grid.div(s.M)]
    return sum(np.sqrt(grid.l2_sq(t)) for t in terms)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), c=st.floats(0, 1), c1=st.floats(-50, 50), c2=st.floats(-1e3, 1e3))
def test_pair_glue_solves_relaxed_system(seed, c, c1, c2):
    A, B = _instant(G, seed), _instant(G, seed + 1)
    s = pair_glue(G, 0.0, (c, c1, c2), A, B)
    rv, rb = residual_norms(G, s)
    assert (rv + rb) <= 1e-12 * _scale(G, s)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), c=st.floats(0, 1), c1=st.floats(-50, 50))
def test_pair_glue_symmetry_classes(seed, c, c1):
    s = pair_glue(G, 0.0, (c, c1, 0.0), _instant(G, seed), _instant(G, seed + 7))
    for X in (s.R, s.dR):
        assert np.max(np.abs(X - np.swapaxes(X, 0, 1))) < 1e-14
        assert np.max(np.abs(X[0, 0] + X[1, 1] + X[2, 2])) < 1e-14
    for X in (s.M, s.dM):
        assert np.max(np.abs(X + np.swapaxes(X, 0, 1))) < 1e-14


def test_pair_glue_endpoints():
    A, B = _instant(G, 1), _instant(G, 2)
    s = pair_glue(G, 0.0, (1.0, 0.0, 0.0), A, B)
    assert np.array_equal(s.v, A.v) and np.array_equal(s.b, A.b)
    assert np.max(np.abs(s.R)) == 0 and np.max(np.abs(s.M)) == 0
    s = pair_glue(G, 0.0, (0.0, 0.0, 0.0), A, B)
    assert np.array_equal(s.v, B.v)
    assert np.max(np.abs(s.p - B.p)) < 1e-15


def test_pair_glue_time_derivatives_match_difference_quotient():
    A, B = _instant(G, 3), _instant(G, 4)

    def at(t):
        chi = (0.4 + 0.3 * t + 2.0 * t * t, 0.3 + 4.0 * t, 4.0)
        a = FlowSample(A.v + t * A.dv, A.b + t * A.db, A.dv, A.db)
        b = FlowSample(B.v + t * B.dv, B.b + t * B.db, B.dv, B.db)
        return pair_glue(G, t, chi, a, b)

    h = 1e-5
    s, up, dn = at(0.01), at(0.01 + h), at(0.01 - h)
    for name, dname in (("R", "dR"), ("M", "dM"), ("v", "dv"), ("b", "db")):
        fd = (getattr(up, name) - getattr(dn, name)) / (2 * h)
        exact = getattr(s, dname)
        assert rel_l2(G, fd - exact, exact) < 1e-8


def test_trace_free_outer():
    rng = np.random.default_rng(0)
    u, w = solenoidal(G, rng), solenoidal(G, rng)
    o = trace_free_outer(G, u, w)
    assert np.max(np.abs(o[0, 0] + o[1, 1] + o[2, 2])) < 1e-15
    assert np.allclose(o[0, 1], G.outer(u, w)[0, 1])


def test_schedule_layout():
    T, W = 1 / 40, 3
    s = GluingSchedule.build(T, W)
    assert s.tau == pytest.approx(T / 4)
    assert s.times[0] == pytest.approx(2 * T) and s.times[-1] == pytest.approx(3 * T - s.tau)
    assert s.locate(2 * T) == ("exact", 0)
    mid = 0.5 * sum(s.I(2))
    assert s.locate(mid) == ("overlap", 2)
    assert s.locate(0.9) == ("exact", W)
    assert s.flow_span(0) == (0.0, s.I(1)[1])
    assert s.flow_span(W) == (s.I(W)[0], 1.0)
    with pytest.raises(SpectralError):
        GluingSchedule.build(T, 2)


def _shear_traj(A, times):
    return [exact_shear_solution(G, A, t) for t in times]


def test_glue_fields_stress_only_on_overlaps():
    T, W = 1 / 40, 3
    sched = GluingSchedule.build(T, W)
    dt = sched.tau / 24
    times = 2 * T + dt * np.arange(-4, int(round((T - sched.tau) / dt)) + 5)
    flows = [_shear_traj(1.0 + i, times) for i in range(W + 1)]
    stage = glue_fields(flows, sched)
    for t, s in zip(stage.times, stage.samples):
        kind, _ = sched.locate(t)
        size = np.max(np.abs(s.R)) + np.max(np.abs(s.M))
        if kind == "exact":
            assert size == 0.0
    assert any(np.max(np.abs(s.R)) > 0 for s in stage.samples)
    f = stage.field("R", 5)
    assert "symmetric" in f.flags
    with pytest.raises(SpectralError):
        glue_fields(flows[:2], sched)


def test_glue_sample_exact_window_uses_single_flow():
    sched = GluingSchedule.build(1 / 40, 3)
    A = _instant(G, 8)
    calls = []

    def flows(i):
        calls.append(i)
        return A

    s = glue_sample(G, sched, 2 / 40, flows)
    assert calls == [0] and s.window == "exact"


def test_initial_glue_plateaus():
    T, tau = 1 / 40, 1 / 160
    A, B = _instant(G, 9), _instant(G, 10)
    s = initial_glue_sample(G, T, tau, 2 * T + 2 * tau, A, B)
    assert s.window == "plateau-first" and np.array_equal(s.v, A.v)
    s = initial_glue_sample(G, T, tau, 3 * T - tau, A, B)
    assert s.window == "plateau-second" and np.array_equal(s.v, B.v)
    s = initial_glue_sample(G, T, tau, 2.5 * T, A, B)
    rv, rb = residual_norms(G, s)
    assert rv + rb <= 1e-12 * _scale(G, s)


def test_exact_sample_residual():
    A = _instant(G, 12)
    s = exact_sample(G, 0.0, A)
    rv, rb = relaxed_residual(G, s.v, s.b, s.p, s.R, s.M, s.dv, s.db)
    assert np.sqrt(G.l2_sq(rv)) < 1e-12 * np.sqrt(G.l2_sq(A.dv))


def test_fd_derivative_orders():
    dt = 0.1
    t = dt * np.arange(7)
    quartic = [np.array([x**4]) for x in t]
    assert fd_derivative(quartic, dt, 3)[0] == pytest.approx(4 * t[3] ** 3, rel=1e-12)
    quad = [np.array([x**2]) for x in t]
    assert fd_derivative(quad, dt, 0)[0] == pytest.approx(0.0, abs=1e-12)
    assert fd_derivative(quad, dt, 6)[0] == pytest.approx(2 * t[6], rel=1e-12)
    assert fd_derivative(quad, dt, 1)[0] == pytest.approx(2 * t[1], rel=1e-12)


def test_trajectory_samples_needs_three_states():
    with pytest.raises(SpectralError):
        trajectory_samples(_shear_traj(1.0, [0.0, 0.01]))
