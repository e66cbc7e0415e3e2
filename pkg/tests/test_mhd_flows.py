import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mhdstage.mhd_flows import (
    MHDState,
    SolverConfig,
    cfl_number,
    difference_diagnostics,
    exact_shear_solution,
    fluxes,
    mhd_residual,
    nonlinear,
    nonlinear_terms,
    pressure,
    shear_coefficients,
    solve_mhd,
    step,
)
from mhdstage.spectral_core import Grid3, SpectralError

from conftest import full_coords, rel_l2, solenoidal


def _random_state(grid, seed, amp=1.0, kmax=2):
    rng = np.random.default_rng(seed)
    v = solenoidal(grid, rng, kmax)
    b = solenoidal(grid, rng, kmax)
    v *= amp / np.sqrt(grid.l2_sq(v))
    b *= amp / np.sqrt(grid.l2_sq(b))
    return MHDState.from_coef(grid, 0.0, v, b)


def test_solver_config_validation():
    with pytest.raises(SpectralError):
        SolverConfig(dt=0.01, nu=0.5)
    with pytest.raises(SpectralError):
        SolverConfig(dt=-1.0)
    with pytest.raises(SpectralError):
        SolverConfig(dt=0.01, scheme="euler")


def test_shear_fixture_values(grid16):
    x, _, _ = full_coords(grid16)
    s = exact_shear_solution(grid16, 2.0, 0.1)
    amp = 2.0 * np.exp(-4 * np.pi**2 * 0.1)
    assert np.allclose(s.v.values[2], amp * np.sin(2 * np.pi * x), atol=1e-14)
    assert np.allclose(s.b.values[1], amp * np.sin(2 * np.pi * x), atol=1e-14)
    assert np.max(np.abs(s.v.values[:2])) == 0 and np.max(np.abs(s.b.values[[0, 2]])) == 0
    assert np.max(np.abs(s.p.coef)) < 1e-14


def test_shear_nonlinear_terms_cancel(grid16):
    v, b = shear_coefficients(grid16, 1.0, 0.0)
    terms = nonlinear_terms(grid16, v, b)
    assert max(terms.values()) < 1e-12
    nv, nb = nonlinear(grid16, v, b)
    assert np.max(np.abs(nv)) < 1e-12 and np.max(np.abs(nb)) < 1e-12


def test_shear_residual_vanishes(grid16):
    v, b = shear_coefficients(grid16, 1.0, 0.05)
    dv = -4 * np.pi**2 * v
    db = -4 * np.pi**2 * b
    rv, rb = mhd_residual(grid16, v, b, dv, db)
    assert rv < 1e-12 and rb < 1e-12


def test_pressure_removes_gradient_part(grid16):
    s = _random_state(grid16, 3)
    v, b = s.v.coef, s.b.coef
    sym, _ = fluxes(grid16, v, b)
    p = pressure(grid16, v, b)
    force = -grid16.div(sym) - grid16.grad(p)
    ref = np.sqrt(grid16.l2_sq(grid16.div(sym)))
    assert np.sqrt(grid16.l2_sq(grid16.div(force))) < 1e-12 * ref
    nv, _ = nonlinear(grid16, v, b)
    assert rel_l2(grid16, force - nv, nv) < 1e-12


def test_step_is_pure(grid16):
    s = _random_state(grid16, 5)
    v0, b0 = s.v.coef.copy(), s.b.coef.copy()
    a = step(grid16, s.v.coef, s.b.coef, 1e-3)
    c = step(grid16, s.v.coef, s.b.coef, 1e-3)
    assert np.array_equal(a[0], c[0]) and np.array_equal(a[1], c[1])
    assert np.array_equal(v0, s.v.coef) and np.array_equal(b0, s.b.coef)


@settings(max_examples=5, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_viscous_energy_decreases_every_step(seed):
    g = Grid3(16)
    log = []
    traj = solve_mhd(_random_state(g, seed), 0.02, SolverConfig(dt=1e-3), sample_every=5, log=log)
    e = [traj[0].energy()] + [x for _, x in log]
    assert np.all(np.diff(e) <= 1e-10 * e[0])
    for s in traj:
        assert np.sqrt(g.l2_sq(g.div(s.v.coef))) < 1e-12
        assert np.sqrt(g.l2_sq(g.div(s.b.coef))) < 1e-12


def test_ideal_energy_drift_small(grid16):
    log = []
    solve_mhd(_random_state(grid16, 11, amp=0.3), 0.1, SolverConfig(dt=1e-3, nu=0.0), log=log)
    e = np.array([x for _, x in log])
    assert np.max(np.abs(e - e[0])) / e[0] < 1e-6


def test_time_order_two(grid16):
    init = _random_state(grid16, 13)
    ref = solve_mhd(init, 0.02, SolverConfig(dt=2.5e-4), sample_every=10**6)[-1]
    errs = []
    for dt in (2e-3, 1e-3):
        end = solve_mhd(init, 0.02, SolverConfig(dt=dt), sample_every=10**6)[-1]
        errs.append(np.sqrt(grid16.l2_sq(end.v.coef - ref.v.coef) + grid16.l2_sq(end.b.coef - ref.b.coef)))
    order = np.log2(errs[0] / errs[1])
    assert 1.7 < order < 2.4


def test_cfl_and_input_checks(grid16):
    s = _random_state(grid16, 17, amp=50.0)
    assert cfl_number(grid16, s.v.coef, s.b.coef, 0.01) > 0.5
    with pytest.raises(SpectralError):
        solve_mhd(s, 0.05, SolverConfig(dt=0.01))
    with pytest.raises(SpectralError):
        solve_mhd(s, -1.0, SolverConfig(dt=0.01))


def test_difference_diagnostics(grid16):
    a = [exact_shear_solution(grid16, 1.0, t) for t in (0.0, 0.01)]
    b = [exact_shear_solution(grid16, 2.0, t) for t in (0.0, 0.01)]
    same = difference_diagnostics(a, a)
    assert all(v == 0.0 for v in same.values())
    d = difference_diagnostics(a, b)
    # at t = 0 the difference is one unit shear in v and one in b
    assert d["L2"] == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(SpectralError):
        difference_diagnostics(a, b[:1])
