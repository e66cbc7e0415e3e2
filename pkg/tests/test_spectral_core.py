import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mhdstage.spectral_core import (
    Grid3,
    NormSpec,
    SpectralError,
    SpectralField,
    FieldDumpWriter,
    besov_norm,
    compute_norm,
    decorrelation_gap,
    decorrelation_sweep,
    differential_op,
    flag_residual,
    inverse_divergence_antisym,
    inverse_divergence_sym,
    leray_project,
    lp_of_values,
    random_field,
    read_field_dump,
    time_norm,
    trapezoid_weights,
    write_field_dump,
)

from conftest import full_coords, rel_l2, solenoidal


def test_grid_rejects_bad_resolution():
    for n in (0, 2, 12, 33):
        with pytest.raises(SpectralError):
            Grid3(n)


def test_band_and_padding(grid16):
    assert grid16.band == 7
    assert grid16.padded == 24
    assert grid16.spectral_shape == (16, 16, 9)


def test_nyquist_plane_dropped(grid16):
    x, _, _ = full_coords(grid16)
    c = grid16.forward(np.cos(2 * np.pi * 8 * x))
    assert np.max(np.abs(c)) < 1e-14


def test_sine_l2_norm(grid16):
    x, _, _ = full_coords(grid16)
    f = SpectralField.from_values(grid16, "scalar", np.sin(2 * np.pi * x), {"mean-free"})
    assert compute_norm(f, NormSpec("Lp", p=2)) == pytest.approx(1 / np.sqrt(2), abs=1e-14)
    assert compute_norm(f, NormSpec("Lp", p=np.inf)) == pytest.approx(1.0, abs=1e-12)
    # mean of |sin| over a period is 2/pi
    assert compute_norm(f, NormSpec("Lp", p=1)) == pytest.approx(2 / np.pi, rel=2e-2)


def test_parseval_matches_grid_mean(grid16, rng):
    c = random_field(grid16, "tensor", rng)
    vals = grid16.inverse(c)
    assert grid16.l2_sq(c) == pytest.approx(float(np.mean(np.sum(vals**2, axis=(0, 1)))), rel=1e-12)


def test_flags_are_checked(grid16, rng):
    with pytest.raises(SpectralError):
        SpectralField.from_values(grid16, "scalar", np.ones((16,) * 3), {"mean-free"})
    c = random_field(grid16, "vector", rng)
    with pytest.raises(SpectralError):
        SpectralField(grid16, "vector", c, frozenset({"divergence-free"}))
    with pytest.raises(SpectralError):
        SpectralField(grid16, "vector", c, frozenset({"bogus"}))
    with pytest.raises(SpectralError):
        SpectralField(grid16, "tensor", c)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.sampled_from([8, 16]))
def test_inverse_divergence_round_trips(seed, n):
    g = Grid3(n)
    rng = np.random.default_rng(seed)
    v = SpectralField(g, "vector", random_field(g, "vector", rng), frozenset({"mean-free"}))
    R = inverse_divergence_sym(v)
    assert rel_l2(g, g.div(R.coef) - v.coef, v.coef) < 1e-12
    assert flag_residual(R, "symmetric") < 1e-14
    assert flag_residual(R, "trace-free") < 1e-14
    u = SpectralField(g, "vector", solenoidal(g, rng), frozenset({"mean-free"}))
    A = inverse_divergence_antisym(u)
    assert rel_l2(g, g.div(A.coef) - u.coef, u.coef) < 1e-12
    assert flag_residual(A, "antisymmetric") < 1e-14


def test_antisymmetric_inverse_needs_solenoidal_input(grid16, rng):
    v = SpectralField(grid16, "vector", random_field(grid16, "vector", rng), frozenset({"mean-free"}))
    with pytest.raises(SpectralError):
        inverse_divergence_antisym(v)


def test_inverse_operators_need_mean_free(grid16, rng):
    c = random_field(grid16, "vector", rng, mean_free=False)
    c[0, 0, 0, 0] = 1.0
    with pytest.raises(SpectralError):
        inverse_divergence_sym(SpectralField(grid16, "vector", c))
    with pytest.raises(SpectralError):
        differential_op(SpectralField(grid16, "vector", c), "inv_laplacian")


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_leray_idempotent_and_solenoidal(seed):
    g = Grid3(8)
    v = SpectralField(g, "vector", random_field(g, "vector", np.random.default_rng(seed)), frozenset({"mean-free"}))
    P = leray_project(v)
    assert flag_residual(P, "divergence-free") < 1e-14
    assert rel_l2(g, leray_project(P).coef - P.coef, P.coef) < 1e-14


def test_vector_identities(grid16, rng):
    f = random_field(grid16, "scalar", rng)
    v = random_field(grid16, "vector", rng)
    assert np.max(np.abs(grid16.curl(grid16.grad(f)))) < 1e-10
    assert np.max(np.abs(grid16.div(grid16.curl(v)))) < 1e-10
    # curl curl = grad div - lap
    lhs = grid16.curl(grid16.curl(v))
    rhs = grid16.grad(grid16.div(v)) - grid16.lap(v)
    assert rel_l2(grid16, lhs - rhs, lhs) < 1e-12
    assert rel_l2(grid16, grid16.lap(grid16.inv_lap(f)) - f, f) < 1e-14


def test_divdiv_over_lap(grid16, rng):
    A = random_field(grid16, "tensor", rng)
    direct = grid16.inv_lap(grid16.div(grid16.div(A)))
    assert rel_l2(grid16, grid16.divdiv_over_lap(A) - direct, direct) < 1e-12


def test_galerkin_product_rule_is_exact(grid16, rng):
    f = random_field(grid16, "scalar", rng)
    g = random_field(grid16, "scalar", rng)
    lhs = grid16.d(grid16.product(f, g), 0)
    rhs = grid16.product(grid16.d(f, 0), g) + grid16.product(f, grid16.d(g, 0))
    assert rel_l2(grid16, lhs - rhs, lhs) < 1e-12


def test_galerkin_product_of_low_modes_is_pointwise(grid16, rng):
    f = random_field(grid16, "scalar", rng, kmax=3)
    g = random_field(grid16, "scalar", rng, kmax=3)
    pw = grid16.inverse(f) * grid16.inverse(g)
    assert np.max(np.abs(grid16.inverse(grid16.product(f, g)) - pw)) < 1e-13


def test_outer_convention(grid16, rng):
    u = random_field(grid16, "vector", rng, kmax=3)
    w = random_field(grid16, "vector", rng, kmax=3)
    O = grid16.inverse(grid16.outer(u, w))
    uv, wv = grid16.inverse(u), grid16.inverse(w)
    assert np.allclose(O[0, 1], uv[0] * wv[1], atol=1e-13)


def test_besov_block_sum_matches_l2(grid16, rng):
    # the sharp dyadic blocks are orthogonal, so B^0_{2,2} is exactly L^2
    c = random_field(grid16, "vector", rng)
    assert besov_norm(grid16, c, 0.0, 2.0, 2.0) == pytest.approx(np.sqrt(grid16.l2_sq(c)), rel=1e-12)


def test_holder_norm_of_single_mode(grid16):
    x, _, _ = full_coords(grid16)
    f = SpectralField.from_values(grid16, "scalar", np.sin(2 * np.pi * 5 * x))
    # |k| = 5 sits in block j = 3 (4 <= |k| < 8)
    assert compute_norm(f, NormSpec("Holder", eps=0.5)) == pytest.approx(2 ** 1.5, rel=1e-12)


def test_normspec_validation():
    with pytest.raises(SpectralError):
        NormSpec("Lp", p=0.5).validate()
    with pytest.raises(SpectralError):
        NormSpec("Holder", eps=1.5).validate()
    with pytest.raises(SpectralError):
        NormSpec("Sobolev").validate()
    assert NormSpec("LpLq", p=1, q=np.inf).label() == "L1_t Linf_x"


def test_trapezoid_time_norm():
    t = np.linspace(0, 1, 201)
    w = trapezoid_weights(t)
    assert w.sum() == pytest.approx(1.0, abs=1e-15)
    assert time_norm(t**2, w, 1) == pytest.approx(1 / 3, abs=1e-5)
    assert time_norm(t, w, np.inf) == 1.0
    with pytest.raises(SpectralError):
        time_norm([-1.0, 1.0], trapezoid_weights([0, 1]), 1)


def test_dump_round_trip(tmp_path, grid16, rng):
    vals = np.stack([grid16.inverse(random_field(grid16, "vector", rng)) for _ in range(3)])
    write_field_dump(tmp_path / "v", vals, [0.0, 0.5, 1.0], grid16, "v", {"divergence-free"})
    data, meta = read_field_dump(tmp_path / "v")
    assert data.shape == (3, 16, 16, 16, 3)
    assert np.array_equal(data, np.moveaxis(vals, 1, -1))
    assert meta["axis_order"] == "t,x1,x2,x3,component"
    assert meta["flags"] == "divergence-free"
    assert [float(t) for t in meta["times"].split(",")] == [0.0, 0.5, 1.0]
    with pytest.raises(SpectralError):
        write_field_dump(tmp_path / "w", vals, [0.0], grid16, "w")


def test_dump_writer_rejects_component_change(tmp_path, grid16):
    w = FieldDumpWriter(tmp_path / "p", grid16, "p")
    w.append(0.0, np.zeros((16,) * 3))
    with pytest.raises(SpectralError):
        w.append(1.0, np.zeros((3,) + (16,) * 3))
    w.close()


def _f(x, y, z):
    return np.exp(0.5 * np.sin(2 * np.pi * x)) * (1 + 0.3 * np.cos(2 * np.pi * y))


def _g(x, y, z):
    return np.sin(2 * np.pi * x) + 0.5 * np.cos(2 * np.pi * (x + y))


@settings(max_examples=15, deadline=None)
@given(j=st.integers(0, 20), c=st.floats(-3, 3).filter(lambda c: abs(c) > 0.1),
       p=st.sampled_from([1.0, 2.0, 3.5, np.inf]))
def test_decorrelation_gap_vanishes_for_constant_slow_factor_odd_scale(j, c, p):
    # an odd scale permutes the midpoint grid, so the quadrature is exact
    gap = decorrelation_gap(lambda x, y, z: c + 0 * x, _g, 2 * j + 1, p, (64, 64, 1))
    assert gap <= 1e-12 * abs(c)


@settings(max_examples=15, deadline=None)
@given(lam=st.integers(1, 31), c=st.floats(-3, 3).filter(lambda c: abs(c) > 0.1))
def test_decorrelation_gap_vanishes_for_constant_slow_factor_l2(lam, c):
    # |g(lam x)|^2 has frequencies below 64, so the midpoint rule is exact
    gap = decorrelation_gap(lambda x, y, z: c + 0 * x, _g, lam, 2.0, (64, 64, 1))
    assert gap <= 1e-12 * abs(c)


def test_decorrelation_gap_requires_integer_scale():
    with pytest.raises(SpectralError):
        decorrelation_gap(_f, _g, 2.5, 1, 8)


def test_decorrelation_sweep_bound_holds():
    fc1 = np.exp(0.5) * 1.3 + 2 * np.pi * (0.5 * np.exp(0.5) * 1.3 + np.exp(0.5) * 0.3)
    fit = decorrelation_sweep(_f, _g, [4, 8, 16], 2, (256, 256, 1), fc1)
    assert fit.predicted_slope(2) == -0.5
    assert len(fit.gaps) == 3
    assert all(gap <= bnd for gap, bnd in zip(fit.gaps, fit.bounds))


def test_lp_of_values_tensor_magnitude():
    vals = np.zeros((3, 3, 2, 2, 2))
    vals[0, 1] = 3.0
    vals[1, 0] = 4.0
    assert lp_of_values(vals, np.inf) == pytest.approx(5.0)
