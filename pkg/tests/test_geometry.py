from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mhdstage.geometry import (
    GeometryError,
    build_direction_set,
    certified_radius,
    decompose_skew,
    decompose_sym,
    random_admissible,
    sphere_check,
)

# Frozen from an independent SLSQP minimisation of each coefficient over the
# admissible sphere, which agreed with the closed-form minimum to 1e-14.
RADIUS = {"skew": 1.4905416081794842, "sym": 0.2662183928646364}
SPHERE_MIN = {"skew": 0.19, "sym": 0.0684}


@pytest.mark.parametrize("kind", ["skew", "sym"])
def test_triples_are_rational_orthonormal_frames(kind):
    S = build_direction_set(kind)
    for t in S.triples:
        vecs = (t.k, t.kb, t.kbb)
        for i, a in enumerate(vecs):
            for j, b in enumerate(vecs):
                dot = sum((x * y for x, y in zip(a, b)), Fraction(0))
                assert dot == (1 if i == j else 0)
            assert all((x * t.n_lambda).denominator == 1 for x in a)


@pytest.mark.parametrize("kind", ["skew", "sym"])
def test_direction_lines_pairwise_distinct(kind):
    S = build_direction_set(kind)
    lines = [t.line() for t in S.triples]
    assert len(set(lines)) == len(lines)


@pytest.mark.parametrize("kind", ["skew", "sym"])
def test_center_reconstructed(kind):
    S = build_direction_set(kind)
    c = S.coefficients(S.center.reshape(3, 3))
    assert np.allclose(c, S.base, atol=1e-15)
    assert np.allclose(S.reconstruct(S.base), S.center.reshape(3, 3), atol=1e-14)


@pytest.mark.parametrize("kind", ["skew", "sym"])
def test_frozen_radius_and_sphere_minimum(kind, rng):
    S = build_direction_set(kind)
    assert S.radius == pytest.approx(RADIUS[kind], rel=1e-12)
    assert S.radius == pytest.approx(certified_radius(S.base, S.pinv), rel=1e-15)
    # sampling can only find values at or above the certified minimum
    assert sphere_check(S, 20000, rng) >= SPHERE_MIN[kind] - 1e-12
    assert sphere_check(S, 20000, rng) == pytest.approx(SPHERE_MIN[kind], abs=0.05)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), kind=st.sampled_from(["skew", "sym"]))
def test_decomposition_reconstructs_and_stays_positive(seed, kind):
    S = build_direction_set(kind)
    pts = random_admissible(S, 64, np.random.default_rng(seed))
    coeffs = S.coefficients(np.moveaxis(pts, 0, -1))
    assert np.min(coeffs) >= S.floor - 1e-12
    back = np.moveaxis(S.reconstruct(coeffs), -1, 0)
    assert np.max(np.abs(back - pts)) < 1e-12


def test_single_matrix_wrappers():
    M = np.array([[0.0, 0.3, -0.2], [-0.3, 0.0, 0.1], [0.2, -0.1, 0.0]])
    a = decompose_skew(M)
    assert np.all(a > 0)
    assert np.allclose(build_direction_set("skew").reconstruct(a), M, atol=1e-14)
    R = np.eye(3) + 0.05 * np.array([[1.0, 0.5, 0.0], [0.5, -1.0, 0.2], [0.0, 0.2, 0.3]])
    c = decompose_sym(R)
    assert np.all(c > 0)
    assert np.allclose(build_direction_set("sym").reconstruct(c), R, atol=1e-14)


def test_wrong_symmetry_rejected():
    with pytest.raises(GeometryError):
        decompose_skew(np.eye(3) * 0.1)
    with pytest.raises(GeometryError):
        decompose_sym(np.eye(3) + np.triu(np.ones((3, 3)), 1) * 0.01)
    with pytest.raises(GeometryError):
        decompose_sym(np.eye(2))


def test_outside_ball_rejected():
    S = build_direction_set("sym")
    with pytest.raises(GeometryError):
        decompose_sym(np.eye(3) * (1 + 2 * S.radius))
    with pytest.raises(GeometryError):
        build_direction_set("diagonal")


def test_export_table(tmp_path):
    S = build_direction_set("sym")
    path = S.export_table(tmp_path / "sym.txt")
    lines = path.read_text().splitlines()
    assert len(lines) == len(S) + 2
    assert lines[-1].startswith("# radius")
