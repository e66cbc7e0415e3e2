"""Rational direction sets and the two positive matrix decompositions.

A direction triple is a rational orthonormal frame (k, k̄, k̄̄) such that
N_Λ k, N_Λ k̄ and N_Λ k̄̄ are integer vectors.  Two families are compiled in:

* the skew set, whose generators k̄⊗k̄̄ - k̄̄⊗k̄ write every antisymmetric
  matrix near 0 as a positive combination;
* the symmetric set, whose generators k̄⊗k̄ write every symmetric matrix
  near the identity as a positive combination.

The coefficient maps are affine: a_k(M) = a_k^0 + (G^+ vec M)_k with G the
9 x n generator matrix and G^+ its pseudo-inverse.  The admissible radius is
certified in closed form (the worst case of a linear functional on a sphere
is attained along its gradient) and cross-checked by sphere sampling.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

Vec = tuple[Fraction, Fraction, Fraction]

POSITIVITY_FLOOR = 0.1   # coefficients stay >= this fraction of min a_k^0
SAFETY = 0.9


class GeometryError(ValueError):
    """Raised for invalid frames or inputs outside the admissible ball."""


def _frac_vec(v: Sequence, scale: int) -> Vec:
    return tuple(Fraction(int(x), scale) for x in v)


def _dot(a: Vec, b: Vec) -> Fraction:
    return sum((x * y for x, y in zip(a, b)), Fraction(0))


@dataclass(frozen=True)
class DirectionTriple:
    """Rational orthonormal frame (k, k̄, k̄̄) with integer scale N_Λ."""

    k: Vec
    kb: Vec
    kbb: Vec
    n_lambda: int

    def __post_init__(self):
        vecs = (self.k, self.kb, self.kbb)
        for v in vecs:
            if _dot(v, v) != 1:
                raise GeometryError(f"{v} is not a unit vector")
            for x in v:
                if (x * self.n_lambda).denominator != 1:
                    raise GeometryError(f"N_Λ={self.n_lambda} does not clear the denominators of {v}")
        for i in range(3):
            for j in range(i + 1, 3):
                if _dot(vecs[i], vecs[j]) != 0:
                    raise GeometryError("frame vectors are not orthogonal")

    @classmethod
    def from_integers(cls, k, kb, kbb, n_lambda: int) -> "DirectionTriple":
        return cls(_frac_vec(k, n_lambda), _frac_vec(kb, n_lambda), _frac_vec(kbb, n_lambda), n_lambda)

    @property
    def k_vec(self) -> np.ndarray:
        return np.array([float(x) for x in self.k])

    @property
    def kb_vec(self) -> np.ndarray:
        return np.array([float(x) for x in self.kb])

    @property
    def kbb_vec(self) -> np.ndarray:
        return np.array([float(x) for x in self.kbb])

    @property
    def k_int(self) -> np.ndarray:
        """N_Λ k as an integer vector."""
        return np.array([int(x * self.n_lambda) for x in self.k])

    def skew_generator(self) -> np.ndarray:
        a, b = self.kb_vec, self.kbb_vec
        return np.outer(a, b) - np.outer(b, a)

    def sym_generator(self) -> np.ndarray:
        a = self.kb_vec
        return np.outer(a, a)

    def line(self) -> tuple[int, int, int]:
        """Canonical key of the line R k (first nonzero entry positive)."""
        k = tuple(int(x) for x in self.k_int)
        for x in k:
            if x:
                return k if x > 0 else tuple(-y for y in k)
        raise GeometryError("zero direction")


# Compiled-in frames, as integer rows (N_Λ k, N_Λ k̄, N_Λ k̄̄) with N_Λ.
# Skew frames: the axials k̄ × k̄̄ are (1,2,2), -(1,2,-2), -(2,-1,2), (2,-1,-2)
# over 3, which sum to zero, so equal base coefficients reconstruct 0.
# Symmetric frames: the three axes and four (1,2,2)/3-type lines; base
# coefficients maximize the smallest coefficient (found by a linear program,
# see scripts/find_direction_sets.py).
_SKEW_FRAMES = (
    ((1, 2, 2), (2, 1, -2), (-2, 2, -1), 3),
    ((1, 2, -2), (2, 1, 2), (-2, 2, 1), 3),
    ((2, -1, 2), (-1, 2, 2), (2, 2, -1), 3),
    ((2, -1, -2), (2, 2, 1), (1, -2, 2), 3),
)
_SKEW_BASE = (Fraction(1),) * 4

_SYM_FRAMES = (
    ((1, 0, 0), (0, -1, 0), (0, 0, -1), 1),
    ((0, 1, 0), (0, 0, -1), (-1, 0, 0), 1),
    ((0, 0, 1), (-1, 0, 0), (0, -1, 0), 1),
    ((1, -2, 2), (-2, 1, 2), (-2, -2, -1), 3),
    ((1, -2, -2), (-2, 1, -2), (2, 2, -1), 3),
    ((2, 1, 2), (-1, -2, 2), (2, -2, -1), 3),
    ((2, 1, -2), (-1, -2, -2), (-2, 2, -1), 3),
)
_SYM_BASE = (Fraction(3, 5), Fraction(9, 25), Fraction(3, 5)) + (Fraction(9, 25),) * 4


@dataclass(frozen=True)
class DirectionSet:
    """Direction triples with base coefficients and a certified radius."""

    kind: str
    triples: tuple[DirectionTriple, ...]
    base: np.ndarray
    center: np.ndarray
    generators: np.ndarray = field(repr=False)
    pinv: np.ndarray = field(repr=False)
    radius: float
    floor: float

    def __len__(self) -> int:
        return len(self.triples)

    def coefficients(self, M: np.ndarray, check: bool = True) -> np.ndarray:
        """Affine coefficient map applied to a (3, 3, ...) field of matrices.

        Returns an array of shape (n, ...).
        """
        M = np.asarray(M, dtype=float)
        flat = M.reshape((9,) + M.shape[2:])
        dev = flat - self.center.reshape((9,) + (1,) * (flat.ndim - 1))
        if check:
            dist = np.sqrt(np.sum(dev * dev, axis=0))
            worst = float(np.max(dist)) if dist.size else 0.0
            if worst > self.radius * (1 + 1e-12):
                raise GeometryError(
                    f"{self.kind} input at distance {worst:.6g} from the center exceeds radius {self.radius:.6g}")
        corr = np.tensordot(self.pinv, dev, axes=(1, 0))
        return self.base.reshape((-1,) + (1,) * (flat.ndim - 1)) + corr

    def reconstruct(self, coeffs: np.ndarray) -> np.ndarray:
        out = np.tensordot(self.generators, coeffs, axes=(1, 0))
        return out.reshape((3, 3) + coeffs.shape[1:])

    def jacobian(self) -> np.ndarray:
        return self.pinv.copy()

    def table(self) -> str:
        """Audit table: rational entries as numerator/denominator."""
        lines = ["# kind index N_lambda k kb kbb base"]
        for i, (t, c) in enumerate(zip(self.triples, self.base)):
            fmt = lambda v: "(" + ",".join(f"{x.numerator}/{x.denominator}" for x in v) + ")"
            base = Fraction(float(c)).limit_denominator(10**6)
            lines.append(f"{self.kind} {i} {t.n_lambda} {fmt(t.k)} {fmt(t.kb)} {fmt(t.kbb)} "
                         f"{base.numerator}/{base.denominator}")
        lines.append(f"# radius {self.radius!r}")
        return "\n".join(lines) + "\n"

    def export_table(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(self.table())
        return path


def certified_radius(base: np.ndarray, pinv: np.ndarray, floor_frac: float = POSITIVITY_FLOOR,
                     safety: float = SAFETY) -> float:
    """Largest radius keeping every coefficient above floor_frac * min base.

    Each row of G^+ lies in the target subspace, so the minimum of
    a_k over the sphere of radius r is a_k^0 - r |row_k|.
    """
    floor = floor_frac * float(base.min())
    rows = np.linalg.norm(pinv, axis=1)
    return safety * float(np.min((base - floor) / rows))


def _assemble(kind: str, frames, base_fracs) -> DirectionSet:
    triples = tuple(DirectionTriple.from_integers(*f) for f in frames)
    keys = [t.line() for t in triples]
    if len(set(keys)) != len(keys):
        raise GeometryError("direction lines must be pairwise non-parallel")
    if kind == "skew":
        gens = np.array([t.skew_generator().ravel() for t in triples]).T
        center = np.zeros((3, 3))
        exact_gen = [_exact_skew(t) for t in triples]
        dim = 3
    else:
        gens = np.array([t.sym_generator().ravel() for t in triples]).T
        center = np.eye(3)
        exact_gen = [_exact_sym(t) for t in triples]
        dim = 6
    if np.linalg.matrix_rank(gens) != dim:
        raise GeometryError(f"{kind} generators do not span the target space")
    # exact center reconstruction in rational arithmetic
    for i in range(3):
        for j in range(3):
            s = sum((c * g[i][j] for c, g in zip(base_fracs, exact_gen)), Fraction(0))
            if s != (1 if (kind == "sym" and i == j) else 0):
                raise GeometryError(f"{kind} base coefficients do not reconstruct the center")
    if min(base_fracs) <= 0:
        raise GeometryError("base coefficients must be positive")
    base = np.array([float(c) for c in base_fracs])
    pinv = np.linalg.pinv(gens)
    radius = certified_radius(base, pinv)
    if radius <= 0:
        raise GeometryError("admissible radius is not positive")
    return DirectionSet(kind, triples, base, center.ravel(), gens, pinv, radius,
                        POSITIVITY_FLOOR * float(base.min()))


def _exact_skew(t: DirectionTriple):
    return [[t.kb[i] * t.kbb[j] - t.kbb[i] * t.kb[j] for j in range(3)] for i in range(3)]


def _exact_sym(t: DirectionTriple):
    return [[t.kb[i] * t.kb[j] for j in range(3)] for i in range(3)]


@lru_cache(maxsize=None)
def build_direction_set(kind: str) -> DirectionSet:
    """Compiled-in skew (Λ_b) or symmetric (Λ_u) direction set."""
    if kind == "skew":
        return _assemble("skew", _SKEW_FRAMES, _SKEW_BASE)
    if kind == "sym":
        return _assemble("sym", _SYM_FRAMES, _SYM_BASE)
    raise GeometryError(f"unknown direction set kind {kind!r}")


def _check_single(M: np.ndarray, kind: str) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.shape != (3, 3):
        raise GeometryError("expected a 3x3 matrix")
    scale = max(1.0, float(np.abs(M).max()))
    if kind == "skew" and np.abs(M + M.T).max() > 1e-12 * scale:
        raise GeometryError("input is not antisymmetric")
    if kind == "sym" and np.abs(M - M.T).max() > 1e-12 * scale:
        raise GeometryError("input is not symmetric")
    return M


def decompose_skew(M: np.ndarray, S: DirectionSet | None = None) -> np.ndarray:
    """Positive coefficients with sum_k a_k (k̄⊗k̄̄ - k̄̄⊗k̄) = M."""
    S = S or build_direction_set("skew")
    return S.coefficients(_check_single(M, "skew"))


def decompose_sym(R: np.ndarray, S: DirectionSet | None = None) -> np.ndarray:
    """Positive coefficients with sum_k a_k k̄⊗k̄ = R."""
    S = S or build_direction_set("sym")
    return S.coefficients(_check_single(R, "sym"))


def sphere_check(S: DirectionSet, samples: int, rng: np.random.Generator,
                 radius: float | None = None) -> float:
    """Minimum coefficient over random points of the admissible sphere."""
    r = S.radius if radius is None else radius
    basis = _subspace_basis(S.kind)
    z = rng.standard_normal((samples, basis.shape[0]))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    pts = (z @ basis) * r + S.center
    coeffs = S.base[None, :] + (pts - S.center) @ S.pinv.T
    return float(coeffs.min())


def _subspace_basis(kind: str) -> np.ndarray:
    """Orthonormal basis (rows, flattened 3x3) of the skew or symmetric matrices."""
    rows = []
    for i in range(3):
        for j in range(i, 3):
            m = np.zeros((3, 3))
            if kind == "skew":
                if i == j:
                    continue
                m[i, j], m[j, i] = 1 / np.sqrt(2), -1 / np.sqrt(2)
            elif i == j:
                m[i, i] = 1.0
            else:
                m[i, j] = m[j, i] = 1 / np.sqrt(2)
            rows.append(m.ravel())
    return np.array(rows)


def random_admissible(S: DirectionSet, count: int, rng: np.random.Generator,
                      fraction: float = 1.0) -> np.ndarray:
    """Random matrices uniformly distributed in the admissible ball (count, 3, 3)."""
    basis = _subspace_basis(S.kind)
    d = basis.shape[0]
    z = rng.standard_normal((count, d))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    rad = S.radius * fraction * rng.random(count) ** (1.0 / d)
    pts = (z * rad[:, None]) @ basis + S.center
    return pts.reshape(count, 3, 3)
