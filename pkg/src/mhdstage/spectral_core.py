"""Periodic fields on the unit torus with exact Fourier calculus.

Fields are stored as real-FFT coefficient arrays normalized so that the zero
mode equals the spatial mean.  The Nyquist planes are kept at zero, so every
Fourier multiplier used here (derivatives, projectors, inverse divergences)
acts exactly and preserves real-valuedness.

Products are Galerkin products: both factors are evaluated on a 3/2 padded
grid, multiplied pointwise and projected back onto the stored band.  This is
the alias-free form of the 2/3 truncation rule, and it keeps the discrete
product rule exact, which the corrector identities rely on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.fft as sfft

TWO_PI = 2.0 * np.pi
RANKS = {"scalar": (), "vector": (3,), "tensor": (3, 3)}
FLAGS = frozenset({"mean-free", "divergence-free", "symmetric", "antisymmetric", "trace-free"})


class SpectralError(ValueError):
    """Raised when an operator precondition fails."""


@dataclass(frozen=True)
class Grid3:
    """Uniform N^3 grid on the unit torus."""

    n: int

    def __post_init__(self):
        if self.n < 4 or self.n & (self.n - 1):
            raise SpectralError(f"resolution must be a power of two >= 4, got {self.n}")

    @property
    def spacing(self) -> float:
        return 1.0 / self.n

    @property
    def band(self) -> int:
        """Largest stored integer frequency per axis."""
        return self.n // 2 - 1

    @property
    def padded(self) -> int:
        return 3 * self.n // 2

    @property
    def spectral_shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n // 2 + 1)

    @cached_property
    def kint(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Integer wavenumbers broadcast to the spectral shape."""
        kx = np.fft.fftfreq(self.n, 1.0 / self.n)
        kz = np.fft.rfftfreq(self.n, 1.0 / self.n)
        return (kx[:, None, None], kx[None, :, None], kz[None, None, :])

    @cached_property
    def xi(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Angular wavenumbers 2*pi*k."""
        return tuple(TWO_PI * k for k in self.kint)

    @cached_property
    def xi2(self) -> np.ndarray:
        x, y, z = self.xi
        return x * x + y * y + z * z

    @cached_property
    def inv_xi2(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            out = np.where(self.xi2 > 0, 1.0 / np.where(self.xi2 > 0, self.xi2, 1.0), 0.0)
        return out

    @cached_property
    def kabs(self) -> np.ndarray:
        x, y, z = self.kint
        return np.sqrt(x * x + y * y + z * z)

    @cached_property
    def band_mask(self) -> np.ndarray:
        """True on stored modes (Nyquist planes excluded)."""
        h = self.n // 2
        x, y, z = self.kint
        return (np.abs(x) < h) & (np.abs(y) < h) & (np.abs(z) < h)

    @cached_property
    def weights(self) -> np.ndarray:
        """Multiplicity of each rfft coefficient in a full-spectrum sum."""
        w = np.full(self.spectral_shape, 2.0)
        w[..., 0] = 1.0
        w[..., -1] = 1.0
        return w * self.band_mask

    @cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        s = np.arange(self.n) / self.n
        return (s[:, None, None], s[None, :, None], s[None, None, :])

    @cached_property
    def _pad_index(self):
        h = self.n // 2
        m = self.padded
        lo = np.arange(0, h)
        hi_src = np.arange(self.n - h + 1, self.n)
        hi_dst = np.arange(m - h + 1, m)
        src = np.concatenate([lo, hi_src])
        dst = np.concatenate([lo, hi_dst])
        return src, dst, h

    # -- transforms -------------------------------------------------------
    def forward(self, values: np.ndarray) -> np.ndarray:
        """Real samples on the N grid -> band-limited coefficients."""
        c = sfft.rfftn(values, axes=(-3, -2, -1)) / self.n**3
        return c * self.band_mask

    def inverse(self, coef: np.ndarray) -> np.ndarray:
        """Coefficients -> real samples on the N grid."""
        return sfft.irfftn(coef, s=(self.n,) * 3, axes=(-3, -2, -1)) * self.n**3

    def to_padded(self, coef: np.ndarray) -> np.ndarray:
        """Coefficients -> real samples on the 3/2 padded grid."""
        src, dst, h = self._pad_index
        m = self.padded
        big = np.zeros(coef.shape[:-3] + (m, m, m // 2 + 1), dtype=complex)
        big[..., dst[:, None], dst[None, :], :h] = coef[..., src[:, None], src[None, :], :h]
        return sfft.irfftn(big, s=(m, m, m), axes=(-3, -2, -1)) * m**3

    def from_padded(self, values: np.ndarray) -> np.ndarray:
        """Real samples on the padded grid -> projection onto the stored band."""
        src, dst, h = self._pad_index
        m = self.padded
        big = sfft.rfftn(values, axes=(-3, -2, -1)) / m**3
        out = np.zeros(big.shape[:-3] + self.spectral_shape, dtype=complex)
        out[..., src[:, None], src[None, :], :h] = big[..., dst[:, None], dst[None, :], :h]
        return out

    def padded_coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        s = np.arange(self.padded) / self.padded
        return (s[:, None, None], s[None, :, None], s[None, None, :])

    # -- exact multipliers on raw coefficient arrays -----------------------
    def d(self, coef: np.ndarray, axis: int) -> np.ndarray:
        return 1j * self.xi[axis] * coef

    def grad(self, coef: np.ndarray) -> np.ndarray:
        return np.stack([self.d(coef, a) for a in range(3)], axis=-4)

    def div(self, coef: np.ndarray) -> np.ndarray:
        """Contract the first tensor index: (div M)_i = d_j M_{ji}."""
        return sum(self.d(coef[a], a) for a in range(3))

    def curl(self, coef: np.ndarray) -> np.ndarray:
        d = self.d
        return np.stack([
            d(coef[2], 1) - d(coef[1], 2),
            d(coef[0], 2) - d(coef[2], 0),
            d(coef[1], 0) - d(coef[0], 1),
        ])

    def lap(self, coef: np.ndarray) -> np.ndarray:
        return -self.xi2 * coef

    def inv_lap(self, coef: np.ndarray) -> np.ndarray:
        return -self.inv_xi2 * coef

    def leray(self, coef: np.ndarray) -> np.ndarray:
        x = self.xi
        dot = (x[0] * coef[0] + x[1] * coef[1] + x[2] * coef[2]) * self.inv_xi2
        out = np.stack([coef[a] - x[a] * dot for a in range(3)])
        out[:, 0, 0, 0] = coef[:, 0, 0, 0]
        return out

    def inv_div_sym(self, coef: np.ndarray) -> np.ndarray:
        """Symmetric trace-free right inverse of div on mean-free vectors."""
        x = self.xi
        q = self.inv_xi2
        dot = (x[0] * coef[0] + x[1] * coef[1] + x[2] * coef[2]) * q
        out = np.empty((3, 3) + coef.shape[1:], dtype=complex)
        for a in range(3):
            for b in range(a, 3):
                v = -1j * (x[a] * coef[b] + x[b] * coef[a]) * q
                v = v + 0.5j * ((a == b) + x[a] * x[b] * q) * dot
                out[a, b] = v
                out[b, a] = v
        out[..., 0, 0, 0] = 0.0
        return out

    def inv_div_antisym(self, coef: np.ndarray) -> np.ndarray:
        """Antisymmetric right inverse of div on mean-free divergence-free vectors."""
        x = self.xi
        q = self.inv_xi2
        out = np.zeros((3, 3) + coef.shape[1:], dtype=complex)
        for a in range(3):
            for b in range(a + 1, 3):
                v = -1j * (x[a] * coef[b] - x[b] * coef[a]) * q
                out[a, b] = v
                out[b, a] = -v
        return out

    def divdiv_over_lap(self, coef: np.ndarray) -> np.ndarray:
        """Scalar (div div / Laplacian) of a tensor field."""
        x = self.xi
        acc = sum(x[a] * x[b] * coef[a, b] for a in range(3) for b in range(3))
        return acc * self.inv_xi2

    # -- products ------------------------------------------------------------
    def product(self, f: np.ndarray, g: np.ndarray) -> np.ndarray:
        """Galerkin product of two scalar coefficient arrays."""
        return self.from_padded(self.to_padded(f) * self.to_padded(g))

    def outer(self, u: np.ndarray, w: np.ndarray) -> np.ndarray:
        """Galerkin (u ⊗ w)_{ij} = u_i w_j for vector coefficient arrays."""
        pu = self.to_padded(u)
        pw = pu if w is u else self.to_padded(w)
        return self.from_padded(pu[:, None] * pw[None, :])

    # -- quadratic forms -----------------------------------------------------
    def l2_sq(self, coef: np.ndarray) -> float:
        """Parseval: spatial mean of |f|^2 (summed over components)."""
        return float(np.sum(self.weights * np.abs(coef) ** 2))

    def hs_sq(self, coef: np.ndarray, s: float) -> float:
        w = self.weights * (1.0 + self.xi2) ** s
        return float(np.sum(w * np.abs(coef) ** 2))


def random_field(grid: Grid3, rank: str, rng: np.random.Generator, kmax: int | None = None,
                 mean_free: bool = True) -> np.ndarray:
    """Smooth random real field coefficients with optional frequency cutoff."""
    shape = RANKS[rank] + (grid.n,) * 3
    c = grid.forward(rng.standard_normal(shape))
    decay = 1.0 / (1.0 + grid.kabs**2)
    c = c * decay
    if kmax is not None:
        c = c * (grid.kabs <= kmax)
    if mean_free:
        c[..., 0, 0, 0] = 0.0
    return c


# ---------------------------------------------------------------------------
# Field objects
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectralField:
    """Real field on the torus, canonical data are Fourier coefficients."""

    grid: Grid3
    rank: str
    coef: np.ndarray
    flags: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.rank not in RANKS:
            raise SpectralError(f"unknown rank {self.rank!r}")
        want = RANKS[self.rank] + self.grid.spectral_shape
        if self.coef.shape != want:
            raise SpectralError(f"coefficient shape {self.coef.shape} does not match {want}")
        bad = set(self.flags) - FLAGS
        if bad:
            raise SpectralError(f"unknown flags {sorted(bad)}")
        object.__setattr__(self, "flags", frozenset(self.flags))
        for flag in self.flags:
            err = flag_residual(self, flag)
            if err > 1e-12:
                raise SpectralError(f"flag {flag!r} violated (relative residual {err:.3e})")

    @classmethod
    def from_values(cls, grid: Grid3, rank: str, values: np.ndarray, flags: Iterable[str] = ()):
        return cls(grid, rank, grid.forward(np.asarray(values, dtype=float)), frozenset(flags))

    @classmethod
    def zeros(cls, grid: Grid3, rank: str, flags: Iterable[str] = ()):
        return cls(grid, rank, np.zeros(RANKS[rank] + grid.spectral_shape, dtype=complex), frozenset(flags))

    @cached_property
    def values(self) -> np.ndarray:
        return self.grid.inverse(self.coef)

    def with_coef(self, coef: np.ndarray, rank: str | None = None, flags: Iterable[str] = ()):
        return SpectralField(self.grid, rank or self.rank, coef, frozenset(flags))

    def __add__(self, other: "SpectralField") -> "SpectralField":
        return self.with_coef(self.coef + other.coef, flags=self.flags & other.flags)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        return self.with_coef(self.coef - other.coef, flags=self.flags & other.flags)

    def scale(self, c: float) -> "SpectralField":
        return self.with_coef(c * self.coef, flags=self.flags)


def _rel(num: float, den: float) -> float:
    return num / den if den > 0 else num


def flag_residual(f: SpectralField, flag: str) -> float:
    g = f.grid
    c = f.coef
    scale = np.sqrt(g.l2_sq(c))
    if flag == "mean-free":
        return _rel(float(np.max(np.abs(c[..., 0, 0, 0]))), scale)
    if flag == "divergence-free":
        if f.rank == "scalar":
            raise SpectralError("divergence-free flag needs a vector or tensor")
        grad_scale = np.sqrt(g.l2_sq(np.sqrt(g.xi2) * c))
        return _rel(np.sqrt(g.l2_sq(g.div(c))), grad_scale)
    if f.rank != "tensor":
        raise SpectralError(f"flag {flag!r} needs a tensor field")
    if flag == "symmetric":
        return _rel(np.sqrt(g.l2_sq(c - np.swapaxes(c, 0, 1))), scale)
    if flag == "antisymmetric":
        return _rel(np.sqrt(g.l2_sq(c + np.swapaxes(c, 0, 1))), scale)
    if flag == "trace-free":
        return _rel(np.sqrt(g.l2_sq(c[0, 0] + c[1, 1] + c[2, 2])), scale)
    raise SpectralError(f"unknown flag {flag!r}")


def _require_mean_free(f: SpectralField, what: str, tol: float = 1e-12):
    scale = np.sqrt(f.grid.l2_sq(f.coef))
    m = float(np.max(np.abs(f.coef[..., 0, 0, 0])))
    if m > tol * max(scale, 1.0):
        raise SpectralError(f"{what} needs a mean-free input (mean magnitude {m:.3e})")


def differential_op(f: SpectralField, op: str) -> SpectralField:
    """Apply grad, div, curl, laplacian or inv_laplacian exactly."""
    g = f.grid
    if op == "grad":
        if f.rank == "tensor":
            raise SpectralError("grad of a tensor field is not supported")
        rank = "vector" if f.rank == "scalar" else "tensor"
        return f.with_coef(g.grad(f.coef) if f.rank == "scalar" else np.moveaxis(g.grad(f.coef), 1, 0),
                           rank=rank, flags={"mean-free"})
    if op == "div":
        if f.rank == "scalar":
            raise SpectralError("div needs a vector or tensor field")
        rank = "scalar" if f.rank == "vector" else "vector"
        return f.with_coef(g.div(f.coef), rank=rank, flags={"mean-free"})
    if op == "curl":
        if f.rank != "vector":
            raise SpectralError("curl needs a vector field")
        return f.with_coef(g.curl(f.coef), flags={"mean-free", "divergence-free"})
    if op == "laplacian":
        return f.with_coef(g.lap(f.coef), flags=f.flags | {"mean-free"})
    if op == "inv_laplacian":
        _require_mean_free(f, "inv_laplacian")
        return f.with_coef(g.inv_lap(f.coef), flags=f.flags | {"mean-free"})
    raise SpectralError(f"unknown operator {op!r}")


def leray_project(v: SpectralField) -> SpectralField:
    if v.rank != "vector":
        raise SpectralError("leray_project needs a vector field")
    _require_mean_free(v, "leray_project")
    c = v.grid.leray(v.coef)
    c[:, 0, 0, 0] = 0.0
    return v.with_coef(c, flags={"mean-free", "divergence-free"})


def inverse_divergence_sym(v: SpectralField) -> SpectralField:
    if v.rank != "vector":
        raise SpectralError("inverse_divergence_sym needs a vector field")
    _require_mean_free(v, "inverse_divergence_sym")
    return SpectralField(v.grid, "tensor", v.grid.inv_div_sym(v.coef),
                         frozenset({"mean-free", "symmetric", "trace-free"}))


def inverse_divergence_antisym(u: SpectralField, tol: float = 1e-10) -> SpectralField:
    if u.rank != "vector":
        raise SpectralError("inverse_divergence_antisym needs a vector field")
    _require_mean_free(u, "inverse_divergence_antisym")
    err = flag_residual(u, "divergence-free")
    if err > tol:
        raise SpectralError(f"inverse_divergence_antisym needs a divergence-free input (residual {err:.3e})")
    return SpectralField(u.grid, "tensor", u.grid.inv_div_antisym(u.coef),
                         frozenset({"mean-free", "antisymmetric"}))


# ---------------------------------------------------------------------------
# Norms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NormSpec:
    """Norm descriptor.

    kind is one of "Lp", "LpLq" (time L^p of space L^q), "Hs", "Besov", "Holder".
    """

    kind: str
    p: float = 2.0
    q: float = 2.0
    s: float = 0.0
    eps: float = 0.5

    def validate(self):
        if self.kind not in ("Lp", "LpLq", "Hs", "Besov", "Holder"):
            raise SpectralError(f"unknown norm kind {self.kind!r}")
        if self.kind in ("Lp", "LpLq", "Besov") and not (self.p >= 1 and self.q >= 1):
            raise SpectralError("norm exponents must be >= 1")
        if self.kind in ("Hs", "Besov") and self.s < 0 and self.kind == "Hs":
            raise SpectralError("Sobolev index must be >= 0")
        if self.kind == "Holder" and not (0 < self.eps < 1):
            raise SpectralError("Hölder exponent 1-eps must lie in (0,1)")

    def label(self) -> str:
        if self.kind == "Lp":
            return f"L{_fmt(self.p)}"
        if self.kind == "LpLq":
            return f"L{_fmt(self.p)}_t L{_fmt(self.q)}_x"
        if self.kind == "Hs":
            return f"H{_fmt(self.s)}"
        if self.kind == "Besov":
            return f"B{_fmt(self.s)}_{_fmt(self.p)},{_fmt(self.q)}"
        return f"C{_fmt(1 - self.eps)}"


def _fmt(x: float) -> str:
    if np.isinf(x):
        return "inf"
    return f"{x:g}"


def pointwise_magnitude(values: np.ndarray) -> np.ndarray:
    """Euclidean / Frobenius magnitude over the leading component axes."""
    if values.ndim == 3:
        return np.abs(values)
    comp = values.reshape((-1,) + values.shape[-3:])
    return np.sqrt(np.sum(comp * comp, axis=0))


def lp_of_values(values: np.ndarray, p: float) -> float:
    mag = pointwise_magnitude(values)
    if np.isinf(p):
        return float(mag.max())
    return float(np.mean(mag**p) ** (1.0 / p))


def dyadic_blocks(grid: Grid3, coef: np.ndarray) -> list[np.ndarray]:
    """Sharp Littlewood-Paley blocks 2^{j-1} <= |k| < 2^j (block 0 is the mean)."""
    kabs = grid.kabs
    blocks = [coef * (kabs < 1)]
    j = 1
    while 2 ** (j - 1) <= kabs.max():
        mask = (kabs >= 2 ** (j - 1)) & (kabs < 2**j)
        blocks.append(coef * mask)
        j += 1
    return blocks


def besov_norm(grid: Grid3, coef: np.ndarray, s: float, p: float, q: float) -> float:
    terms = []
    for j, blk in enumerate(dyadic_blocks(grid, coef)):
        terms.append(2.0 ** (j * s) * lp_of_values(grid.inverse(blk), p))
    terms = np.array(terms)
    if np.isinf(q):
        return float(terms.max())
    return float(np.sum(terms**q) ** (1.0 / q))


def compute_norm(f: SpectralField, spec: NormSpec) -> float:
    """Evaluate a spatial norm of a field."""
    spec.validate()
    g = f.grid
    if spec.kind == "Lp":
        if spec.p == 2:
            return float(np.sqrt(g.l2_sq(f.coef)))
        return lp_of_values(f.values, spec.p)
    if spec.kind == "Hs":
        return float(np.sqrt(g.hs_sq(f.coef, spec.s)))
    if spec.kind == "Besov":
        return besov_norm(g, f.coef, spec.s, spec.p, spec.q)
    if spec.kind == "Holder":
        return besov_norm(g, f.coef, 1.0 - spec.eps, np.inf, np.inf)
    raise SpectralError("time-composite norms need time samples; use time_norm")


def trapezoid_weights(times: Sequence[float]) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    if t.size == 1:
        return np.ones(1)
    w = np.zeros_like(t)
    dt = np.diff(t)
    w[:-1] += dt / 2
    w[1:] += dt / 2
    return w


def time_norm(spatial_values: Sequence[float], weights: np.ndarray, p: float) -> float:
    """L^p in time of per-sample spatial norms, by quadrature."""
    a = np.asarray(spatial_values, dtype=float)
    if np.any(~np.isfinite(a)) or np.any(a < 0):
        raise SpectralError("spatial norms must be finite and nonnegative")
    if np.isinf(p):
        return float(a.max()) if a.size else 0.0
    return float(np.sum(weights * a**p) ** (1.0 / p))


# ---------------------------------------------------------------------------
# Field dump format
# ---------------------------------------------------------------------------

class FieldDumpWriter:
    """Streaming writer for the field dump format, one time sample at a time.

    Samples are real arrays of shape (C, N, N, N) or (N, N, N); they are stored
    with axis order (t, x1, x2, x3, component) as little-endian float64.
    """

    def __init__(self, path: str | Path, grid: Grid3, name: str):
        self.path = Path(path)
        self.grid = grid
        self.name = name
        self.times: list[float] = []
        self.components: int | None = None
        self.data = self.path.with_suffix(".bin")
        self.meta = self.path.with_suffix(".meta.txt")
        self._fh = open(self.data, "wb")

    def append(self, t: float, values: np.ndarray):
        n = self.grid.n
        arr = np.asarray(values, dtype=float).reshape(-1, n, n, n)
        if self.components is None:
            self.components = arr.shape[0]
        elif arr.shape[0] != self.components:
            raise SpectralError("component count changed between dump samples")
        np.moveaxis(arr, 0, -1).astype("<f8").tofile(self._fh)
        self.times.append(float(t))

    def close(self, flags: Iterable[str] = ()) -> tuple[Path, Path]:
        self._fh.close()
        n = self.grid.n
        shape = (len(self.times), n, n, n, self.components or 1)
        lines = [
            f"name={self.name}",
            "dtype=float64-little-endian",
            "axis_order=t,x1,x2,x3,component",
            "shape=" + ",".join(str(s) for s in shape),
            f"spacing={self.grid.spacing!r}",
            "times=" + ",".join(repr(t) for t in self.times),
            "flags=" + ",".join(sorted(flags)),
        ]
        self.meta.write_text("\n".join(lines) + "\n")
        return self.data, self.meta


def write_field_dump(path: str | Path, samples: np.ndarray, times: Sequence[float],
                     grid: Grid3, name: str, flags: Iterable[str] = ()) -> tuple[Path, Path]:
    """Write real samples with axis order (t, x1, x2, x3, component).

    samples must have shape (T, C, N, N, N) or (T, N, N, N) for scalars.
    """
    arr = np.asarray(samples, dtype=float)
    if len(times) != arr.shape[0]:
        raise SpectralError("one time per sample is required")
    w = FieldDumpWriter(path, grid, name)
    for t, a in zip(times, arr):
        w.append(t, a)
    return w.close(flags)


def read_field_dump(path: str | Path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    meta = {}
    for line in path.with_suffix(".meta.txt").read_text().splitlines():
        k, _, v = line.partition("=")
        meta[k] = v
    shape = tuple(int(s) for s in meta["shape"].split(","))
    data = np.fromfile(path.with_suffix(".bin"), dtype="<f8").reshape(shape)
    return data, meta


# ---------------------------------------------------------------------------
# Decorrelation of a slow factor against a fast periodic factor
# ---------------------------------------------------------------------------

def _midpoints(n) -> list[np.ndarray]:
    shape = (n,) * 3 if np.isscalar(n) else tuple(n)
    axes = [(np.arange(m) + 0.5) / m for m in shape]
    return np.meshgrid(*axes, indexing="ij")


def decorrelation_gap(f, g, lam: int, p: float, n) -> float:
    """| ||f g(lam .)||_p - ||f||_p ||g||_p | by midpoint quadrature.

    f and g are callables of the three coordinate arrays; lam must be an
    integer so that g(lam x) stays 1-periodic.  n is the points per axis,
    an int or a triple (a factor that ignores x3 needs a single point there).
    """
    if int(lam) != lam or lam < 1:
        raise SpectralError("the fast scale must be a positive integer")
    X = _midpoints(n)
    fv = np.asarray(f(*X), dtype=float)
    gv = np.asarray(g(*X), dtype=float)
    gl = np.asarray(g(*(np.mod(lam * c, 1.0) for c in X)), dtype=float)
    return abs(lp_of_values(fv * gl, p) - lp_of_values(fv, p) * lp_of_values(gv, p))


@dataclass(frozen=True)
class DecorrelationFit:
    lams: tuple[int, ...]
    gaps: tuple[float, ...]
    bounds: tuple[float, ...]       # lam^{-1/p} ||f||_{C^1} ||g||_{L^p}
    constant: float                 # smallest C with gap <= C * bound on the sweep
    slope: float                    # least-squares log-log slope of the gaps

    def predicted_slope(self, p: float) -> float:
        return -1.0 / p


def decorrelation_sweep(f, g, lams: Sequence[int], p: float, n, f_c1: float) -> DecorrelationFit:
    """Gap over a sweep of fast scales, the fitted constant and the observed slope.

    f_c1 is ||f||_{C^1} = sup|f| + sup|grad f|, supplied by the caller.
    """
    X = _midpoints(n)
    gnorm = lp_of_values(np.asarray(g(*X), dtype=float), p)
    gaps = [decorrelation_gap(f, g, lam, p, n) for lam in lams]
    exp = 0.0 if np.isinf(p) else 1.0 / p
    bounds = [lam ** (-exp) * f_c1 * gnorm for lam in lams]
    const = max(a / b for a, b in zip(gaps, bounds))
    tiny = np.finfo(float).tiny
    slope = float(np.polyfit(np.log(np.asarray(lams, float)), np.log(np.maximum(gaps, tiny)), 1)[0])
    return DecorrelationFit(tuple(int(l) for l in lams), tuple(gaps), tuple(bounds), const, slope)
