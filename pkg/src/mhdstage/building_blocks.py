"""Intermittent shear flows, temporal concentration profiles and time cutoffs.

Everything here is built from two smooth scalar profiles:

* the bump ``phi`` supported in [0, 1/2] with unit L^2 norm, built from
  exp(-1/(x(1/2 - x))), and its periodized rescalings ``phi_r``;
* the C-infinity smoothstep S(s) = e(s) / (e(s) + e(1 - s)), e(s) = exp(-1/s),
  which generates every time cutoff (partition of unity, eta, amplitude
  cutoff).

Spatial building blocks depend on x only through n.x for an integer vector n,
so their Fourier coefficients sit on the line Z n.  Norms of such fields equal
the 1D norms of the profile (the map x -> n.x pushes Lebesgue measure on the
3-torus to Lebesgue measure on the circle), which is how the scaling laws are
measured without resolving the concentration on a 3D grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path

import numpy as np
from scipy.integrate import quad
from scipy.special import roots_legendre

from .geometry import DirectionTriple
from .spectral_core import Grid3, SpectralError, TWO_PI

# ---------------------------------------------------------------------------
# Smoothstep
# ---------------------------------------------------------------------------


def _e(s: np.ndarray) -> np.ndarray:
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos])
    return out


def smoothstep(s, order: int = 0) -> np.ndarray:
    """C-infinity step from 0 (s <= 0) to 1 (s >= 1) and its first two derivatives."""
    s = np.asarray(s, dtype=float)
    c = np.clip(s, 0.0, 1.0)
    a, b = _e(c), _e(1.0 - c)
    val = a / (a + b)
    if order == 0:
        return val
    inner = (s > 0) & (s < 1)
    si = np.where(inner, s, 0.5)
    q = 1.0 / si**2 + 1.0 / (1.0 - si) ** 2
    d1 = np.where(inner, val * (1.0 - val) * q, 0.0)
    if order == 1:
        return d1
    if order == 2:
        dq = -2.0 / si**3 + 2.0 / (1.0 - si) ** 3
        return np.where(inner, d1 * (1.0 - 2.0 * val) * q + val * (1.0 - val) * dq, 0.0)
    raise ValueError("order must be 0, 1 or 2")


def ramp(t, start: float, stop: float, order: int = 0) -> np.ndarray:
    """Smoothstep rising from 0 at ``start`` to 1 at ``stop``."""
    w = stop - start
    return smoothstep((np.asarray(t, dtype=float) - start) / w, order) / w**order


# ---------------------------------------------------------------------------
# Spatial bump and its rescalings
# ---------------------------------------------------------------------------


def _bump_raw(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = (x > 0) & (x < 0.5)
    xi = x[inside]
    out[inside] = np.exp(-1.0 / (xi * (0.5 - xi)))
    return out


def _bump_raw_deriv(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = (x > 0) & (x < 0.5)
    xi = x[inside]
    u = xi * (0.5 - xi)
    out[inside] = np.exp(-1.0 / u) * (0.5 - 2.0 * xi) / u**2
    return out


@lru_cache(maxsize=None)
def _bump_scale() -> float:
    val, _ = quad(lambda x: float(_bump_raw(np.array([x]))[0]) ** 2, 0.0, 0.5,
                  epsabs=0.0, epsrel=1e-13, limit=200)
    return 1.0 / math.sqrt(val)


def bump(x, order: int = 0) -> np.ndarray:
    """Profile supported in [0, 1/2] with unit L^2 norm on the line."""
    if order == 0:
        return _bump_scale() * _bump_raw(x)
    if order == 1:
        return _bump_scale() * _bump_raw_deriv(x)
    raise ValueError("order must be 0 or 1")


@lru_cache(maxsize=None)
def _gauss_nodes(npts: int = 24):
    return roots_legendre(npts)


@lru_cache(maxsize=None)
def _energy_table(cells: int = 2048):
    """Cumulative integral C(y) = int_0^y phi^2 at cell edges of [0, 1/2]."""
    edges = np.linspace(0.0, 0.5, cells + 1)
    x, w = _gauss_nodes()
    a, b = edges[:-1, None], edges[1:, None]
    pts = 0.5 * (b - a) * x[None, :] + 0.5 * (a + b)
    cell = 0.5 * (b - a)[:, 0] * np.sum(w[None, :] * bump(pts) ** 2, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(cell)])
    return edges, cum


def bump_energy(y) -> np.ndarray:
    """C(y) = int_0^y phi(s)^2 ds, exact up to Gauss-Legendre round-off."""
    y = np.asarray(y, dtype=float)
    edges, cum = _energy_table()
    yc = np.clip(y, 0.0, 0.5)
    idx = np.clip(np.searchsorted(edges, yc, side="right") - 1, 0, len(edges) - 2)
    a = edges[idx]
    x, w = _gauss_nodes()
    half = 0.5 * (yc - a)
    pts = half[..., None] * (x + 1.0) + a[..., None]
    partial = half * np.sum(w * bump(pts) ** 2, axis=-1)
    return cum[idx] + partial


@dataclass(frozen=True)
class CutoffProfile:
    """Periodized rescaling phi_r(x) = r^{-1/2} phi(x / r) on the unit circle."""

    r: float

    def __post_init__(self):
        if not (0 < self.r <= 1):
            raise SpectralError(f"scale r must lie in (0, 1], got {self.r}")

    def __call__(self, x, order: int = 0) -> np.ndarray:
        s = np.mod(np.asarray(x, dtype=float), 1.0)
        return self.r ** (-0.5 - order) * bump(s / self.r, order)

    def energy(self, x) -> np.ndarray:
        """int_0^x phi_r^2 for x in [0, 1)."""
        return bump_energy(np.asarray(x, dtype=float) / self.r)

    @property
    def support_length(self) -> float:
        return self.r / 2

    def norm(self, p: float, order: int = 0) -> float:
        """L^p norm on the circle of the profile or its derivative."""
        x, w = _gauss_nodes()
        edges = np.linspace(0.0, self.r / 2, 1025)
        a, b = edges[:-1, None], edges[1:, None]
        pts = 0.5 * (b - a) * x + 0.5 * (a + b)
        vals = np.abs(self(pts, order))
        if np.isinf(p):
            fine = np.linspace(0.0, self.r / 2, 200001)
            return float(np.max(np.abs(self(fine, order))))
        return float(np.sum(0.5 * (b - a)[:, 0] * np.sum(w * vals**p, axis=1)) ** (1.0 / p))

    def fourier(self, lmax: int) -> np.ndarray:
        """Coefficients c_l, l = 0..lmax, with phi_r(x) = sum_l c_l e^{2 pi i l x}."""
        x, w = _gauss_nodes()
        edges = np.linspace(0.0, self.r / 2, 513)
        a, b = edges[:-1, None], edges[1:, None]
        pts = (0.5 * (b - a) * x + 0.5 * (a + b)).ravel()
        wts = (0.5 * (b - a) * w).ravel()
        ls = np.arange(lmax + 1)
        kern = np.exp(-1j * TWO_PI * ls[:, None] * pts[None, :])
        return kern @ (wts * self(pts))

    def sample(self, count: int = 2048) -> tuple[np.ndarray, np.ndarray]:
        s = np.arange(count) / count
        return s, self(s)


def make_phi_r(r: float) -> CutoffProfile:
    """Rescaled bump with unit L^2 norm on the circle.

    The rescaled support [0, r/2] fits inside one period for every r <= 1,
    which is the precondition checked here.
    """
    return CutoffProfile(float(r))


# ---------------------------------------------------------------------------
# Oscillating profile psi and its potentials
# ---------------------------------------------------------------------------

SQRT2 = math.sqrt(2.0)


def psi(s, order: int = 0) -> np.ndarray:
    """psi(s) = sqrt2 cos(2 pi s): unit L^2 norm, mean zero, psi = Psi''."""
    s = np.asarray(s, dtype=float)
    if order == 0:
        return SQRT2 * np.cos(TWO_PI * s)
    if order == 1:
        return -SQRT2 * TWO_PI * np.sin(TWO_PI * s)
    raise ValueError("order must be 0 or 1")


def big_psi(s, order: int = 0) -> np.ndarray:
    """Psi with Psi'' = psi; order 1 returns Psi'."""
    s = np.asarray(s, dtype=float)
    if order == 0:
        return -SQRT2 * np.cos(TWO_PI * s) / TWO_PI**2
    if order == 1:
        return SQRT2 * np.sin(TWO_PI * s) / TWO_PI
    raise ValueError("order must be 0 or 1")


# ---------------------------------------------------------------------------
# Shear flows on the grid
# ---------------------------------------------------------------------------


def line_field(grid: Grid3, n: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """Coefficient array of sum_l c_l e^{2 pi i l n.x} truncated to the stored band.

    ``coeffs`` holds c_0..c_L for a real profile (c_{-l} = conj c_l).
    """
    n = np.asarray(n, dtype=int)
    out = np.zeros(grid.spectral_shape, dtype=complex)
    band = grid.band
    for sign in (1, -1):
        for ell, c in enumerate(coeffs):
            if ell == 0 and sign < 0:
                continue
            kvec = sign * ell * n
            if np.any(np.abs(kvec) > band):
                continue
            val = c if sign > 0 else np.conj(c)
            kx, ky, kz = (int(v) for v in kvec)
            if kz < 0:
                # the conjugate partner with kz > 0 is the stored one
                continue
            out[kx % grid.n, ky % grid.n, kz] = val
    return out


def _line_harmonics(grid: Grid3, n: np.ndarray) -> int:
    """Largest l with l n inside the stored band."""
    m = int(np.max(np.abs(n)))
    return grid.band // m if m else 0


@dataclass(frozen=True)
class ShearFlow:
    """Shear building block attached to one direction triple.

    phi, psi are scalar coefficient arrays (functions of k.x only), F_kb and
    F_kbb the vector potentials with psi k̄ = lam^{-1} curl F_kb and
    psi k̄̄ = lam^{-1} curl F_kbb.
    """

    triple: DirectionTriple
    gamma: float
    lam: int
    grid: Grid3
    profile: CutoffProfile
    n_phi: np.ndarray
    n_psi: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    F_kb: np.ndarray
    F_kbb: np.ndarray
    tail: float

    @property
    def concentration(self) -> int:
        """Integer spatial frequency multiplier of the bump (rounded sqrt lam)."""
        return int(round(math.sqrt(self.lam)))

    def phi_norm(self, p: float, m: int = 0) -> float:
        """Exact ||D^m phi_k||_{L^p(T^3)} from the 1D profile."""
        return block_norm(self.triple, self.gamma, self.lam, p, m)

    def support_fraction(self) -> float:
        return self.profile.support_length


def block_norm(triple: DirectionTriple, gamma: float, lam: int, p: float, m: int = 0) -> float:
    """||D^m phi_{(gamma,1/2,k)}||_{L^p(T^3)} without building the field.

    The bump depends on x only through n.x with n = round(sqrt lam) N_Λ k, and
    x -> n.x pushes Lebesgue measure forward to Lebesgue measure on the
    circle, so the norm is |n|^m times the 1D norm of phi_r^(m), r = lam^-gamma.
    """
    n_phi, _ = shear_vectors(triple, lam)
    return float(np.linalg.norm(n_phi)) ** m * make_phi_r(lam ** (-gamma)).norm(p, m)


def block_support_fraction(gamma: float, lam: int) -> float:
    """Measure of the support of phi_{(gamma,1/2,k)} on the torus."""
    return make_phi_r(lam ** (-gamma)).support_length


def shear_vectors(triple: DirectionTriple, lam: int) -> tuple[np.ndarray, np.ndarray]:
    m = int(round(math.sqrt(lam)))
    k = triple.k_int
    return m * k, lam * k


def minimal_resolution(triple: DirectionTriple, lam: int) -> int:
    """Smallest power-of-two N whose band holds the psi frequency lam N_Λ k."""
    need = int(np.max(np.abs(lam * triple.k_int)))
    n = 4
    while n // 2 - 1 < need:
        n *= 2
    return n


def make_shear(triple: DirectionTriple, gamma: float, lam: int, grid: Grid3,
               tail_tol: float = 1e-8) -> ShearFlow:
    """Realize phi_{(gamma,1/2,k)}, psi_k and the curl potentials on a grid.

    The bump is phi_r(m N_Λ k.x) with r = lam^{-gamma} and m = round(sqrt lam);
    psi_k = psi(lam N_Λ k.x).  The grid must hold the psi frequency, and the
    L^2 energy of bump harmonics outside the band must not exceed ``tail_tol``.
    """
    if int(lam) != lam or lam < 1:
        raise SpectralError("lam must be a positive integer")
    lam = int(lam)
    nmin = minimal_resolution(triple, lam)
    if grid.n < nmin:
        raise SpectralError(f"grid N={grid.n} does not resolve the oscillation; need N >= {nmin}")
    profile = make_phi_r(lam ** (-gamma))
    n_phi, n_psi = shear_vectors(triple, lam)
    lmax = _line_harmonics(grid, n_phi)
    coeffs = profile.fourier(max(lmax, 0))
    kept = abs(coeffs[0]) ** 2 + 2 * np.sum(np.abs(coeffs[1:]) ** 2)
    tail = max(1.0 - float(kept), 0.0)
    if tail > tail_tol:
        raise SpectralError(
            f"bump truncated: lost L2 energy {tail:.3e} > {tail_tol:.1e}; "
            f"need N >= {_resolution_for_tail(profile, n_phi, tail_tol)}")
    phi = line_field(grid, n_phi, coeffs)
    psi_c = line_field(grid, n_psi, np.array([0.0, SQRT2 / 2]))
    # F = -N^{-1} Psi'(lam N k.x) (k x k̄) so that lam^{-1} curl F = psi k̄
    pot = line_field(grid, n_psi, np.array([0.0, -0.5j * SQRT2 / TWO_PI]))
    nl = triple.n_lambda
    F_kb = -np.cross(triple.k_vec, triple.kb_vec)[:, None, None, None] * pot / nl
    F_kbb = -np.cross(triple.k_vec, triple.kbb_vec)[:, None, None, None] * pot / nl
    return ShearFlow(triple, gamma, lam, grid, profile, n_phi, n_psi, phi, psi_c, F_kb, F_kbb, tail)


def _resolution_for_tail(profile: CutoffProfile, n: np.ndarray, tol: float) -> int:
    coeffs = profile.fourier(4096)
    energy = np.abs(coeffs[0]) ** 2 + 2 * np.cumsum(np.abs(coeffs[1:]) ** 2)
    need = int(np.argmax(1.0 - energy <= tol)) + 1
    m = int(np.max(np.abs(n)))
    size = 4
    while size // 2 - 1 < need * m:
        size *= 2
    return size


# ---------------------------------------------------------------------------
# Temporal profiles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TemporalProfile:
    """Time profile with value and analytic derivatives.

    kind names the realized object (g, h, eta, chi_i, theta_i, cutoff).
    """

    kind: str
    params: dict
    _fn: object = field(repr=False, compare=False)

    def __call__(self, t, order: int = 0) -> np.ndarray:
        return self._fn(np.asarray(t, dtype=float), order)

    def sample(self, times) -> np.ndarray:
        return self(times)


def _temporal_period_count(lam: float, sigma: float, periods: int | None) -> int:
    if periods is not None:
        return int(periods)
    return max(1, int(round(lam**sigma)))


def make_temporal(sigma: float, lam: float, periods: int | None = None,
                  width: float | None = None, samples: int | None = None
                  ) -> tuple[TemporalProfile, TemporalProfile]:
    """g(t) = phi_{r_t}(P t) and h(t) = int_0^t (g^2 - 1).

    P = round(lam^sigma) and r_t = lam^{-2} unless overridden.  h has period
    1/P and h' = g^2 - 1 exactly, with |h| <= 1/P.  When ``samples`` is given
    the time grid must resolve the concentration width r_t / (2P).
    """
    P = _temporal_period_count(lam, sigma, periods)
    r = float(width) if width is not None else float(lam) ** -2
    if P < 1:
        raise SpectralError("period count must be positive")
    prof = make_phi_r(r)
    if samples is not None and samples * r / (2 * P) < 4:
        raise SpectralError(
            f"time grid with {samples} samples does not resolve width {r / (2 * P):.3e}")

    def g(t, order):
        if order == 0:
            return prof(P * t)
        if order == 1:
            return P * prof(P * t, 1)
        raise ValueError("g supports orders 0 and 1")

    def h(t, order):
        s = np.mod(P * t, 1.0)
        if order == 0:
            return (prof.energy(s) - s) / P
        if order == 1:
            return prof(s) ** 2 - 1.0
        raise ValueError("h supports orders 0 and 1")

    params = {"sigma": sigma, "lam": lam, "periods": P, "width": r}
    return TemporalProfile("g", params, g), TemporalProfile("h", params, h)


# ---------------------------------------------------------------------------
# Gluing cutoffs, eta and the amplitude cutoff
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CutoffFamily:
    """Partition of unity chi_1..chi_{W+1} on [0, 1] for the gluing schedule.

    theta_i rises from 0 to 1 across I_i = [t_i + tau/3, t_i + 2tau/3];
    chi_1 = 1 - theta_1, chi_i = theta_{i-1} - theta_i, chi_{W+1} = theta_W.
    """

    T: float
    tau: float
    windows: int

    @cached_property
    def times(self) -> np.ndarray:
        return 2 * self.T + self.tau * np.arange(self.windows + 1)

    def theta(self, i: int, t, order: int = 0) -> np.ndarray:
        ti = self.times[i]
        return ramp(t, ti + self.tau / 3, ti + 2 * self.tau / 3, order)

    def chi(self, i: int, t, order: int = 0) -> np.ndarray:
        """chi_i for 1 <= i <= W + 1."""
        w = self.windows
        if not 1 <= i <= w + 1:
            raise IndexError(i)
        t = np.asarray(t, dtype=float)
        up = self.theta(i - 1, t, order) if i > 1 else (np.ones_like(t) if order == 0 else np.zeros_like(t))
        down = self.theta(i, t, order) if i <= w else np.zeros_like(t)
        return up - down

    def profile(self, i: int) -> TemporalProfile:
        return TemporalProfile(f"chi_{i}", {"T": self.T, "tau": self.tau, "index": i},
                               lambda t, order: self.chi(i, t, order))

    def interval_I(self, i: int) -> tuple[float, float]:
        ti = self.times[i]
        return ti + self.tau / 3, ti + 2 * self.tau / 3

    def interval_J(self, i: int) -> tuple[float, float]:
        ti = self.times[i]
        return ti - self.tau / 3, ti + self.tau / 3


def make_time_cutoffs(T: float, tau: float, windows: int, tol: float = 1e-12
                      ) -> tuple[CutoffFamily, TemporalProfile]:
    """Gluing partition of unity and the perturbation time cutoff eta.

    The schedule t_i = 2T + i tau must end at t_W = 3T - tau.
    """
    if not (0 < tau < T / 4 + 1e-15):
        raise SpectralError(f"need 0 < tau < T/4, got tau={tau}, T={T}")
    if abs(2 * T + windows * tau - (3 * T - tau)) > tol * max(T, 1.0):
        raise SpectralError("schedule inconsistent: t_W must equal 3T - tau")
    fam = CutoffFamily(T, tau, windows)
    return fam, make_eta(T, tau)


def make_eta(T: float, tau: float) -> TemporalProfile:
    """eta = 1 on [2T + 4tau/3, 3T - tau/3], supported in (2T + 7tau/6, 3T - tau/6)."""
    a0, a1 = 2 * T + 7 * tau / 6, 2 * T + 4 * tau / 3
    b0, b1 = 3 * T - tau / 3, 3 * T - tau / 6

    def eta(t, order):
        return _product_rule(ramp(t, a0, a1, 0), ramp(t, a0, a1, 1), ramp(t, a0, a1, 2),
                             1 - ramp(t, b0, b1, 0), -ramp(t, b0, b1, 1), -ramp(t, b0, b1, 2), order)

    return TemporalProfile("eta", {"T": T, "tau": tau}, eta)


def _product_rule(f, f1, f2, g, g1, g2, order):
    if order == 0:
        return f * g
    if order == 1:
        return f1 * g + f * g1
    if order == 2:
        return f2 * g + 2 * f1 * g1 + f * g2
    raise ValueError("order must be 0, 1 or 2")


def initial_cutoff(T: float, tau: float) -> TemporalProfile:
    """chi = 1 on [0, 2T + 2tau], 0 from 3T - tau on."""
    a, b = 2 * T + 2 * tau, 3 * T - tau
    return TemporalProfile("chi_initial", {"T": T, "tau": tau},
                           lambda t, order: (1.0 if order == 0 else 0.0) - ramp(t, a, b, order))


def amplitude_cutoff(z, order: int = 0) -> np.ndarray:
    """chi(z) = 1 on [0, 1], z on [2, inf), smooth interpolation in between."""
    z = np.asarray(z, dtype=float)
    s = smoothstep(z - 1.0)
    if order == 0:
        return (1.0 - s) + s * z
    if order == 1:
        return smoothstep(z - 1.0, 1) * (z - 1.0) + s
    raise ValueError("order must be 0 or 1")


def write_profile_csv(path: str | Path, times, values, header: str = "t,value") -> Path:
    path = Path(path)
    data = np.column_stack([np.asarray(times, dtype=float), np.asarray(values, dtype=float)])
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")
    return path
