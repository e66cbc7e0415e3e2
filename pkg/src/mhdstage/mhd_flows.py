"""Pseudospectral solver for viscous, resistive (or ideal) MHD on the torus.

The scheme is a second-order integrating-factor Runge-Kutta method (IFRK2):
the Laplacian is propagated exactly by E = exp(-nu |xi|^2 dt) and the
Leray-projected nonlinearity is treated explicitly,

    u1      = E (u + dt N(u))
    u_{n+1} = E u + dt/2 (E N(u) + N(u1)).

Nonlinear terms are Galerkin products (3/2 padding), so divergence-freeness
is preserved to round-off.  Pressure is never stepped; it is recovered as
p = (div div / Laplacian)(b⊗b - v⊗v).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .spectral_core import (
    Grid3,
    SpectralError,
    SpectralField,
    TWO_PI,
    besov_norm,
    flag_residual,
)


@dataclass(frozen=True)
class SolverConfig:
    """nu = 1 for the viscous, resistive system, 0 for ideal runs."""

    dt: float
    nu: float = 1.0
    scheme: str = "ifrk2"
    dealias: str = "3/2-padded"
    cfl_max: float = 0.5

    def __post_init__(self):
        if self.nu not in (0.0, 1.0):
            raise SpectralError("nu must be 0 or 1")
        if self.dt <= 0:
            raise SpectralError("time step must be positive")
        if self.scheme != "ifrk2":
            raise SpectralError(f"unknown scheme {self.scheme!r}")


@dataclass(frozen=True)
class MHDState:
    t: float
    v: SpectralField
    b: SpectralField
    p: SpectralField | None = None

    @classmethod
    def from_coef(cls, grid: Grid3, t: float, v: np.ndarray, b: np.ndarray,
                  with_pressure: bool = False) -> "MHDState":
        flags = {"mean-free", "divergence-free"}
        p = None
        if with_pressure:
            p = SpectralField(grid, "scalar", pressure(grid, v, b), frozenset({"mean-free"}))
        return cls(t, SpectralField(grid, "vector", v, flags), SpectralField(grid, "vector", b, flags), p)

    @property
    def grid(self) -> Grid3:
        return self.v.grid

    def energy(self) -> float:
        g = self.grid
        return g.l2_sq(self.v.coef) + g.l2_sq(self.b.coef)


# ---------------------------------------------------------------------------
# Right-hand side and stepping on raw coefficient arrays
# ---------------------------------------------------------------------------


def fluxes(grid: Grid3, v: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Galerkin tensors v⊗v - b⊗b and v⊗b - b⊗v."""
    pv = grid.to_padded(v)
    pb = grid.to_padded(b)
    # transform only the independent entries: 6 symmetric, 3 antisymmetric
    parts = [pv[i] * pv[j] - pb[i] * pb[j] for i, j in _UPPER]
    parts += [pv[i] * pb[j] - pb[i] * pv[j] for i, j in _STRICT]
    coef = grid.from_padded(np.stack(parts))
    sym = np.empty((3, 3) + coef.shape[1:], dtype=complex)
    anti = np.zeros_like(sym)
    for c, (i, j) in zip(coef[:6], _UPPER):
        sym[i, j] = c
        sym[j, i] = c
    for c, (i, j) in zip(coef[6:], _STRICT):
        anti[i, j] = c
        anti[j, i] = -c
    return sym, anti


_UPPER = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]
_STRICT = [(0, 1), (0, 2), (1, 2)]


def nonlinear(grid: Grid3, v: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    sym, anti = fluxes(grid, v, b)
    return -grid.leray(grid.div(sym)), -grid.leray(grid.div(anti))


def pressure(grid: Grid3, v: np.ndarray, b: np.ndarray) -> np.ndarray:
    sym, _ = fluxes(grid, v, b)
    p = -grid.divdiv_over_lap(sym)
    p[0, 0, 0] = 0.0
    return p


def propagator(grid: Grid3, dt: float, nu: float) -> np.ndarray:
    return np.exp(-nu * grid.xi2 * dt)


def step(grid: Grid3, v: np.ndarray, b: np.ndarray, dt: float, nu: float = 1.0,
         E: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """One IFRK2 step.  Pure function of its inputs."""
    if E is None:
        E = propagator(grid, dt, nu)
    nv, nb = nonlinear(grid, v, b)
    v1 = E * (v + dt * nv)
    b1 = E * (b + dt * nb)
    nv1, nb1 = nonlinear(grid, v1, b1)
    v2 = E * v + 0.5 * dt * (E * nv + nv1)
    b2 = E * b + 0.5 * dt * (E * nb + nb1)
    return v2, b2


def max_speed(grid: Grid3, v: np.ndarray, b: np.ndarray) -> float:
    """Largest pointwise |v| + |b| on the grid (Alfvén and advective speed)."""
    pv, pb = grid.inverse(v), grid.inverse(b)
    return float(np.max(np.sqrt(np.sum(pv * pv, 0))) + np.max(np.sqrt(np.sum(pb * pb, 0))))


def cfl_number(grid: Grid3, v: np.ndarray, b: np.ndarray, dt: float) -> float:
    return dt * max_speed(grid, v, b) * TWO_PI * grid.band


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------


def solve_mhd(init: MHDState, t_end: float, cfg: SolverConfig, sample_every: int = 1,
              with_pressure: bool = False, log: list | None = None) -> list[MHDState]:
    """Step from init.t to t_end, returning states every ``sample_every`` steps.

    The number of steps is round((t_end - t0) / dt); the effective step is
    adjusted so that t_end is hit exactly.
    """
    grid = init.grid
    t0 = init.t
    nsteps = int(round((t_end - t0) / cfg.dt))
    if nsteps < 0:
        raise SpectralError("t_end precedes the initial time")
    dt = (t_end - t0) / nsteps if nsteps else cfg.dt
    for name, f in (("v", init.v), ("b", init.b)):
        if flag_residual(f, "divergence-free") > 1e-10 or flag_residual(f, "mean-free") > 1e-12:
            raise SpectralError(f"initial {name} must be mean-free and divergence-free")
    E = propagator(grid, dt, cfg.nu)
    v, b = init.v.coef, init.b.coef
    out = [MHDState.from_coef(grid, t0, v, b, with_pressure)]
    for n in range(1, nsteps + 1):
        cfl = cfl_number(grid, v, b, dt)
        if cfl > cfg.cfl_max:
            raise SpectralError(f"CFL number {cfl:.3f} exceeds {cfg.cfl_max} at t={t0 + (n - 1) * dt:.6g}")
        v, b = step(grid, v, b, dt, cfg.nu, E)
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(b))):
            raise SpectralError(f"non-finite state at step {n}, t={t0 + n * dt:.6g}")
        if log is not None:
            log.append((t0 + n * dt, grid.l2_sq(v) + grid.l2_sq(b)))
        if n % sample_every == 0 or n == nsteps:
            out.append(MHDState.from_coef(grid, t0 + n * dt, v, b, with_pressure))
    return out


def shear_coefficients(grid: Grid3, A: float, t: float, nu: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    amp = A * np.exp(-nu * TWO_PI**2 * t)
    shape = (3,) + grid.spectral_shape
    v = np.zeros(shape, dtype=complex)
    b = np.zeros(shape, dtype=complex)
    # sin(2 pi x1) = (e^{i} - e^{-i}) / 2i: coefficients -i/2 at k1 = 1, +i/2 at k1 = -1
    v[2, 1, 0, 0], v[2, -1, 0, 0] = -0.5j * amp, 0.5j * amp
    b[1, 1, 0, 0], b[1, -1, 0, 0] = -0.5j * amp, 0.5j * amp
    return v, b


def exact_shear_solution(grid: Grid3, A: float, t: float) -> MHDState:
    """v = (0, 0, A e^{-4 pi^2 t} sin 2 pi x1), b = (0, A e^{-4 pi^2 t} sin 2 pi x1, 0), p = 0."""
    v, b = shear_coefficients(grid, A, t)
    return MHDState.from_coef(grid, t, v, b, with_pressure=True)


def nonlinear_terms(grid: Grid3, v: np.ndarray, b: np.ndarray) -> dict[str, float]:
    """L^2 sizes of div(v⊗v), div(v⊗b), div(b⊗v), div(b⊗b)."""
    out = {}
    for name, (x, y) in {"v.grad v": (v, v), "v.grad b": (v, b),
                         "b.grad v": (b, v), "b.grad b": (b, b)}.items():
        out[name] = float(np.sqrt(grid.l2_sq(grid.div(grid.outer(x, y)))))
    return out


def mhd_residual(grid: Grid3, v: np.ndarray, b: np.ndarray, dvdt: np.ndarray, dbdt: np.ndarray,
                 nu: float = 1.0) -> tuple[float, float]:
    """L^2 residuals of the Leray-projected momentum and induction equations."""
    nv, nb = nonlinear(grid, v, b)
    rv = dvdt - nu * grid.lap(v) - nv
    rb = dbdt - nu * grid.lap(b) - nb
    return float(np.sqrt(grid.l2_sq(rv))), float(np.sqrt(grid.l2_sq(rb)))


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------


def difference_diagnostics(traj_a: Sequence[MHDState], traj_b: Sequence[MHDState]) -> dict[str, float]:
    """Window sup of L^2, B^0_{inf,1} and B^{-1}_{1,1} distances of (v, b)."""
    if len(traj_a) != len(traj_b):
        raise SpectralError("trajectories have different sample counts")
    report = {"L2": 0.0, "B0_inf,1": 0.0, "B-1_1,1": 0.0}
    for sa, sb in zip(traj_a, traj_b):
        if sa.grid != sb.grid:
            raise SpectralError("grid mismatch")
        if abs(sa.t - sb.t) > 1e-12:
            raise SpectralError("time samples differ")
        g = sa.grid
        dv = sa.v.coef - sb.v.coef
        db = sa.b.coef - sb.b.coef
        l2 = np.sqrt(g.l2_sq(dv) + g.l2_sq(db))
        b0 = besov_norm(g, dv, 0.0, np.inf, 1.0) + besov_norm(g, db, 0.0, np.inf, 1.0)
        bm1 = besov_norm(g, dv, -1.0, 1.0, 1.0) + besov_norm(g, db, -1.0, 1.0, 1.0)
        report["L2"] = max(report["L2"], float(l2))
        report["B0_inf,1"] = max(report["B0_inf,1"], float(b0))
        report["B-1_1,1"] = max(report["B-1_1,1"], float(bm1))
    return report
