"""Gluing exact MHD flows with a partition of unity in time.

On an overlap interval the glued state is a convex combination
chi * A + (1 - chi) * B of two exact flows A (earlier) and B (later).  With
delta = A - B the glued quintuple solves the relaxed system with

    R = chi' R(delta v) - chi (1 - chi) (delta v ⊗̊ delta v - delta b ⊗̊ delta b)
    M = chi' R_a(delta b) - chi (1 - chi) (delta v ⊗ delta b - delta b ⊗ delta v)
    p = chi p_A + (1 - chi) p_B + chi (1 - chi) / 3 (|delta v|^2 - |delta b|^2 - means)

where u ⊗̊ w = u ⊗ w - (u . w) Id / 3 is the trace-free product.  Every
quantity is returned together with its time derivative so that the
perturbation built on top of it can be differentiated in time exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .building_blocks import CutoffFamily, TemporalProfile, initial_cutoff, make_time_cutoffs
from .mhd_flows import MHDState, pressure
from .spectral_core import Grid3, SpectralError, SpectralField

EYE = np.eye(3)


@dataclass(frozen=True)
class FlowSample:
    """Exact flow at one time: fields and their time derivatives (coefficients)."""

    v: np.ndarray
    b: np.ndarray
    dv: np.ndarray
    db: np.ndarray
    p: np.ndarray | None = None


@dataclass
class GluedSample:
    """Glued quintuple at one time with time derivatives of v, b, R, M."""

    t: float
    v: np.ndarray
    b: np.ndarray
    p: np.ndarray
    R: np.ndarray
    M: np.ndarray
    dv: np.ndarray
    db: np.ndarray
    dR: np.ndarray
    dM: np.ndarray
    window: str
    discarded_mean: float = 0.0


@dataclass(frozen=True)
class GluingSchedule:
    """t_i = 2T + i tau for 0 <= i <= W, with t_W = 3T - tau."""

    T: float
    tau: float
    windows: int
    cutoffs: CutoffFamily = field(repr=False)
    eta: TemporalProfile = field(repr=False)

    @classmethod
    def build(cls, T: float, windows: int) -> "GluingSchedule":
        tau = T / (windows + 1)
        fam, eta = make_time_cutoffs(T, tau, windows)
        return cls(T, tau, windows, fam, eta)

    @property
    def times(self) -> np.ndarray:
        return self.cutoffs.times

    def I(self, i: int) -> tuple[float, float]:
        return self.cutoffs.interval_I(i)

    def J(self, i: int) -> tuple[float, float]:
        return self.cutoffs.interval_J(i)

    def locate(self, t: float) -> tuple[str, int]:
        """('overlap', i) if t lies in I_i, else ('exact', j) with v̄ = v_j."""
        for i in range(1, self.windows + 1):
            a, b = self.I(i)
            if a < t < b:
                return "overlap", i
        for i in range(1, self.windows + 1):
            if t <= self.I(i)[0]:
                return "exact", i - 1
        return "exact", self.windows

    def flow_span(self, i: int) -> tuple[float, float]:
        """Support of chi_{i+1}: where flow i enters the glued field."""
        lo = self.I(i)[0] if i >= 1 else 0.0
        hi = self.I(i + 1)[1] if i + 1 <= self.windows else 1.0
        return lo, hi


# ---------------------------------------------------------------------------
# Pair gluing on coefficient arrays
# ---------------------------------------------------------------------------


def trace_free_outer(grid: Grid3, u: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Galerkin u ⊗ w - (u . w) Id / 3."""
    o = grid.outer(u, w)
    tr = o[0, 0] + o[1, 1] + o[2, 2]
    for a in range(3):
        o[a, a] -= tr / 3
    return o


def _sym_part(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + np.swapaxes(m, 0, 1))


def _pair_products(grid: Grid3, dv, db, ddv, ddb):
    """Quadratic glue terms and their time derivatives, sharing padded transforms."""
    pv, pb = grid.to_padded(dv), grid.to_padded(db)
    qv, qb = grid.to_padded(ddv), grid.to_padded(ddb)
    vv = pv[:, None] * pv[None, :]
    bb = pb[:, None] * pb[None, :]
    vb = pv[:, None] * pb[None, :]
    d_vv = qv[:, None] * pv[None, :] + pv[:, None] * qv[None, :]
    d_bb = qb[:, None] * pb[None, :] + pb[:, None] * qb[None, :]
    d_vb = qv[:, None] * pb[None, :] + pv[:, None] * qb[None, :]
    sym = grid.from_padded(np.stack([vv - bb, d_vv - d_bb]))
    anti = grid.from_padded(np.stack([vb - np.swapaxes(vb, 0, 1), d_vb - np.swapaxes(d_vb, 0, 1)]))
    return sym[0], sym[1], anti[0], anti[1]


def pair_glue(grid: Grid3, t: float, chi: tuple[float, float, float], A: FlowSample, B: FlowSample,
              window: str = "overlap") -> GluedSample:
    """Glue A (weight chi) and B (weight 1 - chi); chi = (value, first, second derivative)."""
    c, c1, c2 = chi
    dv, db = A.v - B.v, A.b - B.b
    ddv, ddb = A.dv - B.dv, A.db - B.db
    mean = float(max(np.abs(dv[:, 0, 0, 0]).max(), np.abs(db[:, 0, 0, 0]).max()))
    for arr in (dv, db, ddv, ddb):
        arr[:, 0, 0, 0] = 0.0
    w = c * (1 - c)
    w1 = c1 * (1 - 2 * c)
    S, dS, Q, dQ = _pair_products(grid, dv, db, ddv, ddb)
    # trace-free parts; the trace of S is |dv|^2 - |db|^2
    trS, trdS = S[0, 0] + S[1, 1] + S[2, 2], dS[0, 0] + dS[1, 1] + dS[2, 2]
    S0, dS0 = S.copy(), dS.copy()
    for a in range(3):
        S0[a, a] -= trS / 3
        dS0[a, a] -= trdS / 3
    Rdv, Rddv = grid.inv_div_sym(dv), grid.inv_div_sym(ddv)
    Adb, Addb = grid.inv_div_antisym(db), grid.inv_div_antisym(ddb)
    R = c1 * Rdv - w * S0
    dR = c2 * Rdv + c1 * Rddv - w1 * S0 - w * dS0
    M = c1 * Adb - w * Q
    dM = c2 * Adb + c1 * Addb - w1 * Q - w * dQ
    pA = A.p if A.p is not None else pressure(grid, A.v, A.b)
    pB = B.p if B.p is not None else pressure(grid, B.v, B.b)
    extra = trS.copy()
    extra[0, 0, 0] = 0.0
    p = c * pA + (1 - c) * pB + w * extra / 3
    return GluedSample(
        t=t,
        v=c * A.v + (1 - c) * B.v,
        b=c * A.b + (1 - c) * B.b,
        p=p,
        R=R,
        M=M,
        dv=c1 * dv + c * A.dv + (1 - c) * B.dv,
        db=c1 * db + c * A.db + (1 - c) * B.db,
        dR=dR,
        dM=dM,
        window=window,
        discarded_mean=mean,
    )


def exact_sample(grid: Grid3, t: float, A: FlowSample, window: str = "exact") -> GluedSample:
    zero = np.zeros((3, 3) + grid.spectral_shape, dtype=complex)
    p = A.p if A.p is not None else pressure(grid, A.v, A.b)
    return GluedSample(t, A.v, A.b, p, zero, zero.copy(), A.dv, A.db, zero.copy(), zero.copy(), window)


def glue_sample(grid: Grid3, schedule: GluingSchedule, t: float,
                flows: Callable[[int], FlowSample]) -> GluedSample:
    """Glued sample at t; ``flows(i)`` returns flow i at t (only active ones are requested)."""
    kind, i = schedule.locate(t)
    if kind == "exact":
        return exact_sample(grid, t, flows(i))
    fam = schedule.cutoffs
    chi = tuple(float(fam.chi(i, t, order)) for order in range(3))
    return pair_glue(grid, t, chi, flows(i - 1), flows(i))


def initial_glue_sample(grid: Grid3, T: float, tau: float, t: float,
                        first: FlowSample, second: FlowSample) -> GluedSample:
    """Initial quintuple: first flow on [0, 2T + 2tau], second from 3T - tau on."""
    prof = initial_cutoff(T, tau)
    chi = tuple(float(prof(t, order)) for order in range(3))
    if chi[0] == 1.0 and chi[1] == 0.0:
        return exact_sample(grid, t, first, "plateau-first")
    if chi[0] == 0.0 and chi[1] == 0.0:
        return exact_sample(grid, t, second, "plateau-second")
    return pair_glue(grid, t, chi, first, second)


# ---------------------------------------------------------------------------
# Residual of the relaxed system
# ---------------------------------------------------------------------------


def relaxed_residual(grid: Grid3, v, b, p, R, M, dv, db, nu: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Defects of the momentum and induction equations (coefficient vectors).

    dt v - nu Lap v + div(v⊗v) + grad p - div(b⊗b) - div R
    dt b - nu Lap b + div(v⊗b) - div(b⊗v) - div M
    """
    pv, pb = grid.to_padded(v), grid.to_padded(b)
    parts = [pv[i] * pv[j] - pb[i] * pb[j] for i, j in _UPPER]
    parts += [pv[i] * pb[j] - pb[i] * pv[j] for i, j in _STRICT]
    coef = grid.from_padded(np.stack(parts))
    sym = np.empty((3, 3) + grid.spectral_shape, dtype=complex)
    anti = np.zeros_like(sym)
    for c, (i, j) in zip(coef[:6], _UPPER):
        sym[i, j] = sym[j, i] = c
    for c, (i, j) in zip(coef[6:], _STRICT):
        anti[i, j], anti[j, i] = c, -c
    rv = dv - nu * grid.lap(v) + grid.div(sym - R) + grid.grad(p)
    rb = db - nu * grid.lap(b) + grid.div(anti - M)
    return rv, rb


_UPPER = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]
_STRICT = [(0, 1), (0, 2), (1, 2)]


def residual_norms(grid: Grid3, s: GluedSample, nu: float = 1.0) -> tuple[float, float]:
    rv, rb = relaxed_residual(grid, s.v, s.b, s.p, s.R, s.M, s.dv, s.db, nu)
    return float(np.sqrt(grid.l2_sq(rv))), float(np.sqrt(grid.l2_sq(rb)))


# ---------------------------------------------------------------------------
# Spec-level wrappers over sampled trajectories
# ---------------------------------------------------------------------------


def fd_derivative(samples: Sequence[np.ndarray], dt: float, n: int) -> np.ndarray:
    """Fourth-order central difference at index n (one-sided second order at the ends)."""
    m = len(samples)
    if 2 <= n <= m - 3:
        return (samples[n - 2] - 8 * samples[n - 1] + 8 * samples[n + 1] - samples[n + 2]) / (12 * dt)
    if n == 0:
        return (-3 * samples[0] + 4 * samples[1] - samples[2]) / (2 * dt)
    if n == m - 1:
        return (3 * samples[-1] - 4 * samples[-2] + samples[-3]) / (2 * dt)
    return (samples[n + 1] - samples[n - 1]) / (2 * dt)


def trajectory_samples(traj: Sequence[MHDState]) -> list[FlowSample]:
    """FlowSamples with finite-difference time derivatives along a uniform trajectory."""
    if len(traj) < 3:
        raise SpectralError("need at least three samples for time derivatives")
    dt = traj[1].t - traj[0].t
    vs = [s.v.coef for s in traj]
    bs = [s.b.coef for s in traj]
    out = []
    for n, s in enumerate(traj):
        p = s.p.coef if s.p is not None else None
        out.append(FlowSample(s.v.coef, s.b.coef, fd_derivative(vs, dt, n), fd_derivative(bs, dt, n), p))
    return out


@dataclass
class GluedStage:
    times: np.ndarray
    samples: list[GluedSample]

    def field(self, name: str, n: int) -> SpectralField:
        s = self.samples[n]
        grid = _grid_of(s)
        if name in ("v", "b"):
            return SpectralField(grid, "vector", getattr(s, name), frozenset({"mean-free", "divergence-free"}))
        if name == "p":
            return SpectralField(grid, "scalar", s.p, frozenset({"mean-free"}))
        if name == "R":
            return SpectralField(grid, "tensor", s.R, frozenset({"symmetric", "trace-free"}))
        if name == "M":
            return SpectralField(grid, "tensor", s.M, frozenset({"antisymmetric"}))
        raise KeyError(name)


def _grid_of(s: GluedSample) -> Grid3:
    return Grid3(s.v.shape[1])


def glue_fields(flows: Sequence[Sequence[MHDState]], schedule: GluingSchedule) -> GluedStage:
    """Glue sampled exact flows v_0..v_W (same uniform time grid) with the chi partition.

    Flow i must be available (finite samples) wherever chi_{i+1} > 0.
    """
    if len(flows) != schedule.windows + 1:
        raise SpectralError(f"need {schedule.windows + 1} flows, got {len(flows)}")
    times = np.array([s.t for s in flows[0]])
    for f in flows[1:]:
        if len(f) != len(times) or np.max(np.abs(np.array([s.t for s in f]) - times)) > 1e-12:
            raise SpectralError("flows must share the time grid")
    grid = flows[0][0].grid
    fs = [trajectory_samples(f) for f in flows]
    out = []
    for n, t in enumerate(times):
        out.append(glue_sample(grid, schedule, float(t), lambda i: fs[i][n]))
    return GluedStage(times, out)


def glued_stresses(stage: GluedStage) -> tuple[list[np.ndarray], list[np.ndarray], list[np.ndarray]]:
    return ([s.R for s in stage.samples], [s.M for s in stage.samples], [s.p for s in stage.samples])


def initial_glue(first: Sequence[MHDState], second: Sequence[MHDState], T: float, tau: float) -> GluedStage:
    """Stage-one quintuple from two sampled strong solutions on a common time grid."""
    if len(first) != len(second):
        raise SpectralError("trajectories must have the same samples")
    for a, b in zip(first, second):
        if a.grid != b.grid or abs(a.t - b.t) > 1e-12:
            raise SpectralError("grid or time mismatch")
    grid = first[0].grid
    fa, fb = trajectory_samples(first), trajectory_samples(second)
    times = np.array([s.t for s in first])
    out = [initial_glue_sample(grid, T, tau, float(t), a, b) for t, a, b in zip(times, fa, fb)]
    return GluedStage(times, out)
