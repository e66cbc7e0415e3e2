"""Amplitudes, principal perturbations and correctors for one stage.

Everything is evaluated one time sample at a time and carries its exact
time derivative (a first-order jet), so that the linear stress never needs
finite differences of constructed fields.

Pointwise operations (cutoffs, square roots, coefficient maps) happen on the
3/2-padded grid; every field handed back is a coefficient array on the base
grid.  Products of an amplitude with a building block are projected once,
f_k = P[a_k phi_k], and the principal part and incompressibility corrector
are then formed from f_k, so that

    w^(p) + w^(c) = lam^{-1} sum_k curl P[f_k g F_k]

holds to round-off and the sum is divergence-free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .building_blocks import ShearFlow, TemporalProfile, amplitude_cutoff, make_shear
from .geometry import DirectionSet, GeometryError, build_direction_set
from .spectral_core import Grid3, SpectralError

EYE = np.eye(3)


class MarginError(GeometryError):
    """A normalized stress left the admissible ball of its geometric lemma."""


# ---------------------------------------------------------------------------
# Building blocks on the padded grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StageBlocks:
    """Shear flows for both direction sets, with padded values cached."""

    grid: Grid3
    lam: int
    gamma: float
    skew: DirectionSet
    sym: DirectionSet
    flows_b: tuple[ShearFlow, ...]
    flows_v: tuple[ShearFlow, ...]
    phi_b: np.ndarray = field(repr=False)
    psi_b: np.ndarray = field(repr=False)
    Fkb_b: np.ndarray = field(repr=False)
    Fkbb_b: np.ndarray = field(repr=False)
    phi_v: np.ndarray = field(repr=False)
    psi_v: np.ndarray = field(repr=False)
    Fkb_v: np.ndarray = field(repr=False)

    @property
    def tail(self) -> float:
        """Largest L^2 energy of a bump lost to truncation."""
        return max(f.tail for f in self.flows_b + self.flows_v)

    def frames(self, which: str):
        flows = self.flows_b if which == "b" else self.flows_v
        return [(f.triple.kb_vec, f.triple.kbb_vec) for f in flows]


def build_blocks(grid: Grid3, lam: int, gamma: float, tail_tol: float = 1e-8) -> StageBlocks:
    skew, sym = build_direction_set("skew"), build_direction_set("sym")
    fb = tuple(make_shear(t, gamma, lam, grid, tail_tol) for t in skew.triples)
    fv = tuple(make_shear(t, gamma, lam, grid, tail_tol) for t in sym.triples)
    pad = grid.to_padded
    return StageBlocks(
        grid, int(lam), float(gamma), skew, sym, fb, fv,
        phi_b=np.stack([pad(f.phi) for f in fb]),
        psi_b=np.stack([pad(f.psi) for f in fb]),
        Fkb_b=np.stack([pad(f.F_kb) for f in fb]),
        Fkbb_b=np.stack([pad(f.F_kbb) for f in fb]),
        phi_v=np.stack([pad(f.phi) for f in fv]),
        psi_v=np.stack([pad(f.psi) for f in fv]),
        Fkb_v=np.stack([pad(f.F_kb) for f in fv]),
    )


# ---------------------------------------------------------------------------
# Densities and amplitudes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DensityParams:
    """delta_{q+1}, lambda_q and alpha fix the three stress scales."""

    delta: float
    lam_q: float
    alpha: float
    margin: float = 0.9

    @property
    def outer(self) -> float:
        return self.delta * self.lam_q ** (-2 * self.alpha)

    @property
    def inner_b(self) -> float:
        return self.delta * self.lam_q ** (-4 * self.alpha)

    @property
    def inner_v(self) -> float:
        return self.delta * self.lam_q ** (-3 * self.alpha)


def cutoff_ratio_sup() -> float:
    """sup_z z / chi(<z>) over z >= 0, with <z> = sqrt(1 + z^2)."""
    z = np.concatenate([np.linspace(0.0, 10.0, 200001), np.geomspace(10.0, 1e8, 2001)])
    return float(np.max(z / amplitude_cutoff(np.sqrt(1 + z * z))))


def minimal_alpha(lam_q: float, radius_b: float, radius_v: float, margin: float = 0.9) -> float:
    """Smallest alpha for which both normalized stresses fit their balls.

    |M|/rho_b <= C lam_q^{-2 alpha} and |R_v|/rho_v <= C lam_q^{-alpha}
    with C = cutoff_ratio_sup().
    """
    c = cutoff_ratio_sup()
    ab = math.log(c / (margin * radius_b)) / (2 * math.log(lam_q))
    av = math.log(c / (margin * radius_v)) / math.log(lam_q)
    return max(ab, av, 0.0)


def _frob(x: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(x * x, axis=(0, 1)))


def _density(X: np.ndarray, dX: np.ndarray, inner: float, outer: float):
    """rho = outer chi(<X / inner>) and its time derivative."""
    Y, dY = X / inner, dX / inner
    br = np.sqrt(1.0 + np.sum(Y * Y, axis=(0, 1)))
    dbr = np.sum(Y * dY, axis=(0, 1)) / br
    return outer * amplitude_cutoff(br), outer * amplitude_cutoff(br, 1) * dbr


def _coeff_jet(S: DirectionSet, Z: np.ndarray, dZ: np.ndarray):
    c = S.coefficients(Z, check=False)
    dc = np.tensordot(S.pinv, dZ.reshape((9,) + dZ.shape[2:]), axes=(1, 0))
    return c, dc


@dataclass
class AmplitudeField:
    """Pointwise (padded grid) densities and squared/unsquared amplitudes with jets.

    A_* = a_*^2 = eta^2 rho c_k, arrays of shape (n, P, P, P).
    """

    t: float
    eta: float
    deta: float
    rho_b: np.ndarray
    drho_b: np.ndarray
    rho_v: np.ndarray
    drho_v: np.ndarray
    R_v: np.ndarray
    dR_v: np.ndarray
    M: np.ndarray
    R: np.ndarray
    A_b: np.ndarray
    dA_b: np.ndarray
    A_v: np.ndarray
    dA_v: np.ndarray
    a_b: np.ndarray
    da_b: np.ndarray
    a_v: np.ndarray
    da_v: np.ndarray
    ratio_b: float
    ratio_v: float


def compute_densities(grid: Grid3, R: np.ndarray, M: np.ndarray, dR: np.ndarray, dM: np.ndarray,
                      eta: float, deta: float, params: DensityParams,
                      skew: DirectionSet | None = None):
    """rho_b, rho_v and R_v (padded values with time derivatives).

    Returns (rho_b, drho_b, rho_v, drho_v, R_v, dR_v, c_b, dc_b, Mp, Rp, ratios).
    """
    skew = skew or build_direction_set("skew")
    Mp, dMp = grid.to_padded(M), grid.to_padded(dM)
    Rp, dRp = grid.to_padded(R), grid.to_padded(dR)
    rho_b, drho_b = _density(Mp, dMp, params.inner_b, params.outer)
    Zb = -Mp / rho_b
    dZb = -dMp / rho_b + Mp * drho_b / rho_b**2
    c_b, dc_b = _coeff_jet(skew, Zb, dZb)
    H = np.stack([np.outer(a, a) - np.outer(b, b) for a, b in
                  ((t.kb_vec, t.kbb_vec) for t in skew.triples)])
    A_b = eta**2 * rho_b * c_b
    dA_b = 2 * eta * deta * rho_b * c_b + eta**2 * (drho_b * c_b + rho_b * dc_b)
    R_v = Rp + np.einsum("kij,k...->ij...", H, A_b)
    dR_v = dRp + np.einsum("kij,k...->ij...", H, dA_b)
    rho_v, drho_v = _density(R_v, dR_v, params.inner_v, params.outer)
    ratio_b = float(np.max(_frob(Mp) / rho_b))
    ratio_v = float(np.max(_frob(R_v) / rho_v))
    return (rho_b, drho_b, rho_v, drho_v, R_v, dR_v, c_b, dc_b, Mp, Rp, (ratio_b, ratio_v))


def _check_margin(kind: str, ratio: np.ndarray, radius: float, params: DensityParams, t: float):
    limit = params.margin * radius
    worst = float(np.max(ratio))
    if worst > limit:
        idx = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
        lam = params.lam_q
        power = 2 if kind == "skew" else 1
        need = params.alpha + math.log(worst / limit) / (power * math.log(lam)) if lam > 1 else math.inf
        raise MarginError(
            f"{kind} margin violated at t={t:.6g}, padded index {idx}: ratio {worst:.4g} > {limit:.4g}; "
            f"alpha >= {need:.4g} (prefactor lam_q^(-{power} alpha) <= {lam ** (-power * need):.4g}) required")


def _sqrt_jet(eta, deta, rho, drho, c, dc):
    """a = eta sqrt(rho c) and its time derivative (well defined where eta = 0)."""
    s = np.sqrt(rho * c)
    ds = (drho * c + rho * dc) / (2 * s)
    return eta * s, deta * s + eta * ds


def compute_amplitudes(grid: Grid3, t: float, R: np.ndarray, M: np.ndarray, dR: np.ndarray,
                       dM: np.ndarray, eta: float, deta: float, params: DensityParams,
                       blocks: StageBlocks | None = None) -> AmplitudeField:
    skew = blocks.skew if blocks else build_direction_set("skew")
    sym = blocks.sym if blocks else build_direction_set("sym")
    (rho_b, drho_b, rho_v, drho_v, R_v, dR_v, c_b, dc_b, Mp, Rp,
     _) = compute_densities(grid, R, M, dR, dM, eta, deta, params, skew)
    if eta > 0:
        _check_margin("skew", _frob(Mp) / rho_b, skew.radius, params, t)
        _check_margin("sym", _frob(R_v) / rho_v, sym.radius, params, t)
    Zv = EYE.reshape(3, 3, 1, 1, 1) - R_v / rho_v
    dZv = -dR_v / rho_v + R_v * drho_v / rho_v**2
    c_v, dc_v = _coeff_jet(sym, Zv, dZv)
    if eta > 0 and (c_b.min() <= 0 or c_v.min() <= 0):
        raise MarginError(f"non-positive lemma coefficient at t={t:.6g}")
    A_b = eta**2 * rho_b * c_b
    dA_b = 2 * eta * deta * rho_b * c_b + eta**2 * (drho_b * c_b + rho_b * dc_b)
    A_v = eta**2 * rho_v * c_v
    dA_v = 2 * eta * deta * rho_v * c_v + eta**2 * (drho_v * c_v + rho_v * dc_v)
    a_b, da_b = _sqrt_jet(eta, deta, rho_b, drho_b, c_b, dc_b)
    a_v, da_v = _sqrt_jet(eta, deta, rho_v, drho_v, c_v, dc_v)
    return AmplitudeField(
        t, eta, deta, rho_b, drho_b, rho_v, drho_v, R_v, dR_v, Mp, Rp,
        A_b, dA_b, A_v, dA_v, a_b, da_b, a_v, da_v,
        float(np.max(_frob(Mp) / rho_b)), float(np.max(_frob(R_v) / rho_v)))


def reconstruction_residuals(amp: AmplitudeField, blocks: StageBlocks) -> tuple[float, float]:
    """Relative pointwise defects of the two reconstruction identities.

    sum a_b^2 (k̄⊗k̄̄ - k̄̄⊗k̄) + eta^2 M and sum a_v^2 k̄⊗k̄ - eta^2 (rho_v Id - R_v),
    normalized by the sup of eta^2 |M| and eta^2 |rho_v Id - R_v|.
    """
    B = np.stack([np.outer(a, b) - np.outer(b, a) for a, b in blocks.frames("b")])
    G = np.stack([np.outer(a, a) for a, _ in blocks.frames("v")])
    e2 = amp.eta**2
    skew = np.einsum("kij,k...->ij...", B, amp.A_b) + e2 * amp.M
    target_v = e2 * (amp.rho_v * EYE.reshape(3, 3, 1, 1, 1) - amp.R_v)
    sym = np.einsum("kij,k...->ij...", G, amp.A_v) - target_v
    nb = max(float(np.max(_frob(e2 * amp.M))), 1e-300)
    nv = max(float(np.max(_frob(target_v))), 1e-300)
    return float(np.max(_frob(skew))) / nb, float(np.max(_frob(sym))) / nv


# ---------------------------------------------------------------------------
# Perturbation fields
# ---------------------------------------------------------------------------


@dataclass
class PerturbationBundle:
    """Perturbation components at one time (coefficients) with time derivatives."""

    t: float
    wp: np.ndarray
    wc: np.ndarray
    wt: np.ndarray
    dp: np.ndarray
    dc: np.ndarray
    dt: np.ndarray
    d_wp: np.ndarray
    d_wc: np.ndarray
    d_wt: np.ndarray
    d_dp: np.ndarray
    d_dc: np.ndarray
    d_dt: np.ndarray
    p_v: np.ndarray
    g: tuple[float, float]
    h: tuple[float, float]
    # per-direction f_k = P[a_k phi_k] (padded values), kept on request
    parts_v: np.ndarray | None = None
    parts_b: np.ndarray | None = None
    # projected squared amplitudes P[a^2] and their time derivatives
    Ahat_v: np.ndarray | None = None
    Ahat_b: np.ndarray | None = None
    dAhat_v: np.ndarray | None = None
    dAhat_b: np.ndarray | None = None

    @property
    def w(self) -> np.ndarray:
        return self.wp + self.wc + self.wt

    @property
    def d(self) -> np.ndarray:
        return self.dp + self.dc + self.dt

    @property
    def dw(self) -> np.ndarray:
        return self.d_wp + self.d_wc + self.d_wt

    @property
    def dd(self) -> np.ndarray:
        return self.d_dp + self.d_dc + self.d_dt

    def components(self) -> dict[str, np.ndarray]:
        return {"w_p": self.wp, "w_c": self.wc, "w_t": self.wt,
                "d_p": self.dp, "d_c": self.dc, "d_t": self.dt}


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.stack([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]])


def _vec(v: np.ndarray) -> np.ndarray:
    return np.asarray(v, dtype=float).reshape(3, 1, 1, 1)


def _direction_sums(grid: Grid3, lam: int, amps, damps, phi, psi, kvecs, F, keep: bool):
    """Accumulate sum_k P[f psi] kvec and lam^{-1} grad f x F (padded) with time derivatives.

    kvecs and F are lists of (vector, potential) pairs per output: the Λ_b set
    feeds both w (k̄, F_k̄) and d (k̄̄, F_k̄̄).
    """
    nout = len(kvecs)
    shape = (3,) + (grid.padded,) * 3
    prin = [np.zeros(shape) for _ in range(nout)]
    corr = [np.zeros(shape) for _ in range(nout)]
    dprin = [np.zeros(shape) for _ in range(nout)]
    dcorr = [np.zeros(shape) for _ in range(nout)]
    parts = [] if keep else None
    for k in range(amps.shape[0]):
        f, df = grid.from_padded(np.stack([amps[k] * phi[k], damps[k] * phi[k]]))
        fp, dfp = grid.to_padded(np.stack([f, df]))
        gf = grid.to_padded(np.concatenate([grid.grad(f), grid.grad(df)]))
        s, ds = fp * psi[k], dfp * psi[k]
        if keep:
            parts.append(fp)
        for o in range(nout):
            kv = _vec(kvecs[o][k])
            Fk = F[o][k]
            prin[o] += s * kv
            dprin[o] += ds * kv
            corr[o] += _cross(gf[:3], Fk) / lam
            dcorr[o] += _cross(gf[3:], Fk) / lam
    return prin, corr, dprin, dcorr, parts


def build_perturbation(grid: Grid3, amp: AmplitudeField, blocks: StageBlocks,
                       g: TemporalProfile, h: TemporalProfile, keep_parts: bool = False
                       ) -> PerturbationBundle:
    """Principal parts, incompressibility and temporal correctors, and p_v at amp.t."""
    t = amp.t
    gv, dg = float(g(t)), float(g(t, 1))
    hv, dh = float(h(t)), float(h(t, 1))
    lam = blocks.lam
    kb_b = [f.triple.kb_vec for f in blocks.flows_b]
    kbb_b = [f.triple.kbb_vec for f in blocks.flows_b]
    kb_v = [f.triple.kb_vec for f in blocks.flows_v]

    pv_, cv_, dpv_, dcv_, parts_v = _direction_sums(
        grid, lam, amp.a_v, amp.da_v, blocks.phi_v, blocks.psi_v, [kb_v], [blocks.Fkb_v], keep_parts)
    pb_, cb_, dpb_, dcb_, parts_b = _direction_sums(
        grid, lam, amp.a_b, amp.da_b, blocks.phi_b, blocks.psi_b, [kb_b, kbb_b],
        [blocks.Fkb_b, blocks.Fkbb_b], keep_parts)
    # one forward transform for the eight padded accumulators
    stack = np.stack([pv_[0] + pb_[0], cv_[0] + cb_[0], pb_[1], cb_[1],
                      dpv_[0] + dpb_[0], dcv_[0] + dcb_[0], dpb_[1], dcb_[1]])
    P_w, C_w, P_d, C_d, dP_w, dC_w, dP_d, dC_d = grid.from_padded(stack)

    wp, wc, dp, dc = gv * P_w, gv * C_w, gv * P_d, gv * C_d
    d_wp, d_wc = dg * P_w + gv * dP_w, dg * C_w + gv * dC_w
    d_dp, d_dc = dg * P_d + gv * dP_d, dg * C_d + gv * dC_d

    # temporal correctors from the projected squared amplitudes
    Ah = grid.from_padded(np.concatenate([amp.A_v, amp.A_b, amp.dA_v, amp.dA_b]))
    nv, nb = amp.A_v.shape[0], amp.A_b.shape[0]
    Ahat_v, Ahat_b = Ah[:nv], Ah[nv:nv + nb]
    dAhat_v, dAhat_b = Ah[nv + nb:2 * nv + nb], Ah[2 * nv + nb:]
    Gv = [np.outer(a, a) for a in kb_v]
    Hb = [np.outer(a, a) - np.outer(b, b) for a, b in zip(kb_b, kbb_b)]
    Bb = [np.outer(a, b) - np.outer(b, a) for a, b in zip(kb_b, kbb_b)]
    sym_div, dsym_div = temporal_sources(grid, Gv + Hb, np.concatenate([Ahat_v, Ahat_b]),
                                         np.concatenate([dAhat_v, dAhat_b]))
    anti_div, danti_div = temporal_sources(grid, Bb, Ahat_b, dAhat_b)
    Psym, dPsym = grid.leray(sym_div), grid.leray(dsym_div)
    wt = -hv * Psym
    d_wt = -dh * Psym - hv * dPsym
    dtc = -hv * anti_div
    d_dtc = -dh * anti_div - hv * danti_div

    p_v = pressure_correction(grid, amp, Gv + Hb, np.concatenate([Ahat_v, Ahat_b]), gv)

    return PerturbationBundle(
        t, wp, wc, wt, dp, dc, dtc, d_wp, d_wc, d_wt, d_dp, d_dc, d_dtc, p_v,
        (gv, dg), (hv, dh),
        np.stack(parts_v) if keep_parts else None,
        np.stack(parts_b) if keep_parts else None,
        Ahat_v, Ahat_b, dAhat_v, dAhat_b)


def temporal_sources(grid: Grid3, gens, Ahat: np.ndarray, dAhat: np.ndarray):
    """sum_k div(P[a_k^2] G_k) and its time derivative, G_k constant matrices.

    div(s G)_i = d_j (s G_ji) = G_ji d_j s.
    """
    out = np.zeros((3,) + grid.spectral_shape, dtype=complex)
    dout = np.zeros_like(out)
    for G, s, ds in zip(gens, Ahat, dAhat):
        gs, gds = grid.grad(s), grid.grad(ds)
        out += np.einsum("ji,j...->i...", G, gs)
        dout += np.einsum("ji,j...->i...", G, gds)
    return out, dout


def pressure_correction(grid: Grid3, amp: AmplitudeField, gens, Ahat: np.ndarray, gval: float) -> np.ndarray:
    """p_v = P[eta^2 rho_v] + (g^2 - 1) sum_k (div div / Lap)(P[a_k^2] G_k), mean removed."""
    base = grid.from_padded(amp.eta**2 * amp.rho_v)
    acc = np.zeros(grid.spectral_shape, dtype=complex)
    for G, s in zip(gens, Ahat):
        acc += grid.divdiv_over_lap(np.asarray(G).reshape(3, 3, 1, 1, 1) * s)
    p = base + (gval**2 - 1.0) * acc
    p[0, 0, 0] = 0.0
    return p


def zero_bundle(grid: Grid3, t: float) -> PerturbationBundle:
    z = np.zeros((3,) + grid.spectral_shape, dtype=complex)
    return PerturbationBundle(t, *(z.copy() for _ in range(12)),
                              np.zeros(grid.spectral_shape, dtype=complex), (0.0, 0.0), (0.0, 0.0))


def divergence_residuals(grid: Grid3, b: PerturbationBundle) -> dict[str, float]:
    """Relative L^2 divergences of the corrector-completed components."""
    def rel(x, ref):
        n = math.sqrt(grid.l2_sq(grid.div(x)))
        d = math.sqrt(grid.l2_sq(ref))
        return n / d if d > 0 else n

    return {
        "w_p+w_c": rel(b.wp + b.wc, b.wp),
        "d_p+d_c": rel(b.dp + b.dc, b.dp),
        "w_t": rel(b.wt, b.wt),
        "d_t": rel(b.dt, b.dt),
    }


def potential_identity(grid: Grid3, amp: AmplitudeField, blocks: StageBlocks, g: TemporalProfile) -> float:
    """|| w^(p) + w^(c) - lam^{-1} curl sum P[f_k g F_k] || / || w^(p) ||, a route independent of the
    corrector formula (the curl is taken spectrally on the projected potential)."""
    gv = float(g(amp.t))
    acc = np.zeros((3,) + (grid.padded,) * 3)
    prin = np.zeros_like(acc)
    corr = np.zeros_like(acc)
    for amps, phi, psi, F, kb in ((amp.a_v, blocks.phi_v, blocks.psi_v, blocks.Fkb_v, blocks.frames("v")),
                                  (amp.a_b, blocks.phi_b, blocks.psi_b, blocks.Fkb_b, blocks.frames("b"))):
        for k in range(amps.shape[0]):
            f = grid.from_padded(amps[k] * phi[k])
            fp = grid.to_padded(f)
            acc += fp * F[k]
            prin += fp * psi[k] * _vec(kb[k][0])
            corr += _cross(grid.to_padded(grid.grad(f)), F[k]) / blocks.lam
    curl_route = gv * grid.curl(grid.from_padded(acc)) / blocks.lam
    direct = gv * grid.from_padded(prin + corr)
    den = math.sqrt(grid.l2_sq(gv * grid.from_padded(prin)))
    return math.sqrt(grid.l2_sq(curl_route - direct)) / den if den > 0 else 0.0
