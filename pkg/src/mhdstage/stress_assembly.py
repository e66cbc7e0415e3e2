"""New stresses, the oscillation bookkeeping and the relaxed-system check.

With (v, b) = (v̄ + w, b̄ + d) and p = p̄ - p_v the new stresses are

    R' = R[dt w - Lap w + div(v̄⊗w + w⊗v̄ - b̄⊗d - d⊗b̄)]            (R_lin)
       + R[div(R̄ + w⊗w - d⊗d) - grad p_v]                        (R_osc)
    M' = R_a[dt d - Lap d + div(v̄⊗d + w⊗b̄ - b̄⊗w - d⊗v̄)]          (M_lin)
       + R_a[div(M̄ + w⊗d - d⊗w)]                                  (M_osc)

and the quintuple solves the relaxed system with exactly the defect of the
glued stage.  The oscillation parts are further split into named residues;
the split is an exact algebraic partition (each residue is computed
directly and the remainder is reported as the truncation residue).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gluing import GluedSample, relaxed_residual
from .perturbation import AmplitudeField, PerturbationBundle, StageBlocks, pressure_correction
from .spectral_core import Grid3, SpectralError, lp_of_values

EYE = np.eye(3)

_UPPER = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]
_STRICT = [(0, 1), (0, 2), (1, 2)]


class LedgerError(SpectralError):
    """A cancellation identity failed its tolerance."""


# ---------------------------------------------------------------------------
# Products
# ---------------------------------------------------------------------------


def _sym_from(parts: np.ndarray, shape) -> np.ndarray:
    out = np.empty((3, 3) + shape, dtype=complex)
    for c, (i, j) in zip(parts, _UPPER):
        out[i, j] = out[j, i] = c
    return out


def _anti_from(parts: np.ndarray, shape) -> np.ndarray:
    out = np.zeros((3, 3) + shape, dtype=complex)
    for c, (i, j) in zip(parts, _STRICT):
        out[i, j], out[j, i] = c, -c
    return out


def _sym_pairs(x, y, u, z):
    """Upper entries of x⊗y + y⊗x - u⊗z - z⊗u (padded values)."""
    return [x[i] * y[j] + y[i] * x[j] - u[i] * z[j] - z[i] * u[j] for i, j in _UPPER]


def _anti_pairs(x, y):
    """Strict upper entries of x⊗y - y⊗x."""
    return [x[i] * y[j] - y[i] * x[j] for i, j in _STRICT]


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------


@dataclass
class StressDecomposition:
    t: float
    R_lin: np.ndarray
    R_osc: np.ndarray
    M_lin: np.ndarray
    M_osc: np.ndarray
    p_v: np.ndarray
    v: np.ndarray
    b: np.ndarray
    p: np.ndarray
    dv: np.ndarray
    db: np.ndarray

    @property
    def R(self) -> np.ndarray:
        return self.R_lin + self.R_osc

    @property
    def M(self) -> np.ndarray:
        return self.M_lin + self.M_osc


def _require_div_free(grid: Grid3, u: np.ndarray, what: str, tol: float = 1e-9):
    n = math.sqrt(grid.l2_sq(grid.div(u)) / max(grid.l2_sq(u) * (2 * math.pi * grid.band) ** 2, 1e-300))
    if n > tol:
        raise SpectralError(f"{what} is not divergence-free (relative {n:.3e}); upstream corrector bug")


def assemble(grid: Grid3, glued: GluedSample, bundle: PerturbationBundle, nu: float = 1.0) -> StressDecomposition:
    """R_lin, R_osc, M_lin, M_osc and the stage-(q+1) quintuple at one time."""
    w, d = bundle.w, bundle.d
    shape = grid.spectral_shape
    vb, bb = grid.to_padded(glued.v), grid.to_padded(glued.b)
    wp, dp = grid.to_padded(w), grid.to_padded(d)
    parts = _sym_pairs(vb, wp, bb, dp)                           # linear, symmetric
    parts += [wp[i] * wp[j] - dp[i] * dp[j] for i, j in _UPPER]  # quadratic, symmetric
    parts += [a + b for a, b in zip(_anti_pairs(vb, dp), _anti_pairs(wp, bb))]  # linear, antisymmetric
    parts += _anti_pairs(wp, dp)                                  # quadratic, antisymmetric
    coef = grid.from_padded(np.stack(parts))
    lin_s, quad_s = _sym_from(coef[:6], shape), _sym_from(coef[6:12], shape)
    lin_a, quad_a = _anti_from(coef[12:15], shape), _anti_from(coef[15:18], shape)

    arg_rl = bundle.dw - nu * grid.lap(w) + grid.div(lin_s)
    arg_ro = grid.div(glued.R + quad_s) - grid.grad(bundle.p_v)
    arg_ml = bundle.dd - nu * grid.lap(d) + grid.div(lin_a)
    arg_mo = grid.div(glued.M + quad_a)
    _require_div_free(grid, arg_ml, "input of the magnetic linear stress")
    _require_div_free(grid, arg_mo, "input of the magnetic oscillation stress")
    return StressDecomposition(
        t=bundle.t,
        R_lin=grid.inv_div_sym(arg_rl),
        R_osc=grid.inv_div_sym(arg_ro),
        M_lin=grid.inv_div_antisym(arg_ml),
        M_osc=grid.inv_div_antisym(arg_mo),
        p_v=bundle.p_v,
        v=glued.v + w,
        b=glued.b + d,
        p=glued.p - bundle.p_v,
        dv=glued.dv + bundle.dw,
        db=glued.db + bundle.dd,
    )


def verify_relaxed_residual(grid: Grid3, s: StressDecomposition, nu: float = 1.0) -> dict[str, float]:
    """L^2 defects of both equations and divergences of v, b for the new quintuple."""
    rv, rb = relaxed_residual(grid, s.v, s.b, s.p, s.R, s.M, s.dv, s.db, nu)

    def rel_div(u):
        den = math.sqrt(grid.l2_sq(u))
        return math.sqrt(grid.l2_sq(grid.div(u))) / den if den > 0 else 0.0

    return {"momentum": math.sqrt(grid.l2_sq(rv)), "induction": math.sqrt(grid.l2_sq(rb)),
            "div v": rel_div(s.v), "div b": rel_div(s.b)}


# ---------------------------------------------------------------------------
# Cancellation ledgers and named residues
# ---------------------------------------------------------------------------


@dataclass
class LedgerEntry:
    name: str
    norm: str
    value: float
    tolerance: float | None
    t: float

    @property
    def passed(self) -> bool:
        return self.tolerance is None or self.value <= self.tolerance


def _frob(x: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(np.abs(x) ** 2, axis=(0, 1)))


def _rel_sup(num: np.ndarray, den: np.ndarray) -> float:
    d = float(np.max(np.abs(den)))
    return float(np.max(np.abs(num))) / d if d > 0 else float(np.max(np.abs(num)))


def _l2(grid: Grid3, x: np.ndarray) -> float:
    return math.sqrt(grid.l2_sq(x))


def _gens(blocks: StageBlocks):
    Gv = [np.outer(a, a) for a, _ in blocks.frames("v")]
    Hb = [np.outer(a, a) - np.outer(b, b) for a, b in blocks.frames("b")]
    Bb = [np.outer(a, b) - np.outer(b, a) for a, b in blocks.frames("b")]
    return Gv, Hb, Bb


def _div_const(grid: Grid3, G: np.ndarray, s: np.ndarray) -> np.ndarray:
    """div(s G) for a constant matrix G and a scalar coefficient array s."""
    return np.einsum("ji,j...->i...", G, grid.grad(s))


def cancellation_ledgers(grid: Grid3, glued: GluedSample, amp: AmplitudeField, bundle: PerturbationBundle,
                         blocks: StageBlocks, tol: float = 1e-8) -> list[LedgerEntry]:
    """The low-frequency, temporal and pressure identities at one time.

    * M1: M̄ + sum a_b^2 (k̄⊗k̄̄ - k̄̄⊗k̄) = (1 - eta^2) M̄ pointwise; checked where eta = 1.
    * Reynolds: R̄ + sum a_v^2 k̄⊗k̄ + sum a_b^2 (k̄⊗k̄ - k̄̄⊗k̄̄) = eta^2 rho_v Id + (1 - eta^2) R_v.
    * M4: sum div(a_b^2 B_k) P(g^2) + dt d^(t) = -h sum div(dt(a_b^2) B_k).
    * Reynolds temporal: sum div(a^2 G_k) P(g^2) + dt w^(t) - grad(p_v - eta^2 rho_v)
      = -h P_H sum div(dt(a^2) G_k).
    * p_v reassembled from the amplitudes.
    The leftover h-terms are reported as untoleranced entries.
    """
    t = amp.t
    Gv, Hb, Bb = _gens(blocks)
    out: list[LedgerEntry] = []
    plateau = amp.eta == 1.0 and amp.deta == 0.0
    e2 = amp.eta**2
    # pointwise low-frequency identities (padded grid)
    skew = amp.M + np.einsum("kij,k...->ij...", np.stack(Bb), amp.A_b)
    low_m = skew - (1 - e2) * amp.M
    sym = (amp.R + np.einsum("kij,k...->ij...", np.stack(Gv), amp.A_v)
           + np.einsum("kij,k...->ij...", np.stack(Hb), amp.A_b))
    low_r = sym - e2 * amp.rho_v * EYE.reshape(3, 3, 1, 1, 1) - (1 - e2) * amp.R_v
    scale_m = max(float(np.max(_frob(amp.M))), float(np.max(_frob(skew))), 1e-300)
    scale_r = max(float(np.max(_frob(sym))), 1e-300)
    out.append(LedgerEntry("M1 skew low-frequency", "sup rel", float(np.max(_frob(low_m))) / scale_m,
                           tol if plateau else None, t))
    out.append(LedgerEntry("Reynolds low-frequency", "sup rel", float(np.max(_frob(low_r))) / scale_r,
                           tol if plateau else None, t))
    if plateau:
        # the vector form against grad(eta^2 rho_v), through Galerkin projections
        vec = grid.div(grid.from_padded(sym)) - grid.grad(grid.from_padded(e2 * amp.rho_v))
        ref = max(_l2(grid, grid.div(grid.from_padded(sym))), 1e-300)
        out.append(LedgerEntry("Reynolds grad(eta^2 rho_v)", "L2 rel", _l2(grid, vec) / ref, tol, t))
        vec_m = grid.div(grid.from_padded(skew))
        ref_m = max(_l2(grid, grid.div(grid.from_padded(amp.M))), 1e-300)
        out.append(LedgerEntry("M1 divergence form", "L2 rel", _l2(grid, vec_m) / ref_m, tol, t))

    # temporal identities; P(g^2) from g itself, not from h'
    gv = bundle.g[0]
    pg2 = gv * gv - 1.0
    hv = bundle.h[0]
    src_b = sum(_div_const(grid, B, s) for B, s in zip(Bb, bundle.Ahat_b))
    left_b = -hv * sum(_div_const(grid, B, s) for B, s in zip(Bb, bundle.dAhat_b))
    m4 = src_b * pg2 + bundle.d_dt - left_b
    ref4 = max(_l2(grid, src_b * pg2), _l2(grid, bundle.d_dt), 1e-300)
    out.append(LedgerEntry("M4 temporal", "L2 rel", _l2(grid, m4) / ref4, tol, t))
    out.append(LedgerEntry("M4 leftover h dt(a^2)", "L2", _l2(grid, left_b), None, t))

    gens = Gv + Hb
    Ah = np.concatenate([bundle.Ahat_v, bundle.Ahat_b])
    dAh = np.concatenate([bundle.dAhat_v, bundle.dAhat_b])
    src = sum(_div_const(grid, G, s) for G, s in zip(gens, Ah))
    left = -hv * grid.leray(sum(_div_const(grid, G, s) for G, s in zip(gens, dAh)))
    base = grid.from_padded(e2 * amp.rho_v)
    base[0, 0, 0] = 0.0
    rt = src * pg2 + bundle.d_wt - grid.grad(bundle.p_v - base) - left
    reft = max(_l2(grid, src * pg2), _l2(grid, bundle.d_wt), 1e-300)
    out.append(LedgerEntry("Reynolds temporal", "L2 rel", _l2(grid, rt) / reft, tol, t))
    out.append(LedgerEntry("Reynolds leftover h dt(a^2)", "L2", _l2(grid, left), None, t))

    pv = pressure_correction(grid, amp, gens, Ah, gv)
    refp = max(_l2(grid, pv), 1e-300)
    out.append(LedgerEntry("p_v assembly", "L2 rel", _l2(grid, pv - bundle.p_v) / refp, 1e-12, t))
    return out


def _l1(grid: Grid3, coef: np.ndarray) -> float:
    return lp_of_values(grid.inverse(coef), 1.0)


@dataclass
class NamedResidues:
    """L^1_x norms of the named oscillation residues at one time."""

    t: float
    values: dict[str, float] = field(default_factory=dict)


def _tensor_sum(gens, scal, shape) -> np.ndarray:
    out = np.zeros((3, 3) + shape, dtype=complex)
    for G, s in zip(gens, scal):
        out += G.reshape(3, 3, 1, 1, 1) * s
    return out


def _lin_comb(scal: np.ndarray, vecs) -> np.ndarray:
    return sum(s * k.reshape(3, 1, 1, 1) for s, k in zip(scal, vecs))


def named_residues(grid: Grid3, glued: GluedSample, amp: AmplitudeField, bundle: PerturbationBundle,
                   blocks: StageBlocks, dec: StressDecomposition) -> NamedResidues:
    """Split M_osc + R_a dt d^(t) and R_osc + R dt w^(t) into the named terms.

    Requires a bundle built with ``keep_parts=True``.  With f_k = P[a_k phi_k]
    and s_k = P[f_k psi_k], the principal parts are sums of g s_k k̄ and
    g s_k k̄̄.  Then

    * O^b_1 = R_a[div(M̄ + w^p⊗d^p - d^p⊗w^p) + dt d^t] and O^b_2 is the rest;
    * O^b_{1,2} collects the Λ_v x Λ_b products, O^b_{1,3} the k != k' products in Λ_b;
    * O^b_{1,1} = low + time + phi + psi, from
      g^2 P[s_k^2] = Â_k + (g^2 - 1) Â_k + g^2 (P[f_k^2] - Â_k) + g^2 (P[s_k^2] - P[f_k^2]);
    * O^v_1, O^v_{1,1}, O^v_{1,2}, O^v_2 likewise for the Reynolds stress.

    "truncation" entries are O_{1,1} minus its four parts and vanish up to round-off.
    """
    if bundle.parts_v is None:
        raise SpectralError("named residues need per-direction parts (keep_parts=True)")
    shape = grid.spectral_shape
    gv = bundle.g[0]
    g2 = gv * gv
    Gv, Hb, Bb = _gens(blocks)
    kb_v = [a for a, _ in blocks.frames("v")]
    kb_b = [a for a, _ in blocks.frames("b")]
    kbb_b = [b for _, b in blocks.frames("b")]
    f_v, f_b = bundle.parts_v, bundle.parts_b
    s_v = grid.to_padded(grid.from_padded(f_v * blocks.psi_v))
    s_b = grid.to_padded(grid.from_padded(f_b * blocks.psi_b))
    Wv, Wb, Db = gv * _lin_comb(s_v, kb_v), gv * _lin_comb(s_b, kb_b), gv * _lin_comb(s_b, kbb_b)
    W = Wv + Wb
    stack = _anti_pairs(Wv, Db) + _anti_pairs(Wb, Db)
    stack += [W[i] * W[j] - Db[i] * Db[j] for i, j in _UPPER]
    n = len(f_v) + len(f_b)
    coef = grid.from_padded(np.concatenate([np.stack(stack), np.concatenate([s_v, s_b]) ** 2,
                                            np.concatenate([f_v, f_b]) ** 2]))
    cross_vb = _anti_from(coef[:3], shape)
    all_b = _anti_from(coef[3:6], shape)
    quad_r = _sym_from(coef[6:12], shape)
    s_sq, f_sq = coef[12:12 + n], coef[12 + n:]
    nv = len(f_v)
    Ab, Av = bundle.Ahat_b, bundle.Ahat_v
    fb, sb = f_sq[nv:], s_sq[nv:]
    R_a, R_s, div = grid.inv_div_antisym, grid.inv_div_sym, grid.div
    vals: dict[str, float] = {}

    skewB = _tensor_sum(Bb, Ab, shape)
    O1 = R_a(div(glued.M + cross_vb + all_b) + bundle.d_dt)
    O12 = R_a(div(cross_vb))
    O13 = R_a(div(all_b - g2 * _tensor_sum(Bb, sb, shape)))
    low = R_a(div(glued.M + skewB))
    time_ = R_a(div((g2 - 1) * skewB) + bundle.d_dt)
    phi_ = R_a(div(g2 * _tensor_sum(Bb, fb - Ab, shape)))
    psi_ = R_a(div(g2 * _tensor_sum(Bb, sb - fb, shape)))
    O11 = O1 - O12 - O13
    O2 = dec.M_osc + R_a(bundle.d_dt) - O1
    vals.update({"O^b_1": _l1(grid, O1), "O^b_{1,1}": _l1(grid, O11), "O^b_{1,2}": _l1(grid, O12),
                 "O^b_{1,3}": _l1(grid, O13), "O^b_2": _l1(grid, O2),
                 "O^b_{1,1} low": _l1(grid, low), "O^b_{1,1} time": _l1(grid, time_),
                 "O^b_{1,1} phi": _l1(grid, phi_), "O^b_{1,1} psi": _l1(grid, psi_),
                 "O^b_{1,1} truncation": _l1(grid, O11 - low - time_ - phi_ - psi_)})

    gens = Gv + Hb
    A_all = np.concatenate([Av, Ab])
    symA = _tensor_sum(gens, A_all, shape)
    er = grid.from_padded(amp.eta**2 * amp.rho_v)
    er[0, 0, 0] = 0.0
    V1 = R_s(div(glued.R + quad_r) + bundle.d_wt - grid.grad(bundle.p_v))
    V12 = R_s(div(quad_r - g2 * _tensor_sum(gens, s_sq, shape)))
    lowr = R_s(div(glued.R + symA) - grid.grad(er))
    timer = R_s(div((g2 - 1) * symA) + bundle.d_wt - grid.grad(bundle.p_v - er))
    phir = R_s(div(g2 * _tensor_sum(gens, f_sq - A_all, shape)))
    psir = R_s(div(g2 * _tensor_sum(gens, s_sq - f_sq, shape)))
    V11 = V1 - V12
    V2 = dec.R_osc + R_s(bundle.d_wt) - V1
    vals.update({"O^v_1": _l1(grid, V1), "O^v_{1,1}": _l1(grid, V11), "O^v_{1,2}": _l1(grid, V12),
                 "O^v_2": _l1(grid, V2),
                 "O^v_{1,1} low": _l1(grid, lowr), "O^v_{1,1} time": _l1(grid, timer),
                 "O^v_{1,1} phi": _l1(grid, phir), "O^v_{1,1} psi": _l1(grid, psir),
                 "O^v_{1,1} truncation": _l1(grid, V11 - lowr - timer - phir - psir)})
    return NamedResidues(bundle.t, vals)
