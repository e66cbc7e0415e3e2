import dataclasses

import numpy as np
import pytest

from mhdstage.gluing import residual_norms
from mhdstage.spectral_core import SpectralError
from mhdstage.stress_assembly import (
    LedgerEntry,
    assemble,
    cancellation_ledgers,
    named_residues,
    verify_relaxed_residual,
)

CASES = ["plateau", "ramp"]


def _l2(g, x):
    return np.sqrt(g.l2_sq(x))


def _term_scale(g, dec):
    terms = [dec.dv, dec.db, g.lap(dec.v), g.lap(dec.b), g.div(dec.R), g.div(dec.M)]
    return sum(_l2(g, t) for t in terms)


@pytest.mark.parametrize("case", CASES)
def test_new_quintuple_solves_relaxed_system(stage, case):
    g = stage.grid
    _, _, dec = stage.cases[case]
    res = verify_relaxed_residual(g, dec)
    glued = sum(residual_norms(g, stage.glued))
    assert res["momentum"] + res["induction"] <= glued + 1e-13 * _term_scale(g, dec)
    assert res["div v"] <= 1e-12 and res["div b"] <= 1e-12


@pytest.mark.parametrize("case", CASES)
def test_stress_symmetry_classes(stage, case):
    _, _, dec = stage.cases[case]
    for X in (dec.R_lin, dec.R_osc):
        assert np.max(np.abs(X - np.swapaxes(X, 0, 1))) <= 1e-14 * np.max(np.abs(X))
        assert np.max(np.abs(X[0, 0] + X[1, 1] + X[2, 2])) <= 1e-14 * np.max(np.abs(X))
    for X in (dec.M_lin, dec.M_osc):
        assert np.max(np.abs(X + np.swapaxes(X, 0, 1))) == 0.0


def test_linear_stress_inverts_its_source(stage):
    g = stage.grid
    _, bun, dec = stage.cases["ramp"]
    w = bun.w
    src = bun.dw - g.lap(w) + g.div(g.outer(stage.glued.v, w) + g.outer(w, stage.glued.v)
                                   - g.outer(stage.glued.b, bun.d) - g.outer(bun.d, stage.glued.b))
    src[:, 0, 0, 0] = 0.0
    assert _l2(g, g.div(dec.R_lin) - src) <= 1e-12 * _l2(g, src)


@pytest.mark.parametrize("case", CASES)
def test_cancellation_ledgers(stage, case):
    amp, bun, _ = stage.cases[case]
    entries = cancellation_ledgers(stage.grid, stage.glued, amp, bun, stage.blocks)
    names = {e.name for e in entries}
    assert {"M1 skew low-frequency", "M4 temporal", "Reynolds temporal", "p_v assembly"} <= names
    assert ("Reynolds grad(eta^2 rho_v)" in names) == (case == "plateau")
    for e in entries:
        assert e.passed, e
        if e.tolerance is not None:
            assert e.value <= 1e-12


@pytest.mark.parametrize("case", CASES)
def test_named_residues_partition(stage, case):
    amp, bun, dec = stage.cases[case]
    nr = named_residues(stage.grid, stage.glued, amp, bun, stage.blocks, dec)
    v = nr.values
    for side in ("b", "v"):
        assert v[f"O^{side}_{{1,1}} truncation"] <= 1e-10 * v[f"O^{side}_1"]
    assert all(np.isfinite(x) and x >= 0 for x in v.values())


def test_named_residues_need_parts(stage):
    amp, bun, dec = stage.cases["plateau"]
    bare = dataclasses.replace(bun, parts_v=None, parts_b=None)
    with pytest.raises(SpectralError):
        named_residues(stage.grid, stage.glued, amp, bare, stage.blocks, dec)


def test_assemble_rejects_compressible_magnetic_perturbation(stage):
    g = stage.grid
    _, bun, _ = stage.cases["plateau"]
    rng = np.random.default_rng(1)
    phi = g.forward(rng.standard_normal((32,) * 3)) * (g.kabs <= 3)
    phi[0, 0, 0] = 0
    bad = dataclasses.replace(bun, dc=bun.dc + g.grad(phi))
    with pytest.raises(SpectralError):
        assemble(g, stage.glued, bad)


def test_ledger_entry_pass_logic():
    assert LedgerEntry("x", "L2", 5.0, None, 0.0).passed
    assert LedgerEntry("x", "L2", 1e-9, 1e-8, 0.0).passed
    assert not LedgerEntry("x", "L2", 1e-7, 1e-8, 0.0).passed
