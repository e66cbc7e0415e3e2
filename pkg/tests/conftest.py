import numpy as np
import pytest

from mhdstage.spectral_core import Grid3, random_field


@pytest.fixture(scope="session")
def grid16():
    return Grid3(16)


@pytest.fixture(scope="session")
def grid32():
    return Grid3(32)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def solenoidal(grid, rng, kmax=None):
    """Random mean-free divergence-free vector coefficients."""
    return grid.leray(random_field(grid, "vector", rng, kmax=kmax))


def rel_l2(grid, err, ref):
    return np.sqrt(grid.l2_sq(err)) / np.sqrt(grid.l2_sq(ref))


def full_coords(grid):
    """Coordinate arrays broadcast to the full N^3 grid."""
    return np.broadcast_arrays(*grid.coords)


def instant_flow(grid, seed, amp=0.3, kmax=2):
    """Fields whose time derivatives are the exact MHD right-hand side."""
    from mhdstage.gluing import FlowSample
    from mhdstage.mhd_flows import nonlinear, pressure

    rng = np.random.default_rng(seed)
    v, b = solenoidal(grid, rng, kmax), solenoidal(grid, rng, kmax)
    v *= amp / np.sqrt(grid.l2_sq(v))
    b *= amp / np.sqrt(grid.l2_sq(b))
    nv, nb = nonlinear(grid, v, b)
    return FlowSample(v, b, grid.lap(v) + nv, grid.lap(b) + nb, pressure(grid, v, b))


class StageSetup:
    """One glued sample with a perturbation on and off the eta plateau."""

    def __init__(self):
        from mhdstage.building_blocks import make_temporal
        from mhdstage.gluing import pair_glue
        from mhdstage.perturbation import DensityParams, build_blocks, build_perturbation, compute_amplitudes
        from mhdstage.stress_assembly import assemble

        self.grid = g = Grid3(32)
        self.glued = pair_glue(g, 0.01, (0.5, 3.0, 10.0), instant_flow(g, 1), instant_flow(g, 2))
        self.blocks = build_blocks(g, 4, 0.5, 0.9)
        self.params = DensityParams(1.0, 2.0, 2.2)
        self.g, self.h = make_temporal(1 / 8, 4, periods=20, width=1.0)
        self.cases = {}
        for name, (eta, deta) in {"plateau": (1.0, 0.0), "ramp": (0.5, 3.0)}.items():
            gl = self.glued
            amp = compute_amplitudes(g, gl.t, gl.R, gl.M, gl.dR, gl.dM, eta, deta, self.params, self.blocks)
            bun = build_perturbation(g, amp, self.blocks, self.g, self.h, keep_parts=True)
            self.cases[name] = (amp, bun, assemble(g, gl, bun))


@pytest.fixture(scope="session")
def stage():
    return StageSetup()


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
