"""Parameter derivation, stage orchestration, reporting and the command line.

A run streams the exact flows forward in time in lockstep.  Every stepped flow
keeps a rolling buffer of five states, which is what a fourth-order central
difference needs, so memory does not grow with the number of time samples.
A sample at step m is evaluated once the global clock reaches m + 2.

Time derivatives: constructed fields (cutoffs, amplitudes, correctors) carry
exact jets; stepped flows are differentiated by fourth-order central
differences on the stepper grid.  The choice is written to run.log.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .building_blocks import make_temporal
from .gluing import (FlowSample, GluedSample, GluingSchedule, fd_derivative, glue_sample,
                     initial_glue_sample, relaxed_residual)
from .mhd_flows import cfl_number, propagator, shear_coefficients, step
from .perturbation import (DensityParams, MarginError, build_blocks, build_perturbation,
                           compute_amplitudes, divergence_residuals, minimal_alpha,
                           potential_identity, reconstruction_residuals)
from .spectral_core import (TWO_PI, FieldDumpWriter, Grid3, SpectralError, besov_norm,
                            lp_of_values, random_field, time_norm, trapezoid_weights)
from .stress_assembly import (LedgerEntry, assemble, cancellation_ledgers, named_residues,
                              verify_relaxed_residual)

C0 = 2**12
DERIVATIVE_NOTE = ("time derivatives: exact jets for cutoffs, amplitudes and correctors; "
                   "fourth-order central differences on stepped flows")


class ConfigError(ValueError):
    """Inconsistent parameters or configuration."""


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParameterSet:
    """Parameter cascade.  Faithful values are exact fractions; lambda_q, tau_q and
    delta_q are astronomically large or small there and are kept as log10.
    In toy mode the per-stage values come from the overrides."""

    mode: str
    eps: Fraction
    p: Fraction
    T: Fraction
    a: Fraction
    C0: int
    gamma: Fraction
    sigma: Fraction
    b: Fraction
    beta: Fraction
    alpha: float | Fraction
    stages: int
    log10_lam: tuple[float, ...]
    log10_tau: tuple[float, ...]
    log10_delta: tuple[float, ...]
    lam: tuple[int, ...] = ()
    windows: tuple[int, ...] = ()
    delta: tuple[float, ...] = ()
    overrides: dict = field(default_factory=dict)

    def tau(self, q: int) -> float:
        """Gluing step tau_q; in toy mode T/(W_q + 1)."""
        if self.mode == "toy":
            return float(self.T) / (self.windows[q - 1] + 1)
        return 10.0 ** self.log10_tau[q - 1]

    def lam_q(self, q: int) -> float:
        return float(self.lam[q - 1]) if self.mode == "toy" else 10.0 ** self.log10_lam[q - 1]

    def delta_q(self, q: int) -> float:
        return float(self.delta[q - 1]) if self.mode == "toy" else 10.0 ** self.log10_delta[q - 1]

    def rows(self) -> list[tuple[str, str]]:
        out = [("mode", self.mode), ("eps", str(self.eps)), ("p", str(self.p)), ("T", str(self.T)),
               ("a", str(self.a)), ("C0", str(self.C0)), ("gamma", str(self.gamma)),
               ("sigma", str(self.sigma)), ("b", str(self.b)), ("beta", str(self.beta)),
               ("alpha", str(self.alpha))]
        for q in range(1, len(self.log10_lam) + 1):
            out.append((f"log10 lambda_{q}", repr(self.log10_lam[q - 1])))
            out.append((f"log10 tau_{q}", repr(self.log10_tau[q - 1])))
            out.append((f"log10 delta_{q}", repr(self.log10_delta[q - 1])))
        for k in sorted(self.overrides):
            out.append((f"override {k}", str(self.overrides[k])))
        return out


def _fraction(x) -> Fraction:
    try:
        return Fraction(str(x).strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"not a number: {x!r}") from exc


def faithful_exponents(eps: Fraction, p: Fraction) -> tuple[Fraction, Fraction, Fraction, Fraction, Fraction]:
    """gamma, sigma, b, beta, alpha in exact arithmetic."""
    gamma = min(Fraction(4, 3) / p - Fraction(2, 3), 2 * eps / 3, Fraction(1, 24))
    sigma = gamma / 16
    b = 4 * C0 / sigma
    beta = 1 / b**3
    return gamma, sigma, b, beta, beta / 16


def derive_parameters(eps, p, T, a, mode: str = "faithful", overrides: dict | None = None,
                      stages: int = 1, time_step: float | None = None) -> ParameterSet:
    """Parameter cascade for ``stages`` stages (states q = 1 .. stages + 1).

    Toy overrides: lam (list of ints), windows (list of ints), gamma, sigma,
    delta (list), alpha (float or "auto"), periods and r_t (time profile).
    When time_step is given the concentration width of g must span at least
    four steps.
    """
    eps, p, T, a = _fraction(eps), _fraction(p), _fraction(T), _fraction(a)
    overrides = dict(overrides or {})
    if not (1 <= p < 2):
        raise ConfigError(f"need 1 <= p < 2, got p = {p}")
    if not (0 < eps < 1):
        raise ConfigError(f"need 0 < eps < 1, got eps = {eps}")
    if not (0 < T <= Fraction(1, 4)):
        raise ConfigError(f"need 0 < T <= 1/4, got T = {T}")
    if a <= 1:
        raise ConfigError("need a > 1")
    if stages < 1:
        raise ConfigError("at least one stage is required")
    gamma, sigma, b, beta, alpha = faithful_exponents(eps, p)
    nq = stages + 1
    la = math.log10(float(a))
    # lambda_q = ceil(a^(b^q)): the ceiling is invisible at this size
    log_lam = tuple(float(b) ** q * la for q in range(1, nq + 1))
    log_tau = tuple(math.log10(float(T)) - 15 * x for x in log_lam)
    log_delta = tuple(float(beta * (3 * b**2 - 2 * b**q)) * la for q in range(1, nq + 1))
    if mode == "faithful":
        if overrides:
            raise ConfigError("faithful mode takes no overrides")
        return ParameterSet(mode, eps, p, T, a, C0, gamma, sigma, b, beta, alpha, stages,
                            log_lam, log_tau, log_delta)
    if mode != "toy":
        raise ConfigError(f"unknown mode {mode!r}")

    recorded = {}
    try:
        lam = tuple(int(x) for x in overrides.pop("lam"))
        windows = tuple(int(x) for x in overrides.pop("windows"))
    except KeyError as exc:
        raise ConfigError(f"toy mode needs the override {exc.args[0]!r}") from exc
    recorded["lam"] = ",".join(map(str, lam))
    recorded["windows"] = ",".join(map(str, windows))
    if "gamma" in overrides:
        gamma = _fraction(overrides.pop("gamma"))
        recorded["gamma"] = str(gamma)
    if "sigma" in overrides:
        sigma = _fraction(overrides.pop("sigma"))
        recorded["sigma"] = str(sigma)
    delta = tuple(float(x) for x in overrides.pop("delta", ()))
    if delta:
        recorded["delta"] = ",".join(repr(x) for x in delta)
    else:
        delta = tuple(10.0**x for x in log_delta)
    alpha_in = str(overrides.pop("alpha", "auto")).strip()
    periods = overrides.pop("periods", None)
    r_t = overrides.pop("r_t", None)
    margin = float(overrides.pop("margin", 0.9))
    if overrides:
        raise ConfigError(f"unknown toy overrides: {sorted(overrides)}")

    if not (0 < gamma < 1 and 0 < sigma < 1):
        raise ConfigError("toy gamma and sigma must lie in (0, 1)")
    if len(lam) < nq or len(windows) < nq or len(delta) < nq:
        raise ConfigError(f"{stages} stage(s) need {nq} values of lam, windows and delta")
    if any(x < 2 for x in lam) or any(l2 <= l1 for l1, l2 in zip(lam, lam[1:])):
        raise ConfigError("lambda_q must be integers >= 2 and strictly increasing")
    if any(w < 1 for w in windows):
        raise ConfigError("window counts must be positive")
    taus = [float(T) / (w + 1) for w in windows]
    for q in range(1, nq):
        if taus[q] > taus[q - 1] / 6 * (1 + 1e-12):
            raise ConfigError(f"tau_{q + 1} = {taus[q]:.4g} exceeds tau_{q}/6; the new endpoint "
                              "plateaus would overlap the perturbation window")
    if any(d <= 0 for d in delta):
        raise ConfigError("delta_q must be positive")
    if alpha_in == "auto":
        from .geometry import build_direction_set
        rb, rv = build_direction_set("skew").radius, build_direction_set("sym").radius
        alpha = 1.05 * max(minimal_alpha(lam[q - 1], rb, rv, margin) for q in range(1, nq))
        recorded["alpha"] = f"auto -> {alpha!r}"
    else:
        alpha = float(alpha_in)
        recorded["alpha"] = repr(alpha)
        if alpha <= 0:
            raise ConfigError("alpha must be positive")
    if time_step is not None:
        for q in range(2, nq + 1):
            lq = lam[q - 1]
            P = int(periods) if periods is not None else max(1, round(lq ** float(sigma)))
            r = float(_fraction(r_t)) if r_t is not None else lq ** -2.0
            width = r / (2 * P)
            if width < 4 * time_step:
                raise ConfigError(f"time step {time_step:.3g} does not resolve the concentration "
                                  f"width {width:.3g} of g at lambda = {lq}")
    if periods is not None:
        recorded["periods"] = str(periods)
    if r_t is not None:
        recorded["r_t"] = str(r_t)
    log_lam_toy = tuple(math.log10(x) for x in lam[:nq])
    log_tau_toy = tuple(math.log10(x) for x in taus[:nq])
    log_delta_toy = tuple(math.log10(x) for x in delta[:nq])
    return ParameterSet("toy", eps, p, T, a, C0, gamma, sigma, b, beta, alpha, stages,
                        log_lam_toy, log_tau_toy, log_delta_toy, lam, windows, delta, recorded)


# ---------------------------------------------------------------------------
# Configuration files
# ---------------------------------------------------------------------------

TOY_DEFAULTS = {
    "mode": "toy",
    "eps": "1/2",
    "p": "1",
    "T": "1/40",
    "a": "2",
    "stages": "1",
    "lam": "2,4,8",
    "windows": "3,31,191",
    "gamma": "1/2",
    "sigma": "1/8",
    "alpha": "2.2",
    "delta": "1,1e-2,1e-4",
    "periods": "20",
    "r_t": "1",
    "margin": "0.9",
    "resolution": "32",
    "steps_per_T": "96",
    "time_samples": "0",
    "outer_samples": "16",
    "first_flow": "random",
    "flow_amplitude": "1.0",
    "flow_kmax": "2",
    "first_shear_amplitude": "1.0",
    "shear_amplitude": "1.0",
    "tail_tol": "0.9",
    "nu": "1",
    "seed": "7",
    "named_samples": "3",
}

_PARAM_KEYS = {"mode", "eps", "p", "T", "a", "stages"}
_TOY_KEYS = {"lam", "windows", "gamma", "sigma", "alpha", "delta", "periods", "r_t", "margin"}
_LIST_KEYS = {"lam", "windows", "delta"}


def parse_config(text: str) -> dict[str, str]:
    """Flat key=value lines; '#' starts a comment; later keys win."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        out[key.strip()] = value.strip()
    return out


def load_config(path: str | Path) -> dict[str, str]:
    return parse_config(Path(path).read_text())


@dataclass(frozen=True)
class RunConfig:
    """Numerical settings of a toy run."""

    resolution: int = 32
    steps_per_T: int = 96
    time_samples: int = 0          # samples in [2T, 3T]; 0 means every step
    outer_samples: int = 16        # coarse samples on [0, 2T) and on (3T, 1]
    first_flow: str = "random"     # "random" or "shear"
    flow_amplitude: float = 1.0
    flow_kmax: int = 2
    first_shear_amplitude: float = 1.0
    shear_amplitude: float = 1.0
    tail_tol: float = 0.9
    margin: float = 0.9
    nu: float = 1.0
    seed: int = 7
    named_samples: int = 3
    periods: int | None = None
    r_t: float | None = None

    @property
    def dt_over_T(self) -> float:
        return 1.0 / self.steps_per_T


def build_run(mapping: dict[str, str]) -> tuple[ParameterSet, RunConfig]:
    """ParameterSet and RunConfig from a flat mapping (config file plus CLI overrides)."""
    m = dict(mapping)
    mode = m.get("mode", "faithful")
    stages = int(m.get("stages", "1"))
    known = _PARAM_KEYS | _TOY_KEYS | set(RunConfig.__dataclass_fields__)
    unknown = sorted(set(m) - known)
    if unknown:
        raise ConfigError(f"unknown configuration keys: {unknown}")
    rc_fields = {}
    for name, f in RunConfig.__dataclass_fields__.items():
        if name in m:
            raw = m[name]
            if name in ("periods",):
                rc_fields[name] = int(raw)
            elif name == "r_t":
                rc_fields[name] = float(_fraction(raw))
            elif name == "first_flow":
                if raw not in ("random", "shear"):
                    raise ConfigError("first_flow must be 'random' or 'shear'")
                rc_fields[name] = raw
            elif f.type in ("int",):
                rc_fields[name] = int(raw)
            else:
                rc_fields[name] = float(_fraction(raw))
    run = RunConfig(**rc_fields)
    if run.resolution < 4 or run.resolution & (run.resolution - 1):
        raise ConfigError("resolution must be a power of two >= 4")
    if run.nu not in (0.0, 1.0):
        raise ConfigError("nu must be 0 or 1")
    overrides = {}
    if mode == "toy":
        for k in _TOY_KEYS:
            if k in m:
                overrides[k] = m[k].split(",") if k in _LIST_KEYS else m[k]
    T = m.get("T", "1/4")
    dt = float(_fraction(T)) / run.steps_per_T if mode == "toy" else None
    params = derive_parameters(m.get("eps", "1/2"), m.get("p", "1"), T, m.get("a", "2"),
                               mode, overrides, stages, dt)
    if mode == "toy":
        for q in range(1, stages + 2):
            if run.steps_per_T % (params.windows[q - 1] + 1):
                raise ConfigError(f"steps_per_T = {run.steps_per_T} must be divisible by "
                                  f"W_{q} + 1 = {params.windows[q - 1] + 1}")
    return params, run


# ---------------------------------------------------------------------------
# Streaming flows
# ---------------------------------------------------------------------------


class SteppedFlow:
    """An exact flow stepped from global step n0, keeping the last five states."""

    def __init__(self, grid: Grid3, name: str, n0: int, v: np.ndarray, b: np.ndarray,
                 dt: float, nu: float, n_end: int, cfl_max: float = 0.5):
        self.grid, self.name, self.dt, self.nu = grid, name, dt, nu
        self.n, self.n_end, self.cfl_max = n0, n_end, cfl_max
        self.E = propagator(grid, dt, nu)
        self.buf: deque = deque([(n0, v, b)], maxlen=5)

    def advance_to(self, n: int):
        while self.n < min(n, self.n_end):
            _, v, b = self.buf[-1]
            cfl = cfl_number(self.grid, v, b, self.dt)
            if cfl > self.cfl_max:
                raise SpectralError(f"{self.name}: CFL number {cfl:.3f} exceeds {self.cfl_max} "
                                    f"at t = {self.n * self.dt:.6g}")
            v, b = step(self.grid, v, b, self.dt, self.nu, self.E)
            if not (np.all(np.isfinite(v)) and np.all(np.isfinite(b))):
                raise SpectralError(f"{self.name}: non-finite state at t = {(self.n + 1) * self.dt:.6g}")
            self.n += 1
            self.buf.append((self.n, v, b))

    def state(self, m: int) -> tuple[np.ndarray, np.ndarray]:
        for n, v, b in self.buf:
            if n == m:
                return v, b
        raise SpectralError(f"{self.name}: step {m} is not buffered (have {[x[0] for x in self.buf]})")

    def sample(self, m: int) -> FlowSample:
        idx = [x[0] for x in self.buf]
        if m - 2 not in idx or m + 2 not in idx:
            raise SpectralError(f"{self.name}: step {m} needs steps {m - 2}..{m + 2}, have {idx}")
        k = idx.index(m)
        vs = [x[1] for x in self.buf]
        bs = [x[2] for x in self.buf]
        return FlowSample(vs[k], bs[k], fd_derivative(vs, self.dt, k), fd_derivative(bs, self.dt, k))


class ExactShear:
    """Closed-form shear flow; derivatives are analytic."""

    def __init__(self, grid: Grid3, name: str, A: float, dt: float, nu: float):
        self.grid, self.name, self.A, self.dt, self.nu = grid, name, A, dt, nu

    def advance_to(self, n: int):
        pass

    def at_time(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        return shear_coefficients(self.grid, self.A, t, self.nu)

    def state(self, m: int) -> tuple[np.ndarray, np.ndarray]:
        return self.at_time(m * self.dt)

    def sample(self, m: int) -> FlowSample:
        v, b = self.state(m)
        rate = -self.nu * TWO_PI**2
        return FlowSample(v, b, rate * v, rate * b, np.zeros(self.grid.spectral_shape, dtype=complex))


def random_solenoidal(grid: Grid3, rng: np.random.Generator, amplitude: float, kmax: int) -> np.ndarray:
    c = grid.leray(random_field(grid, "vector", rng, kmax))
    return c * (amplitude / math.sqrt(grid.l2_sq(c)))


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------


@dataclass
class StageEval:
    """Everything computed at one sample of a stage."""

    m: int
    t: float
    glued: GluedSample
    v: np.ndarray
    b: np.ndarray
    R: np.ndarray
    M: np.ndarray
    amp: object = None
    bundle: object = None
    dec: object = None


class InitialStage:
    """State q = 1: the first flow glued to the shear across [2T + 2tau_1, 3T - tau_1]."""

    q = 1

    def __init__(self, grid: Grid3, params: ParameterSet, first, second, dt: float):
        self.grid, self.params, self.first, self.second, self.dt = grid, params, first, second, dt
        self.T, self.tau = float(params.T), params.tau(1)
        self._cache: StageEval | None = None

    def on_step(self, n: int):
        pass

    def evaluate(self, m: int) -> StageEval:
        if self._cache is not None and self._cache.m == m:
            return self._cache
        t = m * self.dt
        s = initial_glue_sample(self.grid, self.T, self.tau, t, self.first.sample(m), self.second.sample(m))
        self._cache = StageEval(m, t, s, s.v, s.b, s.R, s.M)
        return self._cache

    def state(self, m: int) -> tuple[np.ndarray, np.ndarray]:
        e = self.evaluate(m)
        return e.v, e.b


class PerturbedStage:
    """State q + 1 built from state q: glue, densities, amplitudes, perturbation, assembly."""

    def __init__(self, grid: Grid3, params: ParameterSet, run: RunConfig, prev, first, second,
                 dt: float, perturb: bool = True):
        self.grid, self.params, self.run, self.prev = grid, params, run, prev
        self.first, self.second, self.dt, self.perturb = first, second, dt, perturb
        q = prev.q
        self.q = q + 1
        T = float(params.T)
        self.schedule = GluingSchedule.build(T, params.windows[q - 1])
        self.flows: dict[int, object] = {0: first, self.schedule.windows: second}
        self.shared: list[int] = []
        self.triggers: dict[int, int] = {}
        for i in range(1, self.schedule.windows):
            n_i = on_grid(self.schedule.times[i], dt, f"t_{i} of stage {q}")
            self.triggers[n_i + 2] = i
        self.lam_next = params.lam[q]
        self.dparams = DensityParams(params.delta_q(q + 1), params.lam_q(q), float(params.alpha), run.margin)
        if perturb:
            self.blocks = build_blocks(grid, self.lam_next, float(params.gamma), run.tail_tol)
            self.g, self.h = make_temporal(float(params.sigma), self.lam_next, run.periods, run.r_t)
        self._cache: StageEval | None = None
        self.keep_parts: set[int] = set()

    def on_step(self, n: int):
        i = self.triggers.get(n)
        if i is not None:
            n_i = n - 2
            v, b = self.prev.state(n_i)
            fv, fb = self.first.state(n_i)
            if np.array_equal(v, fv) and np.array_equal(b, fb):
                # identical data and a deterministic solver: the trajectory is the first flow's
                self.flows[i] = self.first
                self.shared.append(i)
            else:
                hi = self.schedule.flow_span(i)[1]
                n_end = int(math.ceil(hi / self.dt - 1e-9)) + 2
                self.flows[i] = SteppedFlow(self.grid, f"v_{i} (stage {self.prev.q})", n_i, v, b,
                                            self.dt, self.run.nu, n_end)
        for k, f in self.flows.items():
            if f is not self.first and f is not self.second:
                f.advance_to(n)

    def evaluate(self, m: int) -> StageEval:
        if self._cache is not None and self._cache.m == m:
            return self._cache
        grid, t = self.grid, m * self.dt
        glued = glue_sample(grid, self.schedule, t, lambda i: self.flows[i].sample(m))
        if not self.perturb:
            ev = StageEval(m, t, glued, glued.v, glued.b, glued.R, glued.M)
        else:
            eta, deta = float(self.schedule.eta(t)), float(self.schedule.eta(t, 1))
            amp = compute_amplitudes(grid, t, glued.R, glued.M, glued.dR, glued.dM, eta, deta,
                                     self.dparams, self.blocks)
            bundle = build_perturbation(grid, amp, self.blocks, self.g, self.h, keep_parts=m in self.keep_parts)
            dec = assemble(grid, glued, bundle, self.run.nu)
            ev = StageEval(m, t, glued, dec.v, dec.b, dec.R, dec.M, amp, bundle, dec)
        self._cache = ev
        return ev

    def state(self, m: int) -> tuple[np.ndarray, np.ndarray]:
        e = self.evaluate(m)
        return e.v, e.b


def on_grid(t: float, dt: float, what: str) -> int:
    n = int(round(t / dt))
    if abs(n * dt - t) > 1e-9 * max(dt, abs(t)):
        raise ConfigError(f"{what} = {t!r} is not on the stepper grid (dt = {dt!r})")
    return n


# ---------------------------------------------------------------------------
# Norms
# ---------------------------------------------------------------------------


def pair_norms(grid: Grid3, v: np.ndarray, b: np.ndarray, eps: float) -> dict[str, float]:
    """Spatial norms of the pair (v, b) as ||v|| + ||b||."""
    out = {"L2": 0.0, "Linf": 0.0, "C1-eps": 0.0, "H3": 0.0}
    for c in (v, b):
        out["L2"] += math.sqrt(grid.l2_sq(c))
        out["Linf"] += lp_of_values(grid.inverse(c), math.inf)
        out["C1-eps"] += besov_norm(grid, c, 1.0 - eps, math.inf, math.inf)
        out["H3"] += math.sqrt(grid.hs_sq(c, 3))
    return out


def stress_norms(grid: Grid3, R: np.ndarray, M: np.ndarray) -> dict[str, float]:
    return {"L1": l1(grid, R) + l1(grid, M), "H3": math.sqrt(grid.hs_sq(R, 3)) + math.sqrt(grid.hs_sq(M, 3))}


def l1(grid: Grid3, coef: np.ndarray) -> float:
    return lp_of_values(grid.inverse(coef), 1.0)


def _sym_defect(R: np.ndarray) -> float:
    ref = max(float(np.max(np.abs(R))), 1e-300)
    asym = float(np.max(np.abs(R - np.swapaxes(R, 0, 1))))
    tr = float(np.max(np.abs(R[0, 0] + R[1, 1] + R[2, 2])))
    return max(asym, tr) / ref if ref > 1e-300 else 0.0


def _anti_defect(M: np.ndarray) -> float:
    ref = float(np.max(np.abs(M)))
    return float(np.max(np.abs(M + np.swapaxes(M, 0, 1)))) / ref if ref > 0 else 0.0


@dataclass
class Track:
    """Per-sample spatial norms of one state, in time order."""

    q: int
    times: list[float] = field(default_factory=list)
    values: dict[str, list[float]] = field(default_factory=dict)

    def add(self, t: float, norms: dict[str, float]):
        self.times.append(t)
        for k, x in norms.items():
            self.values.setdefault(k, []).append(x)

    def integrate(self, key: str, p: float) -> float:
        order = np.argsort(self.times, kind="stable")
        t = np.asarray(self.times)[order]
        x = np.asarray(self.values[key])[order]
        return time_norm(x, trapezoid_weights(t), p)


@dataclass
class NormRow:
    stage: str
    norm: str
    value: float
    formula: str
    bound: float | None

    @property
    def passed(self) -> bool:
        return self.bound is None or self.value <= self.bound


@dataclass
class StageResult:
    """Outcome of a run: tracks, ledgers, norm rows, per-component norms and timings."""

    params: ParameterSet
    run: RunConfig
    grid: Grid3
    dt: float
    tracks: dict[int, Track]
    transitions: dict[int, Track]
    ledgers: list[tuple[str, LedgerEntry, bool]]      # (stage label, entry, hard)
    norms: list[NormRow] = field(default_factory=list)
    components: list[tuple[str, str, str, float]] = field(default_factory=list)
    log: list[str] = field(default_factory=list)
    evaluations: dict[int, list] = field(default_factory=dict)

    @property
    def hard_failures(self) -> list[tuple[str, LedgerEntry]]:
        return [(s, e) for s, e, hard in self.ledgers if hard and not e.passed]

    def ledger(self, name: str, stage: str | None = None) -> list[LedgerEntry]:
        return [e for s, e, _ in self.ledgers if e.name == name and (stage is None or s == stage)]


# ---------------------------------------------------------------------------
# Orchestration
# ---------------------------------------------------------------------------


def stage_sample_indices(n2: int, n3: int, count: int) -> list[int]:
    if count <= 0 or count >= n3 - n2 + 1:
        return list(range(n2, n3 + 1))
    return sorted({int(round(x)) for x in np.linspace(n2, n3, count)})


def run_pipeline(params: ParameterSet, run: RunConfig, stages: int | None = None, perturb: bool = True,
                 sample_times: Sequence[float] | None = None, keep: Iterable[str] = (),
                 dump_dir: str | Path | None = None, ledger_tol: float = 1e-8) -> StageResult:
    """Run ``stages`` stages of the construction and collect every diagnostic.

    sample_times restricts the stage samples in [2T, 3T] (each must lie on
    the stepper grid).  keep names per-sample quantities returned in
    result.evaluations: "residual" (momentum and induction defects of each
    new state).
    """
    if params.mode != "toy":
        raise ConfigError("field construction runs in toy mode only")
    stages = params.stages if stages is None else stages
    if stages > params.stages:
        raise ConfigError(f"parameters were derived for {params.stages} stage(s)")
    grid = Grid3(run.resolution)
    T = float(params.T)
    dt = T / run.steps_per_T
    eps = float(params.eps)
    n2, n3 = on_grid(2 * T, dt, "2T"), on_grid(3 * T, dt, "3T")
    rng = np.random.default_rng(run.seed)

    # exact flows
    if run.first_flow == "random":
        v0 = random_solenoidal(grid, rng, run.flow_amplitude, run.flow_kmax)
        b0 = random_solenoidal(grid, rng, run.flow_amplitude, run.flow_kmax)
        first = SteppedFlow(grid, "v^(1)", 0, v0, b0, dt, run.nu, n3 + 2)
    else:
        first = ExactShear(grid, "v^(1)", run.first_shear_amplitude, dt, run.nu)
    second = ExactShear(grid, "v^(2)", run.shear_amplitude, dt, run.nu)

    states: list = [InitialStage(grid, params, first, second, dt)]
    for _ in range(stages):
        states.append(PerturbedStage(grid, params, run, states[-1], first, second, dt, perturb))

    if sample_times is None:
        samples = stage_sample_indices(n2, n3, run.time_samples)
    else:
        samples = sorted({on_grid(t, dt, "sample time") for t in sample_times})
        if samples and (samples[0] < n2 or samples[-1] > n3):
            raise ConfigError("sample times must lie in [2T, 3T]")
    sample_set = set(samples)
    outer_stride = max(1, n2 // max(run.outer_samples, 1))
    outer = set(range(0, n2, outer_stride))

    # named residues where the glued stress lives and eta = 1
    for st in states[1:]:
        if not perturb:
            continue
        cand = [m for m in samples if st.schedule.locate(m * dt)[0] == "overlap"
                and float(st.schedule.eta(m * dt)) == 1.0 and float(st.schedule.eta(m * dt, 1)) == 0.0]
        if not cand:
            cand = [m for m in samples if float(st.schedule.eta(m * dt)) == 1.0]
        if cand and run.named_samples > 0:
            pick = np.linspace(0, len(cand) - 1, min(run.named_samples, len(cand)))
            st.keep_parts = {cand[int(round(x))] for x in pick}

    tracks = {st.q: Track(st.q) for st in states}
    transitions = {st.q: Track(st.q) for st in states[1:]}
    ledgers: list[tuple[str, LedgerEntry, bool]] = []
    evaluations: dict[int, list] = {st.q: [] for st in states}
    keep = set(keep)
    writers: dict[tuple[int, str], FieldDumpWriter] = {}
    if dump_dir is not None:
        Path(dump_dir).mkdir(parents=True, exist_ok=True)
        for st in states:
            for name in ("v", "b", "R", "M"):
                writers[(st.q, name)] = FieldDumpWriter(Path(dump_dir) / f"state{st.q}_{name}", grid,
                                                        f"{name}_{st.q}")

    def add_ledger(label, name, norm, value, tol, t, hard=True):
        ledgers.append((label, LedgerEntry(name, norm, float(value), tol, t), hard))

    for n in range(0, n3 + 3):
        first.advance_to(n)
        for st in states:
            st.on_step(n)
        m = n - 2
        if m < 0:
            continue
        t = m * dt
        if m in outer and m < n2:
            v, b = first.state(m)
            pn = pair_norms(grid, v, b, eps)
            for st in states:
                tracks[st.q].add(t, {**pn, "L1": 0.0, "H3 stress": 0.0})
        if m not in sample_set:
            continue
        evs = [st.evaluate(m) for st in states]
        for st, ev in zip(states, evs):
            label = f"state {st.q}"
            pn = pair_norms(grid, ev.v, ev.b, eps)
            sn = stress_norms(grid, ev.R, ev.M)
            tracks[st.q].add(t, {**pn, "L1": sn["L1"], "H3 stress": sn["H3"]})
            tau_q = params.tau(st.q)
            if t <= 2 * T + 2 * tau_q + 1e-12:
                fv, fb = first.state(m)
                add_ledger(label, "endpoint first plateau", "max |coef diff|",
                           max(np.max(np.abs(ev.v - fv)), np.max(np.abs(ev.b - fb))), 1e-12, t)
            if t >= 3 * T - tau_q - 1e-12:
                sv, sb = second.state(m)
                add_ledger(label, "endpoint second plateau", "max |coef diff|",
                           max(np.max(np.abs(ev.v - sv)), np.max(np.abs(ev.b - sb))), 1e-12, t)
            add_ledger(label, "symmetry R", "max rel", _sym_defect(ev.R), 1e-12, t)
            add_ledger(label, "antisymmetry M", "max rel", _anti_defect(ev.M), 1e-12, t)
            for name, arr in (("v", ev.v), ("b", ev.b), ("R", ev.R), ("M", ev.M)):
                w = writers.get((st.q, name))
                if w is not None:
                    w.append(t, grid.inverse(arr))
            if st.q == 1:
                g = ev.glued
                rv, rb = relaxed_residual(grid, g.v, g.b, g.p, g.R, g.M, g.dv, g.db, run.nu)
                res = (math.sqrt(grid.l2_sq(rv)), math.sqrt(grid.l2_sq(rb)))
                add_ledger(label, "residual momentum", "L2", res[0], None, t, False)
                add_ledger(label, "residual induction", "L2", res[1], None, t, False)
                if "residual" in keep:
                    evaluations[1].append((t, res))
        for st, ev in zip(states[1:], evs[1:]):
            _stage_diagnostics(grid, st, ev, states[st.q - 2].evaluate(m), transitions[st.q], add_ledger,
                               run, eps, ledger_tol, keep, evaluations)

    for w in writers.values():
        w.close()

    # closed-form tail on (3T, 1]
    tail = np.linspace(3 * T, 1.0, max(run.outer_samples, 1) + 1)[1:]
    for t in tail:
        v, b = second.at_time(float(t))
        pn = pair_norms(grid, v, b, eps)
        for st in states:
            tracks[st.q].add(float(t), {**pn, "L1": 0.0, "H3 stress": 0.0})

    result = StageResult(params, run, grid, dt, tracks, transitions, ledgers, evaluations=evaluations)
    result.log.append(DERIVATIVE_NOTE)
    result.log.append(f"grid N = {grid.n}, dt = {dt!r}, stage samples = {len(samples)}, "
                      f"outer samples = {len(outer)} + {len(tail)}")
    for st in states[1:]:
        result.log.append(f"stage {st.q - 1} -> {st.q}: windows = {st.schedule.windows}, "
                          f"tau = {st.schedule.tau!r}, flows shared with v^(1): {st.shared}")
        if perturb:
            result.log.append(f"stage {st.q - 1} -> {st.q}: lambda = {st.lam_next}, "
                              f"bump truncation loss = {st.blocks.tail:.3g}, "
                              f"g periods = {st.g.params['periods']}, width = {st.g.params['width']!r}")
    _norm_rows(result, perturb)
    return result


def _stage_diagnostics(grid, st: PerturbedStage, ev: StageEval, prev: StageEval, track: Track,
                       add_ledger, run: RunConfig, eps: float, tol: float, keep: set, evaluations):
    t = ev.t
    label = f"stage {st.q - 1}->{st.q}"
    glued = ev.glued
    kind, _ = st.schedule.locate(t)
    if kind == "exact":
        add_ledger(label, "glued stress off overlaps", "max |coef|",
                   max(np.max(np.abs(glued.R)), np.max(np.abs(glued.M))), 1e-10, t)
    add_ledger(label, "glued symmetry R", "max rel", _sym_defect(glued.R), 1e-12, t)
    add_ledger(label, "glued antisymmetry M", "max rel", _anti_defect(glued.M), 1e-12, t)
    r0 = relaxed_residual(grid, glued.v, glued.b, glued.p, glued.R, glued.M, glued.dv, glued.db, run.nu)
    res0 = tuple(math.sqrt(grid.l2_sq(r)) for r in r0)
    row = {"L1 glued": l1(grid, glued.R) + l1(grid, glued.M),
           "res glued momentum": res0[0], "res glued induction": res0[1]}
    d_pair = pair_norms(grid, ev.v - prev.v, ev.b - prev.b, eps)
    row.update({f"diff {k}": x for k, x in d_pair.items()})
    if ev.dec is None:
        add_ledger(label, "glue residual momentum", "L2", res0[0], None, t, False)
        add_ledger(label, "glue residual induction", "L2", res0[1], None, t, False)
        if "residual" in keep:
            evaluations[st.q].append((t, res0))
        track.add(t, row)
        return

    amp, bundle, dec = ev.amp, ev.bundle, ev.dec
    plateau = amp.eta == 1.0 and amp.deta == 0.0
    support = amp.eta > 0.0 or amp.deta != 0.0
    r1 = relaxed_residual(grid, dec.v, dec.b, dec.p, dec.R, dec.M, dec.dv, dec.db, run.nu)
    res1 = tuple(math.sqrt(grid.l2_sq(r)) for r in r1)
    # the two defects agree up to round-off in the terms of the equations
    scale = sum(math.sqrt(grid.l2_sq(x)) for x in (
        grid.div(dec.R), grid.div(dec.M), grid.div(glued.R), grid.div(glued.M),
        dec.dv, dec.db, grid.lap(dec.v), grid.lap(dec.b)))
    ident = max(math.sqrt(grid.l2_sq(a - c)) for a, c in zip(r0, r1)) / max(scale, 1e-300)
    add_ledger(label, "residual identity", "L2 rel to equation terms", ident, tol, t)
    add_ledger(label, "residual momentum", "L2", res1[0], None, t, False)
    add_ledger(label, "residual induction", "L2", res1[1], None, t, False)
    if "residual" in keep:
        evaluations[st.q].append((t, res1))
    chk = verify_relaxed_residual(grid, dec, run.nu)
    add_ledger(label, "div v", "L2 rel", chk["div v"], tol, t)
    add_ledger(label, "div b", "L2 rel", chk["div b"], tol, t)
    if support:
        lim_b, lim_v = st.dparams.margin * st.blocks.skew.radius, st.dparams.margin * st.blocks.sym.radius
        add_ledger(label, "skew margin", "sup ratio", amp.ratio_b, lim_b, t)
        add_ledger(label, "sym margin", "sup ratio", amp.ratio_v, lim_v, t)
        divs = divergence_residuals(grid, bundle)
        add_ledger(label, "div(w_p + w_c)", "L2 rel", divs["w_p+w_c"], tol, t)
        add_ledger(label, "div(d_p + d_c)", "L2 rel", divs["d_p+d_c"], tol, t)
        add_ledger(label, "div w_t", "L2 rel", divs["w_t"], 1e-10, t)
        add_ledger(label, "div d_t", "L2 rel", divs["d_t"], 1e-10, t)
        for e in cancellation_ledgers(grid, glued, amp, bundle, st.blocks, tol):
            ledgers_hard = e.tolerance is not None
            add_ledger(label, e.name, e.norm, e.value, e.tolerance, t, ledgers_hard)
    else:
        size = max(float(np.max(np.abs(c))) for c in bundle.components().values())
        add_ledger(label, "temporal support", "max |coef|", size, 0.0, t)
    if plateau:
        sk, sy = reconstruction_residuals(amp, st.blocks)
        add_ledger(label, "skew reconstruction", "sup rel", sk, 1e-10, t)
        add_ledger(label, "sym reconstruction", "sup rel", sy, 1e-10, t)
    if ev.m in st.keep_parts:
        add_ledger(label, "curl potential route", "L2 rel", potential_identity(grid, amp, st.blocks, st.g),
                   1e-10, t)
        nr = named_residues(grid, glued, amp, bundle, st.blocks, dec)
        for name, x in nr.values.items():
            add_ledger(label, name, "L1", x, None, t, False)

    row.update({
        "L1 new": l1(grid, dec.R) + l1(grid, dec.M),
        "L1 R_lin": l1(grid, dec.R_lin), "L1 R_osc": l1(grid, dec.R_osc),
        "L1 M_lin": l1(grid, dec.M_lin), "L1 M_osc": l1(grid, dec.M_osc),
        "res momentum": res1[0], "res induction": res1[1],
    })
    for name, c in bundle.components().items():
        row[f"{name} L2"] = math.sqrt(grid.l2_sq(c))
        row[f"{name} L1"] = l1(grid, c)
        row[f"{name} Linf"] = lp_of_values(grid.inverse(c), math.inf)
    track.add(t, row)


def _norm_rows(result: StageResult, perturb: bool):
    params = result.params
    p = float(params.p)
    rows = result.norms
    for q, tr in sorted(result.tracks.items()):
        lab = f"state {q}"
        sum_delta = sum(params.delta_q(i) ** 0.5 for i in range(1, q + 1))
        f_sum = f"sum_(i<={q}) delta_i^(1/2)"
        l2 = tr.integrate("L2", 2.0)
        lpinf = tr.integrate("Linf", p)
        l1c = tr.integrate("C1-eps", 1.0)
        rows.append(NormRow(lab, "L2_tx (v,b)", l2, f_sum, sum_delta))
        rows.append(NormRow(lab, f"L{p:g}_t Linf_x (v,b)", lpinf, f_sum, sum_delta))
        rows.append(NormRow(lab, f"L1_t C^(1-eps)_x (v,b)", l1c, f_sum, sum_delta))
        rows.append(NormRow(lab, "sum of the three (v,b) norms", l2 + lpinf + l1c, f_sum, sum_delta))
        lam6 = params.lam_q(q) ** 6
        rows.append(NormRow(lab, "Linf_t H3 (v,b)", tr.integrate("H3", math.inf), f"lambda_{q}^6", lam6))
        rows.append(NormRow(lab, "Linf_t H3 (R,M)", tr.integrate("H3 stress", math.inf), f"lambda_{q}^6", lam6))
        if q + 1 <= len(params.delta):
            bound = params.delta_q(q + 1) * params.lam_q(q) ** (-6 * float(params.alpha))
            rows.append(NormRow(lab, "L1_tx (R,M)", tr.integrate("L1", 1.0),
                                f"delta_{q + 1} lambda_{q}^(-6 alpha)", bound))
        else:
            rows.append(NormRow(lab, "L1_tx (R,M)", tr.integrate("L1", 1.0), "none", None))
        for kind in ("first", "second"):
            vals = [e.value for s, e, _ in result.ledgers if s == lab and e.name == f"endpoint {kind} plateau"]
            rows.append(NormRow(lab, f"endpoint {kind} plateau max diff", max(vals) if vals else 0.0,
                                "bitwise (1e-12)", 1e-12))
    for q, tr in sorted(result.transitions.items()):
        lab = f"stage {q - 1}->{q}"
        bound = params.delta_q(q) ** 0.5
        f_b = f"delta_{q}^(1/2)"
        d2 = tr.integrate("diff L2", 2.0)
        dp = tr.integrate("diff Linf", p)
        dc = tr.integrate("diff C1-eps", 1.0)
        rows.append(NormRow(lab, "diff L2_tx (v,b)", d2, f_b, bound))
        rows.append(NormRow(lab, f"diff L{p:g}_t Linf_x (v,b)", dp, f_b, bound))
        rows.append(NormRow(lab, "diff L1_t C^(1-eps)_x (v,b)", dc, f_b, bound))
        rows.append(NormRow(lab, "diff sum of the three", d2 + dp + dc, f_b, bound))
        glued_l1 = tr.integrate("L1 glued", 1.0)
        rows.append(NormRow(lab, "L1_tx (Rbar,Mbar)", glued_l1, "none", None))
        rows.append(NormRow(lab, "L2_t L2_x glue residual momentum", tr.integrate("res glued momentum", 2.0),
                            "none", None))
        rows.append(NormRow(lab, "L2_t L2_x glue residual induction", tr.integrate("res glued induction", 2.0),
                            "none", None))
        if not perturb:
            continue
        new_l1 = tr.integrate("L1 new", 1.0)
        rows.append(NormRow(lab, f"L1_tx (R_{q},M_{q})", new_l1, "L1_tx (Rbar,Mbar)", glued_l1))
        for k in ("R_lin", "R_osc", "M_lin", "M_osc"):
            rows.append(NormRow(lab, f"L1_tx {k}", tr.integrate(f"L1 {k}", 1.0), "none", None))
        rows.append(NormRow(lab, "L2_t L2_x residual momentum", tr.integrate("res momentum", 2.0), "none", None))
        rows.append(NormRow(lab, "L2_t L2_x residual induction", tr.integrate("res induction", 2.0), "none", None))
        for comp in ("w_p", "w_c", "w_t", "d_p", "d_c", "d_t"):
            for kind, pt in (("L2", 2.0), ("L1", 1.0), ("Linf", math.inf)):
                result.components.append((lab, comp, f"L{pt:g}_t {kind}_x",
                                          tr.integrate(f"{comp} {kind}", pt)))


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    if x is None:
        return ""
    return repr(float(x))


def export_report(result: StageResult, out_dir: str | Path) -> list[Path]:
    """norms.csv, ledgers.csv, components.csv and run.log in out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    p = out / "norms.csv"
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["stage", "norm", "value", "bound_formula", "bound_value", "pass"])
        for r in result.norms:
            w.writerow([r.stage, r.norm, _fmt(r.value), r.formula, _fmt(r.bound), "pass" if r.passed else "fail"])
    paths.append(p)
    p = out / "ledgers.csv"
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["stage", "t", "term", "norm", "value", "tolerance", "hard", "pass"])
        for s, e, hard in result.ledgers:
            w.writerow([s, _fmt(e.t), e.name, e.norm, _fmt(e.value), _fmt(e.tolerance),
                        "yes" if hard else "no", "pass" if e.passed else "fail"])
    paths.append(p)
    p = out / "components.csv"
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["stage", "component", "norm", "value"])
        for row in result.components:
            w.writerow([*row[:3], _fmt(row[3])])
    paths.append(p)
    p = out / "params.csv"
    write_params(result.params, p)
    paths.append(p)
    p = out / "run.log"
    p.write_text("\n".join(result.log) + "\n")
    paths.append(p)
    return paths


def write_params(params: ParameterSet, path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "value"])
        w.writerows(params.rows())
    return path


def summarize(result: StageResult) -> list[str]:
    """One line per ledger term: worst value, tolerance and pass count."""
    groups: dict[tuple[str, str], list[tuple[LedgerEntry, bool]]] = {}
    for s, e, hard in result.ledgers:
        groups.setdefault((s, e.name), []).append((e, hard))
    lines = []
    for (s, name), items in groups.items():
        worst = max(e.value for e, _ in items)
        hard = any(h for _, h in items)
        fails = sum(1 for e, h in items if h and not e.passed)
        tol = next((e.tolerance for e, _ in items if e.tolerance is not None), None)
        status = ("FAIL" if fails else "pass") if hard else "info"
        tol_s = f"tol {tol:.1e}" if tol is not None else "no tol"
        lines.append(f"{status:4s}  {s:14s} {name:36s} worst {worst:.3e}  {tol_s}  ({len(items)} samples)")
    return lines


# ---------------------------------------------------------------------------
# Command line
# ---------------------------------------------------------------------------


def _mapping_from_args(args) -> dict[str, str]:
    mapping: dict[str, str] = {}
    if args.toy:
        mapping.update(TOY_DEFAULTS)
    if args.config:
        mapping.update(load_config(args.config))
    if args.resolution is not None:
        mapping["resolution"] = str(args.resolution)
    if args.time_samples is not None:
        mapping["time_samples"] = str(args.time_samples)
    if args.seed is not None:
        mapping["seed"] = str(args.seed)
    if getattr(args, "stages", None) is not None:
        mapping["stages"] = str(args.stages)
    return mapping


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mhdstage", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    helps = {
        "params": "derive and print the parameter cascade",
        "glue": "run the gluing step only and check the glued quintuple",
        "stage": "run one full stage and write reports",
        "pipeline": "run several stages and write reports",
        "verify": "run the stage(s) and print the ledger summary; exit 1 on any hard failure",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, help=text)
        sp.add_argument("--config", help="flat key=value configuration file")
        sp.add_argument("--toy", action="store_true", help="start from the built-in toy configuration")
        sp.add_argument("--resolution", type=int, help="grid points per axis")
        sp.add_argument("--time-samples", type=int, help="stage samples in [2T, 3T] (0 = every step)")
        sp.add_argument("--stages", type=int, help="number of stages")
        sp.add_argument("--output-dir", help="directory for CSV reports")
        sp.add_argument("--dump-fields", action="store_true", help="write v, b, R, M dumps of every state")
        sp.add_argument("--seed", type=int, help="seed of the random first flow")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        mapping = _mapping_from_args(args)
        if args.command == "stage":
            mapping["stages"] = "1"
        params, run = build_run(mapping)
    except (ConfigError, SpectralError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.command == "params":
        for k, v in params.rows():
            print(f"{k} = {v}")
        if args.output_dir:
            Path(args.output_dir).mkdir(parents=True, exist_ok=True)
            write_params(params, Path(args.output_dir) / "params.csv")
        return 0
    if params.mode != "toy":
        print("error: field construction needs toy mode (use --toy or mode=toy)", file=sys.stderr)
        return 2
    out = Path(args.output_dir) if args.output_dir else None
    dump = (out or Path(".")) / "fields" if args.dump_fields else None
    try:
        result = run_pipeline(params, run, perturb=args.command != "glue", dump_dir=dump)
    except (ConfigError, SpectralError, MarginError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if out is not None:
        export_report(result, out)
    for line in result.log:
        print(line)
    for r in result.norms:
        b = "" if r.bound is None else f" <= {r.bound:.4g} ({r.formula}) {'pass' if r.passed else 'fail'}"
        print(f"{r.stage:14s} {r.norm:40s} {r.value:.6g}{b}")
    if args.command == "verify" or args.command == "glue":
        for line in summarize(result):
            print(line)
    fails = result.hard_failures
    if fails:
        names = sorted({f"{s}: {e.name}" for s, e in fails})
        print("hard ledger failures: " + "; ".join(names), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
