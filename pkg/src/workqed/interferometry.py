"""Ramsey-interferometric readout of the work characteristic function.

Two protocol variants are implemented: the ideal single-ancilla protocol
(diagonal conditional coupling, optionally with explicit bath modes for the
open-system runs) and the two-qubit circuit-QED protocol where the drives
are realized indirectly through the qubit splittings.

The ideal variant exploits the piecewise structure of the drives: constant
segments propagate through a single spectral exponential and ramp segments
through the time-ordered stepper, with propagators cached across the u-sweep
(the delayed copy of the ramp generates the identical unitary).
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import quad

from .errors import GuardLevelError
from .evolve import PropagationConfig, propagator, _unitarity_defect
from .model import (
    BathMode,
    DrivePair,
    ModelParams,
    Piece,
    PiecewiseSchedule,
    Schedule,
    drive_exclusive,
    drive_inclusive,
    h_system,
    h_system_bath,
    qubit_splittings,
    two_diag_block,
    _osc_ops,
)
from .qop import (
    DensityMatrix,
    HADAMARD,
    Operator,
    PI_MINUS,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    SpaceLayout,
    embed_matrix,
    occupation_marginal,
    partial_trace,
    thermal_state,
)

GUARD_POP_TOL = 1e-6
G_OVERSHOOT_TOL = 1e-6
# The protocol-internal ramp integration is cheap (cached once per sweep), so
# it runs at a finer step than the generic default.
RAMP_DT = 5e-4


@dataclass(frozen=True)
class GSample:
    """One characteristic-function sample G[u] with its raw readout."""

    u: float
    g_value: complex
    raw_L: complex
    phase_removed: bool = True
    shots_used: int | None = None

    def __post_init__(self):
        if self.u < 0:
            raise ValueError("u must be nonnegative")
        if self.shots_used is None and abs(self.g_value) > 1.0 + G_OVERSHOOT_TOL:
            raise ValueError(f"|G| = {abs(self.g_value)} exceeds 1")


@dataclass(frozen=True)
class ProtocolRun:
    """One fully specified protocol execution at a single u."""

    u: float
    variant: str
    work_kind: str
    drive: DrivePair
    shots: int | None = None
    seed: object = None                 # anything numpy's default_rng accepts

    def __post_init__(self):
        if self.u < 0:
            raise ValueError("u must be nonnegative")
        if self.variant not in ("ideal-single", "cqed-two-qubit", "open-system"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.work_kind not in ("inclusive", "exclusive"):
            raise ValueError(f"unknown work_kind {self.work_kind!r}")
        if self.shots is not None and self.shots < 1:
            raise ValueError("shots must be >= 1")


@dataclass(frozen=True)
class ProtocolSpec:
    """Template for one protocol family swept over u."""

    variant: str = "ideal-single"       # ideal-single | cqed-two-qubit | open-system
    work_kind: str = "inclusive"        # inclusive | exclusive
    reverse: bool = False
    eps: float = 1.0                    # ancilla splitting of the ideal variant
    use_full_rabi: bool = True
    bath: tuple[BathMode, ...] = ()
    shots: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.variant not in ("ideal-single", "cqed-two-qubit", "open-system"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.work_kind not in ("inclusive", "exclusive"):
            raise ValueError(f"unknown work_kind {self.work_kind!r}")
        if self.shots is not None and self.shots < 1:
            raise ValueError("shots must be >= 1")
        if self.variant == "open-system" and not self.bath:
            raise ValueError("open-system variant needs bath modes")


@dataclass(frozen=True)
class SystemSpec:
    """Driven system (optionally with explicit bath modes) seen by the ancilla."""

    params: ModelParams
    bath: tuple[BathMode, ...] = ()

    @property
    def layout(self) -> SpaceLayout:
        return SpaceLayout((self.params.n_fock,)
                           + tuple(m.n_levels for m in self.bath))

    def h(self, lam: float) -> np.ndarray:
        if self.bath:
            return h_system_bath(lam, self.params, self.bath).entries
        return h_system(lam, self.params).entries


def build_drive(params: ModelParams, spec: ProtocolSpec, u: float) -> DrivePair:
    lam = params.ramp_reversed() if spec.reverse else params.ramp()
    if spec.work_kind == "exclusive":
        return drive_exclusive(lam, params.tau, u)
    return drive_inclusive(lam, params.tau, u)


# ---------------------------------------------------------------------------
# Segment propagation with caching
# ---------------------------------------------------------------------------

def _const_eig(system: SystemSpec, value: float, cache: dict):
    key = ("eig", system, value)
    if key not in cache:
        h = system.h(value)
        cache[key] = np.linalg.eigh((h + h.conj().T) / 2.0)
    return cache[key]


def _segment_unitary(system: SystemSpec, piece: Piece, cfg: PropagationConfig,
                     cache: dict) -> np.ndarray:
    dur = piece.duration
    if dur <= 1e-14:
        return np.eye(system.layout.total_dim, dtype=complex)
    if piece.is_constant:
        vals, vecs = _const_eig(system, piece.c0, cache)
        return (vecs * np.exp(-1j * vals * dur)) @ vecs.conj().T
    key = ("ramp", system, piece.c0, piece.slope, round(dur, 12),
           cfg.dt, cfg.method)
    if key not in cache:
        layout = system.layout
        builder = lambda t: Operator(layout, system.h(piece.c0 + piece.slope * t))
        cache[key] = propagator(builder, 0.0, dur, cfg).entries
    return cache[key]


def branch_propagator(system: SystemSpec, chi: PiecewiseSchedule,
                      cfg: PropagationConfig, cache: dict) -> np.ndarray:
    """Unitary generated by H(chi_t) over the schedule domain."""
    u = np.eye(system.layout.total_dim, dtype=complex)
    for piece in chi.pieces:
        u = _segment_unitary(system, piece, cfg, cache) @ u
    return u


# ---------------------------------------------------------------------------
# Readout helpers
# ---------------------------------------------------------------------------

def tomography_expectations(rho2a: DensityMatrix) -> tuple[float, float]:
    """Expectations of the two-qubit readout operators on the (-,+)/(-,-)
    subspace."""
    if rho2a.layout.factors != (2, 2):
        raise ValueError("expects a two-qubit state")
    m = rho2a.entries
    sigma_z2 = np.diag([0.0, 0.0, 1.0, -1.0]).astype(complex)
    sigma_y2 = np.zeros((4, 4), dtype=complex)
    sigma_y2[2, 3] = -1.0j
    sigma_y2[3, 2] = 1.0j
    return (float(np.trace(m @ sigma_z2).real), float(np.trace(m @ sigma_y2).real))


def emulate_shots(exp_z: float, exp_y: float, shots: int, seed) -> tuple[float, float]:
    """Finite-statistics estimates from binomial sampling of +-1 outcomes."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    for e in (exp_z, exp_y):
        if abs(e) > 1.0 + 1e-9:
            raise ValueError(f"expectation {e} outside [-1, 1]")
    rng = np.random.default_rng(seed)
    ests = []
    for e in (exp_z, exp_y):
        p = min(1.0, max(0.0, (1.0 + e) / 2.0))
        ests.append(2.0 * rng.binomial(shots, p) / shots - 1.0)
    return ests[0], ests[1]


def _check_guard_levels(entries: np.ndarray, layout: SpaceLayout,
                        diagnostics: dict | None = None):
    """Population in the top two levels of every oscillator factor must stay
    below tolerance; truncation error becomes a detected failure."""
    rho = DensityMatrix(layout, entries, check=False)
    worst = 0.0
    for slot, dim in enumerate(layout.factors):
        if dim <= 2:
            continue
        pops = occupation_marginal(rho, slot)
        worst = max(worst, float(pops[-2:].sum()))
    if diagnostics is not None:
        diagnostics["guard_pop_max"] = max(diagnostics.get("guard_pop_max", 0.0), worst)
    if worst > GUARD_POP_TOL:
        raise GuardLevelError(
            f"guard-level population {worst:.3e} > {GUARD_POP_TOL}")


def _phase_integral(sched: Schedule, t0: float, t1: float) -> float:
    """Quadrature of a splitting schedule with its breakpoints as nodes."""
    pts = [p for p in sched.breakpoints() if t0 < p < t1]
    val, err = quad(sched.value, t0, t1, points=pts or None,
                    limit=max(200, 10 * (len(pts) + 1)),
                    epsabs=1e-12, epsrel=1e-10)
    if err > 1e-6 * max(1.0, abs(val)):
        raise ValueError(f"phase quadrature failed to converge: error {err:.3e}")
    return val


# ---------------------------------------------------------------------------
# Protocol runs
# ---------------------------------------------------------------------------

def run_single_ancilla(params: ModelParams, drive: DrivePair, u: float,
                       eps: float = 1.0, bath: tuple[BathMode, ...] = (),
                       cfg: PropagationConfig | None = None,
                       shots: int | None = None, seed=None,
                       cache: dict | None = None,
                       diagnostics: dict | None = None) -> GSample:
    """Four-step single-ancilla protocol under the ideal diagonal coupling.

    Prepares |-><-| x rho_S, applies the Hadamard, evolves the block-diagonal
    compound for tau+u, applies the Hadamard again, and reads L(u) off the
    reduced ancilla state; the known phase e^{-i eps(tau+u)} is divided out.
    """
    if not math.isclose(drive.u, u, rel_tol=0, abs_tol=1e-12):
        raise ValueError(f"drive was built for u={drive.u}, not {u}")
    cfg = cfg or PropagationConfig(dt=RAMP_DT)
    cache = {} if cache is None else cache
    system = SystemSpec(params, bath)
    T = drive.total_T
    d = system.layout.total_dim

    lam_init = 0.0 if drive.kind == "exclusive" else drive.chi_plus.value(0.0)
    vals, vecs = _const_eig(system, lam_init, cache)
    w = np.exp(-params.beta * (vals - vals[0]))
    rho_s = (vecs * (w / w.sum())) @ vecs.conj().T

    u_plus = branch_propagator(system, drive.chi_plus, cfg, cache)
    u_minus = branch_propagator(system, drive.chi_minus, cfg, cache)
    if diagnostics is not None:
        defect = max(_unitarity_defect(u_plus), _unitarity_defect(u_minus))
        diagnostics["unitarity_defect_max"] = max(
            diagnostics.get("unitarity_defect_max", 0.0), defect)

    full = np.zeros((2 * d, 2 * d), dtype=complex)
    full[:d, :d] = np.exp(-1j * eps * T / 2.0) * u_plus
    full[d:, d:] = np.exp(1j * eps * T / 2.0) * u_minus

    layout = SpaceLayout((2,) + system.layout.factors)
    rho0 = np.kron(PI_MINUS, rho_s)
    had = np.kron(HADAMARD, np.eye(d))
    rho_t = had @ full @ had @ rho0 @ had @ full.conj().T @ had
    _check_guard_levels(rho_t, layout, diagnostics)

    rho_a = partial_trace(DensityMatrix(layout, rho_t, check=False), keep=(0,))
    exp_x = float(np.trace(rho_a.entries @ SIGMA_X).real)
    if abs(exp_x) > 1e-8:
        raise ValueError(f"ancilla state has sigma-x component {exp_x:.3e}")
    exp_z = float(np.trace(rho_a.entries @ SIGMA_Z).real)
    exp_y = float(np.trace(rho_a.entries @ SIGMA_Y).real)
    shots_used = None
    if shots is not None:
        exp_z, exp_y = emulate_shots(exp_z, exp_y, shots, seed)
        shots_used = shots
    raw_l = complex(-exp_z, exp_y)
    g = raw_l * np.exp(-1j * eps * T)
    return GSample(u=u, g_value=g, raw_L=raw_l, phase_removed=True,
                   shots_used=shots_used)


def _two_qubit_full_unitary(params: ModelParams, eps1: Schedule, eps2: Schedule,
                            T: float, cfg: PropagationConfig) -> np.ndarray:
    layout = params.layout_two()
    n_half, x, _ = _osc_ops(params.n_fock)
    base = (params.omega * embed_matrix(n_half, 2, layout).entries
            + embed_matrix(x, 2, layout).entries
            @ (params.g1 * embed_matrix(SIGMA_X, 0, layout).entries
               + params.g2 * embed_matrix(SIGMA_X, 1, layout).entries))
    z1 = embed_matrix(SIGMA_Z, 0, layout).entries / 2.0
    z2 = embed_matrix(SIGMA_Z, 1, layout).entries / 2.0

    def builder(t: float) -> Operator:
        return Operator(layout, base + eps1.value(t) * z1 + eps2.value(t) * z2)

    return propagator(builder, 0.0, T, cfg).entries


def _two_qubit_diag_unitary(params: ModelParams, eps1: Schedule, eps2: Schedule,
                            T: float, cfg: PropagationConfig) -> np.ndarray:
    d = params.n_fock
    full = np.zeros((4 * d, 4 * d), dtype=complex)
    layout_block = SpaceLayout((d,))
    for i, (s1, s2) in enumerate([(1, 1), (1, -1), (-1, 1), (-1, -1)]):
        builder = lambda t: Operator(layout_block, two_diag_block(
            s1, s2, eps1.value(t), eps2.value(t), params))
        block = propagator(builder, 0.0, T, cfg).entries
        full[i * d:(i + 1) * d, i * d:(i + 1) * d] = block
    return full


def run_two_ancilla(params: ModelParams, drive: DrivePair, u: float,
                    use_full_rabi: bool = True,
                    cfg: PropagationConfig | None = None,
                    shots: int | None = None, seed=None,
                    diagnostics: dict | None = None) -> GSample:
    """Two-qubit circuit-QED protocol: the conditional drives are realized by
    the (clamped) qubit-splitting schedules, and L2(u) is read out through
    the two-qubit tomography operators."""
    if not math.isclose(drive.u, u, rel_tol=0, abs_tol=1e-12):
        raise ValueError(f"drive was built for u={drive.u}, not {u}")
    cfg = cfg or PropagationConfig()
    eps1, eps2 = qubit_splittings(drive, params)
    T = drive.total_T

    lam_init = drive.chi_plus.value(0.0)
    rho_osc = thermal_state(h_system(lam_init, params), params.beta)
    layout = params.layout_two()
    rho0 = np.kron(PI_MINUS, np.kron(PI_MINUS, rho_osc.entries))
    had2 = np.kron(np.eye(2), np.kron(HADAMARD, np.eye(params.n_fock)))

    if use_full_rabi:
        u_full = _two_qubit_full_unitary(params, eps1, eps2, T, cfg)
    else:
        u_full = _two_qubit_diag_unitary(params, eps1, eps2, T, cfg)
    if diagnostics is not None:
        diagnostics["unitarity_defect_max"] = max(
            diagnostics.get("unitarity_defect_max", 0.0),
            _unitarity_defect(u_full))

    rho_t = had2 @ u_full @ had2 @ rho0 @ had2 @ u_full.conj().T @ had2
    _check_guard_levels(rho_t, layout, diagnostics)

    rho_2a = partial_trace(DensityMatrix(layout, rho_t, check=False), keep=(0, 1))
    exp_z, exp_y = tomography_expectations(rho_2a)
    shots_used = None
    if shots is not None:
        exp_z, exp_y = emulate_shots(exp_z, exp_y, shots, seed)
        shots_used = shots
    raw_l = complex(-exp_z, -exp_y)
    phase = _phase_integral(eps2, 0.0, T)
    g = raw_l * np.exp(1j * phase)
    return GSample(u=u, g_value=g, raw_L=raw_l, phase_removed=True,
                   shots_used=shots_used)


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

def _run_one(params: ModelParams, spec: ProtocolSpec, u: float,
             cfg: PropagationConfig | None, cache: dict,
             seed, diagnostics: dict | None) -> GSample:
    run = ProtocolRun(u=u, variant=spec.variant, work_kind=spec.work_kind,
                      drive=build_drive(params, spec, u), shots=spec.shots,
                      seed=seed)
    if run.variant in ("ideal-single", "open-system"):
        return run_single_ancilla(
            params, run.drive, run.u, eps=spec.eps, bath=spec.bath, cfg=cfg,
            shots=run.shots, seed=run.seed, cache=cache,
            diagnostics=diagnostics)
    return run_two_ancilla(
        params, run.drive, run.u, use_full_rabi=spec.use_full_rabi, cfg=cfg,
        shots=run.shots, seed=run.seed, diagnostics=diagnostics)


def _sweep_chunk(args):
    params, spec, us, indices, cfg = args
    cache: dict = {}
    diagnostics: dict = {}
    out = []
    for u, idx in zip(us, indices):
        out.append(_run_one(params, spec, u, cfg, cache, (spec.seed, idx),
                            diagnostics))
    return out, diagnostics


def sweep_u(params: ModelParams, spec: ProtocolSpec, u_grid,
            cfg: PropagationConfig | None = None, n_workers: int = 1,
            diagnostics: dict | None = None) -> list[GSample]:
    """One GSample per u, order-stable; per-u runs are independent.

    Shot RNG seeds derive deterministically from (spec.seed, u index), so
    results do not depend on worker count.
    """
    u_grid = list(u_grid)
    if any(u < 0 for u in u_grid):
        raise ValueError("u grid must be nonnegative")
    if sorted(u_grid) != u_grid:
        raise ValueError("u grid must be sorted")
    if not u_grid:
        return []
    indices = list(range(len(u_grid)))
    if n_workers <= 1:
        samples, diag = _sweep_chunk((params, spec, u_grid, indices, cfg))
    else:
        chunks = []
        size = math.ceil(len(u_grid) / n_workers)
        for i in range(0, len(u_grid), size):
            chunks.append((params, spec, u_grid[i:i + size],
                           indices[i:i + size], cfg))
        samples, diag = [], {}
        with ProcessPoolExecutor(max_workers=n_workers) as ex:
            for part, d in ex.map(_sweep_chunk, chunks):
                samples.extend(part)
                for k, v in d.items():
                    diag[k] = max(diag.get(k, 0.0), v)
    if diagnostics is not None:
        for k, v in diag.items():
            diagnostics[k] = max(diagnostics.get(k, 0.0), v)
    return samples
