"""Hamiltonians and drive schedules for the driven-oscillator experiments.

Covers the parametrically driven oscillator, the idealized ancilla coupling,
the single- and two-qubit Rabi models with their soft-mode (block-diagonal)
approximations, the inclusive/exclusive conditional drive pairs, and the
qubit-splitting schedules with their divergence cutoff.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, asdict
from functools import lru_cache

import numpy as np

from .qop import (
    Operator,
    SpaceLayout,
    fock_ops,
    embed_matrix,
    SIGMA_X,
    SIGMA_Z,
)

TWO_PI = 2.0 * math.pi


class RegimeWarning(UserWarning):
    """Parameters drift out of the far-detuned regime the approximations need."""


# ---------------------------------------------------------------------------
# Schedules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Piece:
    """One tile of a piecewise-linear schedule: value = c0 + slope*(t - t0)."""

    t0: float
    t1: float
    c0: float
    slope: float = 0.0

    @property
    def duration(self) -> float:
        return self.t1 - self.t0

    @property
    def is_constant(self) -> bool:
        return self.slope == 0.0

    def value(self, t: float) -> float:
        return self.c0 + self.slope * (t - self.t0)


class Schedule:
    """Real-valued function of time on a closed domain.

    Concrete schedules implement ``value`` and expose ``domain`` plus the
    ``breakpoints`` where smoothness may fail (used as quadrature nodes).
    """

    domain: tuple[float, float]

    def value(self, t: float) -> float:
        raise NotImplementedError

    def values(self, ts: np.ndarray) -> np.ndarray:
        return np.array([self.value(t) for t in np.asarray(ts, dtype=float)])

    def breakpoints(self) -> list[float]:
        return list(self.domain)

    def __call__(self, t):
        if np.ndim(t) == 0:
            return self.value(float(t))
        return self.values(t)


@dataclass(frozen=True)
class PiecewiseSchedule(Schedule):
    pieces: tuple[Piece, ...]

    def __post_init__(self):
        ps = tuple(self.pieces)
        if not ps:
            raise ValueError("empty schedule")
        for a, b in zip(ps, ps[1:]):
            if not math.isclose(a.t1, b.t0, rel_tol=0.0, abs_tol=1e-12):
                raise ValueError("pieces must tile the domain without gaps")
        object.__setattr__(self, "pieces", ps)

    @property
    def domain(self) -> tuple[float, float]:
        return (self.pieces[0].t0, self.pieces[-1].t1)

    def piece_at(self, t: float) -> Piece:
        t0, t1 = self.domain
        if not (t0 - 1e-12 <= t <= t1 + 1e-12):
            raise ValueError(f"t={t} outside schedule domain [{t0}, {t1}]")
        for p in self.pieces:
            if t <= p.t1 or p is self.pieces[-1]:
                return p
        raise AssertionError("unreachable")

    def value(self, t: float) -> float:
        return self.piece_at(t).value(t)

    def breakpoints(self) -> list[float]:
        return [self.pieces[0].t0] + [p.t1 for p in self.pieces]

    def shifted(self, shift: float) -> "PiecewiseSchedule":
        return PiecewiseSchedule(tuple(
            Piece(p.t0 + shift, p.t1 + shift, p.c0, p.slope) for p in self.pieces
        ))

    def restricted(self, t0: float, t1: float) -> "PiecewiseSchedule":
        out = []
        for p in self.pieces:
            lo, hi = max(p.t0, t0), min(p.t1, t1)
            if hi - lo > 1e-12:
                out.append(Piece(lo, hi, p.value(lo), p.slope))
        return PiecewiseSchedule(tuple(out))


def constant_schedule(value: float, t0: float, t1: float) -> PiecewiseSchedule:
    return PiecewiseSchedule((Piece(t0, t1, value),))


def linear_ramp(lambda0: float, v: float, tau: float) -> PiecewiseSchedule:
    """lambda_t = lambda0 + v t on [0, tau]."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    return PiecewiseSchedule((Piece(0.0, tau, lambda0, v),))


def reversed_ramp(lambda0: float, v: float, tau: float) -> PiecewiseSchedule:
    """Time-reversed protocol: starts at lambda_tau and runs back at -v."""
    return linear_ramp(lambda0 + v * tau, -v, tau)


@dataclass(frozen=True)
class SplittingSchedule(Schedule):
    """Qubit splitting 2 g^2 / (chi+ +/- chi-), clamped at +-cutoff.

    The raw formula diverges where the two drives meet; the clamp keeps the
    schedule finite everywhere and is applied symmetrically in magnitude.
    """

    numerator: float          # 2 g^2
    chi_plus: PiecewiseSchedule
    chi_minus: PiecewiseSchedule
    sign: int                 # +1 -> chi+ + chi-,  -1 -> chi+ - chi-
    cutoff: float | None = None

    @property
    def domain(self) -> tuple[float, float]:
        return self.chi_plus.domain

    def _denominator(self, t: float) -> float:
        return self.chi_plus.value(t) + self.sign * self.chi_minus.value(t)

    def value(self, t: float) -> float:
        den = self._denominator(t)
        if den == 0.0:
            if self.cutoff is None:
                raise ZeroDivisionError(f"splitting diverges at t={t} with no cutoff")
            # Sign from the denominator slightly inside the domain.
            t0, t1 = self.domain
            h = max(1e-9, 1e-9 * (t1 - t0))
            probe = self._denominator(min(t + h, t1)) or self._denominator(max(t - h, t0))
            return math.copysign(self.cutoff, probe if probe else 1.0)
        raw = self.numerator / den
        if self.cutoff is not None and abs(raw) > self.cutoff:
            return math.copysign(self.cutoff, raw)
        return raw

    def breakpoints(self) -> list[float]:
        pts = set(self.chi_plus.breakpoints()) | set(self.chi_minus.breakpoints())
        if self.cutoff is not None:
            # Clamp crossovers: solve |denominator| = numerator/cutoff per
            # linear piece of the denominator.
            thr = abs(self.numerator) / self.cutoff
            bounds = sorted(pts)
            for lo, hi in zip(bounds, bounds[1:]):
                d_lo, d_hi = self._denominator(lo), self._denominator(hi)
                for target in (thr, -thr):
                    if (d_lo - target) * (d_hi - target) < 0:
                        frac = (target - d_lo) / (d_hi - d_lo)
                        pts.add(lo + frac * (hi - lo))
        t0, t1 = self.domain
        return sorted(p for p in pts if t0 - 1e-12 <= p <= t1 + 1e-12)


@dataclass(frozen=True)
class EffectiveChiSchedule(Schedule):
    """Drive realized by the (possibly clamped) splittings: g1^2/eps1 +- g2^2/eps2."""

    g1sq: float
    g2sq: float
    eps1: Schedule
    eps2: Schedule
    sign: int

    @property
    def domain(self) -> tuple[float, float]:
        return self.eps1.domain

    def value(self, t: float) -> float:
        return self.g1sq / self.eps1.value(t) + self.sign * self.g2sq / self.eps2.value(t)

    def breakpoints(self) -> list[float]:
        return sorted(set(self.eps1.breakpoints()) | set(self.eps2.breakpoints()))


# ---------------------------------------------------------------------------
# Drive pairs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DrivePair:
    """The conditional drives (chi+, chi-) over the protocol window [0, tau+u]."""

    chi_plus: PiecewiseSchedule
    chi_minus: PiecewiseSchedule
    tau: float
    u: float
    kind: str = "inclusive"   # "inclusive" | "exclusive"

    def __post_init__(self):
        T = self.total_T
        for s in (self.chi_plus, self.chi_minus):
            lo, hi = s.domain
            if abs(lo) > 1e-12 or abs(hi - T) > 1e-9:
                raise ValueError(f"schedule domain {s.domain} != [0, {T}]")
        if self.kind == "inclusive":
            # Equal endpoints are what makes the two branches interfere
            # totally at u=0; the exclusive pair deliberately waives this.
            if not math.isclose(self.chi_plus.value(0.0), self.chi_minus.value(0.0),
                                rel_tol=0, abs_tol=1e-12):
                raise ValueError("inclusive drives must agree at t=0")
            if not math.isclose(self.chi_plus.value(T), self.chi_minus.value(T),
                                rel_tol=0, abs_tol=1e-9):
                raise ValueError("inclusive drives must agree at t=T")

    @property
    def total_T(self) -> float:
        return self.tau + self.u


def drive_inclusive(lambda_sched: PiecewiseSchedule, tau: float, u: float) -> DrivePair:
    """chi+ runs the protocol then holds; chi- holds then runs it delayed by u."""
    if u < 0:
        raise ValueError("u must be nonnegative")
    lo, hi = lambda_sched.domain
    if abs(lo) > 1e-12 or abs(hi - tau) > 1e-9:
        raise ValueError(f"lambda schedule domain {lambda_sched.domain} != [0, {tau}]")
    lam0 = lambda_sched.value(0.0)
    lam_tau = lambda_sched.value(tau)
    if u == 0:
        return DrivePair(lambda_sched, lambda_sched, tau, 0.0, "inclusive")
    chi_plus = PiecewiseSchedule(lambda_sched.pieces + (Piece(tau, tau + u, lam_tau),))
    chi_minus = PiecewiseSchedule((Piece(0.0, u, lam0),) + lambda_sched.shifted(u).pieces)
    return DrivePair(chi_plus, chi_minus, tau, u, "inclusive")


def drive_exclusive(lambda_sched: PiecewiseSchedule, tau: float, u: float) -> DrivePair:
    """Like the inclusive pair but with the hold segments replaced by zero."""
    if u < 0:
        raise ValueError("u must be nonnegative")
    if u == 0:
        return DrivePair(lambda_sched, lambda_sched, tau, 0.0, "exclusive")
    chi_plus = PiecewiseSchedule(lambda_sched.pieces + (Piece(tau, tau + u, 0.0),))
    chi_minus = PiecewiseSchedule((Piece(0.0, u, 0.0),) + lambda_sched.shifted(u).pieces)
    return DrivePair(chi_plus, chi_minus, tau, u, "exclusive")


# ---------------------------------------------------------------------------
# Model parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelParams:
    """Physical and numerical parameters (energies in units of the oscillator
    frequency, times in its inverse).  Defaults are the canonical linear-ramp
    fixture: g1=2.5, g2=0.5, lambda0=0.0625, v=1.5*lambda0/2pi, tau=2pi,
    beta=1, splitting ceiling 100."""

    omega: float = 1.0
    g: float = 2.5
    g1: float = 2.5
    g2: float = 0.5
    lambda0: float = 0.0625
    v: float = 1.5 * 0.0625 / TWO_PI
    tau: float = TWO_PI
    beta: float = 1.0
    eps_cutoff: float = 100.0
    n_fock: int = 30
    # Single-qubit drive convention: eps_t = g^2/(2 lambda_t) if halved,
    # else g^2/lambda_t.  The halved form makes the effective soft-mode
    # drive 2 lambda_t, which destabilizes the effective oscillator at the
    # canonical parameters; the unhalved form is the default.
    softmode_halved: bool = False

    def __post_init__(self):
        if self.n_fock < 4:
            raise ValueError("n_fock must be at least 4 (two guard levels)")
        lam_max = max(self.lambda0, self.lambda0 + self.v * self.tau)
        if lam_max >= self.omega / 4.0:
            raise ValueError(
                f"max lambda {lam_max} >= omega/4: oscillator goes unstable")

    @property
    def lambda_tau(self) -> float:
        return self.lambda0 + self.v * self.tau

    def ramp(self) -> PiecewiseSchedule:
        return linear_ramp(self.lambda0, self.v, self.tau)

    def ramp_reversed(self) -> PiecewiseSchedule:
        return reversed_ramp(self.lambda0, self.v, self.tau)

    def layout_single(self) -> SpaceLayout:
        return SpaceLayout((2, self.n_fock))

    def layout_two(self) -> SpaceLayout:
        return SpaceLayout((2, 2, self.n_fock))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        fields = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - fields
        if unknown:
            raise ValueError(f"unknown ModelParams fields: {sorted(unknown)}")
        return cls(**d)


# ---------------------------------------------------------------------------
# Oscillator building blocks
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _osc_ops(n_fock: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(number+1/2, a+a^dag, (a+a^dag)^2) as bare matrices (treat as read-only)."""
    a, adag = fock_ops(n_fock)
    x = a.entries + adag.entries
    n_half = np.diag(np.arange(n_fock) + 0.5).astype(complex)
    return n_half, x, x @ x


def h_system(lambda_val: float, params: ModelParams) -> Operator:
    """Parametric oscillator omega(n+1/2) - lambda (a+a^dag)^2."""
    if lambda_val >= params.omega / 4.0:
        raise ValueError(f"lambda={lambda_val} >= omega/4: unstable")
    n_half, _, q = _osc_ops(params.n_fock)
    return Operator(SpaceLayout((params.n_fock,)),
                    params.omega * n_half - lambda_val * q)


def effective_frequency(lambda_val: float, omega: float = 1.0) -> float:
    """omega_eff with omega_eff^2 = omega^2 - 4 omega lambda."""
    val = omega * omega - 4.0 * omega * lambda_val
    if val <= 0:
        raise ValueError(f"lambda={lambda_val} gives unstable frequency")
    return math.sqrt(val)


def h_ancilla_ideal(drive: DrivePair, eps: float, t: float, params: ModelParams) -> Operator:
    """Ideal diagonal ancilla coupling: eps/2 sz + H0 - (chi+ P+ + chi- P-) Q."""
    lo, hi = drive.chi_plus.domain
    if not lo - 1e-12 <= t <= hi + 1e-12:
        raise ValueError(f"t={t} outside protocol window [{lo}, {hi}]")
    n_half, _, q = _osc_ops(params.n_fock)
    h0 = params.omega * n_half
    hp = eps / 2.0 * np.eye(params.n_fock) + h0 - drive.chi_plus.value(t) * q
    hm = -eps / 2.0 * np.eye(params.n_fock) + h0 - drive.chi_minus.value(t) * q
    d = params.n_fock
    full = np.zeros((2 * d, 2 * d), dtype=complex)
    full[:d, :d] = hp
    full[d:, d:] = hm
    return Operator(params.layout_single(), full)


def h_rabi(eps_t: float, params: ModelParams) -> Operator:
    """Single-qubit Rabi model: eps sz/2 + omega(n+1/2) + g(a+a^dag) sx."""
    layout = params.layout_single()
    n_half, x, _ = _osc_ops(params.n_fock)
    h = (eps_t / 2.0 * embed_matrix(SIGMA_Z, 0, layout).entries
         + params.omega * embed_matrix(n_half, 1, layout).entries
         + params.g * embed_matrix(SIGMA_X, 0, layout).entries
           @ embed_matrix(x, 1, layout).entries)
    return Operator(layout, h)


def h_softmode(eps_t: float, params: ModelParams) -> Operator:
    """Soft-mode approximation: eps sz/2 + omega(n+1/2) + g^2/eps (a+a^dag)^2 sz."""
    if eps_t <= 0:
        raise ValueError("eps_t must be positive")
    layout = params.layout_single()
    n_half, _, q = _osc_ops(params.n_fock)
    chi = params.g ** 2 / eps_t
    d = params.n_fock
    h0 = params.omega * n_half
    hp = eps_t / 2.0 * np.eye(d) + h0 + chi * q
    hm = -eps_t / 2.0 * np.eye(d) + h0 - chi * q
    full = np.zeros((2 * d, 2 * d), dtype=complex)
    full[:d, :d] = hp
    full[d:, d:] = hm
    return Operator(layout, full)


def h_two_rabi(eps1: float, eps2: float, params: ModelParams) -> Operator:
    """Two-qubit Rabi model: sum of splittings plus (a+a^dag)(g1 sx1 + g2 sx2)."""
    layout = params.layout_two()
    n_half, x, _ = _osc_ops(params.n_fock)
    h = (eps1 / 2.0 * embed_matrix(SIGMA_Z, 0, layout).entries
         + eps2 / 2.0 * embed_matrix(SIGMA_Z, 1, layout).entries
         + params.omega * embed_matrix(n_half, 2, layout).entries
         + embed_matrix(x, 2, layout).entries
           @ (params.g1 * embed_matrix(SIGMA_X, 0, layout).entries
              + params.g2 * embed_matrix(SIGMA_X, 1, layout).entries))
    return Operator(layout, h)


def two_diag_block(s1: int, s2: int, eps1: float, eps2: float,
                   params: ModelParams) -> np.ndarray:
    """Oscillator block of the diagonal two-qubit Hamiltonian for qubit signs
    (s1, s2) in {+1, -1}^2."""
    n_half, _, q = _osc_ops(params.n_fock)
    const = s1 * eps1 / 2.0 + s2 * eps2 / 2.0
    chi = s1 * params.g1 ** 2 / eps1 + s2 * params.g2 ** 2 / eps2
    return const * np.eye(params.n_fock) + params.omega * n_half + chi * q


def h_two_diag(eps1: float, eps2: float, params: ModelParams) -> Operator:
    """Diagonal (soft-mode) two-qubit Hamiltonian, block over the four
    qubit projectors."""
    if eps1 == 0 or eps2 == 0:
        raise ValueError("splittings must be nonzero")
    layout = params.layout_two()
    d = params.n_fock
    full = np.zeros((4 * d, 4 * d), dtype=complex)
    for i, (s1, s2) in enumerate([(1, 1), (1, -1), (-1, 1), (-1, -1)]):
        full[i * d:(i + 1) * d, i * d:(i + 1) * d] = two_diag_block(
            s1, s2, eps1, eps2, params)
    return Operator(layout, full)


def qubit_splittings(drive: DrivePair, params: ModelParams,
                     ) -> tuple[SplittingSchedule, SplittingSchedule]:
    """Splitting schedules eps1 = 2g1^2/(chi+ + chi-), eps2 = 2g2^2/(chi+ - chi-).

    eps2 diverges wherever the drives meet (t=0 and t=T for the inclusive
    pair); it is clamped at +-eps_cutoff in magnitude.
    """
    T = drive.total_T
    probe = np.linspace(0.0, T, 101)
    den = drive.chi_plus.values(probe) + drive.chi_minus.values(probe)
    if np.any(den[1:-1] <= 0):
        raise ValueError("chi+ + chi- must stay positive inside (0, T)")
    eps1 = SplittingSchedule(2.0 * params.g1 ** 2, drive.chi_plus, drive.chi_minus,
                             +1, cutoff=None)
    eps2 = SplittingSchedule(2.0 * params.g2 ** 2, drive.chi_plus, drive.chi_minus,
                             -1, cutoff=params.eps_cutoff)
    ratio = max(params.omega, params.g1, params.g2) / min(
        abs(eps1.value(t)) for t in probe)
    if ratio > 0.2:
        warnings.warn(
            f"far-detuned regime marginal: max(omega, g)/min eps1 = {ratio:.3f}",
            RegimeWarning, stacklevel=2)
    return eps1, eps2


def effective_chis(eps1: Schedule, eps2: Schedule, params: ModelParams,
                   ) -> tuple[EffectiveChiSchedule, EffectiveChiSchedule]:
    """Drives actually realized by the (clamped) splittings."""
    g1sq, g2sq = params.g1 ** 2, params.g2 ** 2
    return (EffectiveChiSchedule(g1sq, g2sq, eps1, eps2, +1),
            EffectiveChiSchedule(g1sq, g2sq, eps1, eps2, -1))


def single_qubit_drive(lambda_sched: Schedule, params: ModelParams) -> "Schedule":
    """Splitting schedule for the single-qubit soft-mode drive."""
    factor = 2.0 if params.softmode_halved else 1.0

    class _Eps(Schedule):
        domain = lambda_sched.domain

        def value(self, t):
            return params.g ** 2 / (factor * lambda_sched.value(t))

        def breakpoints(self):
            return lambda_sched.breakpoints()

    return _Eps()


# ---------------------------------------------------------------------------
# Open system: explicit bath modes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BathMode:
    freq: float
    coupling: float
    n_levels: int = 6


def h_system_bath(lambda_val: float, params: ModelParams,
                  bath: tuple[BathMode, ...]) -> Operator:
    """S+B Hamiltonian: H_S(lambda) + sum_k omega_k b_k^dag b_k
    + c_k (a+a^dag)(b_k+b_k^dag)."""
    if not 1 <= len(bath) <= 2:
        raise ValueError("bath must have 1 or 2 modes at desk scale")
    dims = (params.n_fock,) + tuple(m.n_levels for m in bath)
    layout = SpaceLayout(dims)
    h = embed_matrix(h_system(lambda_val, params).entries, 0, layout).entries.copy()
    _, x_sys, _ = _osc_ops(params.n_fock)
    x_sys_full = embed_matrix(x_sys, 0, layout).entries
    for k, mode in enumerate(bath):
        a_k, adag_k = fock_ops(mode.n_levels)
        num = adag_k.entries @ a_k.entries
        x_k = a_k.entries + adag_k.entries
        h += mode.freq * embed_matrix(num, k + 1, layout).entries
        h += mode.coupling * (x_sys_full @ embed_matrix(x_k, k + 1, layout).entries)
    return Operator(layout, h)


def h_open(params: ModelParams, bath: tuple[BathMode, ...], drive: DrivePair,
           eps: float):
    """Builder t -> Operator for the ancilla + S + B Hamiltonian, with the
    ancilla coupled to (a+a^dag)^2 of the system only."""
    dims = (params.n_fock,) + tuple(m.n_levels for m in bath)
    sb_layout = SpaceLayout(dims)
    full_layout = SpaceLayout((2,) + dims)
    h_free = h_system_bath(0.0, params, bath).entries
    _, x_sys, _ = _osc_ops(params.n_fock)
    q = embed_matrix(x_sys @ x_sys, 0, sb_layout).entries
    d = sb_layout.total_dim
    eye = np.eye(d)

    def build(t: float) -> Operator:
        hp = eps / 2.0 * eye + h_free - drive.chi_plus.value(t) * q
        hm = -eps / 2.0 * eye + h_free - drive.chi_minus.value(t) * q
        full = np.zeros((2 * d, 2 * d), dtype=complex)
        full[:d, :d] = hp
        full[d:, d:] = hm
        return Operator(full_layout, full)

    return build
