"""Ground-truth work statistics and fluctuation-theorem analysis.

The two-projective-measurement oracle is the reference against which the
interferometric reconstruction is judged: it diagonalizes the initial and
final Hamiltonians, forms transition probabilities through the propagator,
and lists the exact (w, probability) peaks.  The characteristic-function
route evaluates the same object through spectral exponentials, and the
Fourier route reconstructs a density from sampled characteristic-function
values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GuardLevelError
from .qop import DensityMatrix, Operator, eig_hermitian, log_partition

_trapz = getattr(np, "trapezoid", np.trapz)

PEAK_MERGE_TOL = 1e-9
GUARD_LEAK_TOL = 1e-6


@dataclass(frozen=True)
class WorkDistribution:
    """Work statistics, either as exact peaks or a sampled density."""

    kind: str                                 # "peaks" | "density"
    beta: float
    delta_F: float | None = None
    peaks: tuple[tuple[float, float], ...] | None = None
    w_grid: np.ndarray | None = None
    values: np.ndarray | None = None
    leakage: float = 0.0

    def __post_init__(self):
        if self.kind == "peaks":
            if self.peaks is None:
                raise ValueError("peaks form needs peaks")
            probs = np.array([p for _, p in self.peaks])
            if np.any(probs < -1e-12):
                raise ValueError("negative peak probability")
            if abs(probs.sum() + self.leakage - 1.0) > 1e-8:
                raise ValueError(f"peak probabilities sum to {probs.sum()!r}")
        elif self.kind == "density":
            if self.w_grid is None or self.values is None:
                raise ValueError("density form needs w_grid and values")
            object.__setattr__(self, "w_grid", np.asarray(self.w_grid, dtype=float))
            object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
            if self.w_grid.shape != self.values.shape:
                raise ValueError("w_grid and values must match")
            total = _trapz(self.values, self.w_grid)
            # Imperfect protocol realizations lose a little contrast
            # (|G(0)| < 1), which shows up as missing normalization; a few
            # percent is tolerated, anything worse means broken samples.
            if abs(total - 1.0) > 0.05:
                raise ValueError(f"density integrates to {total}, not 1")
            # Windowed reconstructions may ring slightly negative; large
            # negative mass means the samples were inconsistent.
            neg = _trapz(np.minimum(self.values, 0.0), self.w_grid)
            if abs(neg) > 0.02:
                raise ValueError(f"negative excursion integral {neg}")
        else:
            raise ValueError(f"unknown kind {self.kind!r}")

    def mean_work(self) -> float:
        if self.kind == "peaks":
            return float(sum(w * p for w, p in self.peaks))
        return float(_trapz(self.w_grid * self.values, self.w_grid))

    def total_probability(self) -> float:
        if self.kind == "peaks":
            return float(sum(p for _, p in self.peaks))
        return float(_trapz(self.values, self.w_grid))


@dataclass(frozen=True)
class FTReport:
    """Tasaki-Crooks linear-fit summary plus the Jarzynski average."""

    slope: float
    intercept: float
    slope_expected: float
    intercept_expected: float
    r_squared: float
    jarzynski_lhs: float
    points_used: int

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "slope_expected": self.slope_expected,
            "intercept_expected": self.intercept_expected,
            "r_squared": self.r_squared,
            "jarzynski_lhs": self.jarzynski_lhs,
            "points_used": self.points_used,
        }


def _check_unitary(u: Operator, tol: float = 1e-6):
    d = u.layout.total_dim
    defect = np.max(np.abs(u.entries @ u.entries.conj().T - np.eye(d)))
    if defect > tol:
        raise ValueError(f"propagator not unitary: defect {defect:.3e}")


def tmp_oracle(h0: Operator, h_tau: Operator, u: Operator, beta: float,
               guard_levels: int = 2) -> WorkDistribution:
    """Two-projective-measurement work distribution as exact peaks.

    Initial populations on the top ``guard_levels`` eigenstates of h0 are
    excluded and recorded as leakage; runs where they matter are invalid.
    """
    _check_unitary(u)
    spec0 = eig_hermitian(h0)
    spec1 = eig_hermitian(h_tau)
    e0, v0 = spec0.eigenvalues, spec0.eigenvectors
    e1, v1 = spec1.eigenvalues, spec1.eigenvectors
    w_boltz = np.exp(-beta * (e0 - e0[0]))
    p_init = w_boltz / w_boltz.sum()
    d = len(e0)
    live = d - guard_levels
    leakage = float(p_init[live:].sum())
    if leakage > GUARD_LEAK_TOL:
        raise GuardLevelError(
            f"initial guard-level population {leakage:.3e} > {GUARD_LEAK_TOL}")
    amp = v1.conj().T @ u.entries @ v0[:, :live]
    trans = np.abs(amp) ** 2                      # (m, n)
    weights = trans * p_init[:live]
    w_vals = e1[:, None] - e0[None, :live]
    flat_w = w_vals.ravel()
    flat_p = weights.ravel()
    order = np.argsort(flat_w)
    peaks: list[tuple[float, float]] = []
    for w, p in zip(flat_w[order], flat_p[order]):
        if peaks and w - peaks[-1][0] < PEAK_MERGE_TOL:
            peaks[-1] = (peaks[-1][0], peaks[-1][1] + p)
        else:
            peaks.append((float(w), float(p)))
    return WorkDistribution(kind="peaks", beta=beta, peaks=tuple(peaks),
                            leakage=leakage)


def char_direct(h0: Operator, h_tau: Operator, u: Operator, beta: float,
                u_time: float) -> complex:
    """Characteristic function <U^dag e^{iu H_tau} U e^{-iu H0}> over the
    thermal state of h0, evaluated with spectral exponentials."""
    _check_unitary(u)
    spec0 = eig_hermitian(h0)
    spec1 = eig_hermitian(h_tau)
    e0, v0 = spec0.eigenvalues, spec0.eigenvectors
    e1, v1 = spec1.eigenvalues, spec1.eigenvectors
    w_boltz = np.exp(-beta * (e0 - e0[0]))
    p_init = w_boltz / w_boltz.sum()
    exp_tau = (v1 * np.exp(1j * u_time * e1)) @ v1.conj().T
    # In the h0 eigenbasis the thermal state and e^{-iu H0} are both diagonal.
    m = v0.conj().T @ (u.entries.conj().T @ exp_tau @ u.entries) @ v0
    return complex(np.sum(np.diagonal(m) * np.exp(-1j * u_time * e0) * p_init))


def char_from_peaks(dist: WorkDistribution, u_time: float) -> complex:
    """Fourier sum over oracle peaks: sum_j p_j e^{i u w_j}."""
    if dist.kind != "peaks":
        raise ValueError("expects a peaks distribution")
    w = np.array([wj for wj, _ in dist.peaks])
    p = np.array([pj for _, pj in dist.peaks])
    return complex(np.sum(p * np.exp(1j * u_time * w)))


def hann_window(u_vals: np.ndarray, u_max: float) -> np.ndarray:
    return 0.5 * (1.0 + np.cos(math.pi * u_vals / u_max))


def pdf_from_char(u_grid, g_vals: np.ndarray | None = None, beta: float = 1.0,
                  delta_F: float | None = None, window: str = "hann",
                  w_grid: np.ndarray | None = None) -> WorkDistribution:
    """Inverse Fourier transform of sampled G[u] into a work density.

    The samples may arrive as parallel (u_grid, g_vals) arrays or, with
    ``g_vals`` omitted, as a list of protocol samples carrying ``.u`` and
    ``.g_value``.  ``u_grid`` must be uniform starting at 0; negative-u
    samples are supplied by conjugate symmetry.  The default w-grid covers
    the full Nyquist band at the natural resolution of the window length.
    """
    if g_vals is None:
        samples = list(u_grid)
        u_grid = np.array([s.u for s in samples], dtype=float)
        g_vals = np.array([s.g_value for s in samples], dtype=complex)
    u_grid = np.asarray(u_grid, dtype=float)
    g_vals = np.asarray(g_vals, dtype=complex)
    if len(u_grid) < 2:
        raise ValueError("need at least two u samples")
    if abs(u_grid[0]) > 1e-12:
        raise ValueError("u grid must start at 0")
    du = u_grid[1] - u_grid[0]
    if np.max(np.abs(np.diff(u_grid) - du)) > 1e-9 * du:
        raise ValueError("u grid must be uniform")
    m = len(u_grid) - 1
    u_max = u_grid[-1]
    u_full = np.concatenate([-u_grid[:0:-1], u_grid])
    g_full = np.concatenate([np.conj(g_vals[:0:-1]), g_vals])
    # The conjugate-symmetric extension models g(-u) = g*(u); the u=0 sample
    # is projected onto that class (imperfect realizations report a small
    # imaginary part there, which only ever contributed an imaginary offset
    # to the density anyway).
    g_full[m] = g_full[m].real
    if window == "hann":
        win = hann_window(u_full, u_max + du)
    elif window == "rect":
        win = np.ones_like(u_full)
    else:
        raise ValueError(f"unknown window {window!r}")
    if w_grid is None:
        # The full Nyquist band, oversampled 4x relative to the natural
        # resolution so trapezoid integrals resolve the window ringing.
        n_full = 2 * m + 1
        over = 4
        dw = 2.0 * math.pi / (n_full * du * over)
        k = np.arange(-m * over, m * over + 1)
        w_grid = k * dw
    w_grid = np.asarray(w_grid, dtype=float)
    kernel = np.exp(-1j * np.outer(w_grid, u_full))
    dens = (du / (2.0 * math.pi)) * kernel @ (win * g_full)
    imag_resid = float(np.max(np.abs(dens.imag)))
    if imag_resid > 1e-8:
        raise ValueError(f"imaginary residue {imag_resid:.3e} in reconstruction")
    return WorkDistribution(kind="density", beta=beta, delta_F=delta_F,
                            w_grid=w_grid, values=dens.real)


def peak_weight(dist: WorkDistribution, w0: float, half_width: float) -> float:
    """Integrated density over [w0 - hw, w0 + hw]."""
    if dist.kind != "density":
        raise ValueError("expects a density distribution")
    mask = np.abs(dist.w_grid - w0) <= half_width
    if not np.any(mask):
        return 0.0
    return float(_trapz(dist.values[mask], dist.w_grid[mask]))


def dominant_peaks(dist: WorkDistribution, n: int, min_separation: float,
                   ) -> list[tuple[float, float]]:
    """Positions and heights of the n largest local maxima of a density."""
    if dist.kind != "density":
        raise ValueError("expects a density distribution")
    v, w = dist.values, dist.w_grid
    idx = [i for i in range(1, len(v) - 1) if v[i] >= v[i - 1] and v[i] >= v[i + 1]]
    idx.sort(key=lambda i: -v[i])
    chosen: list[int] = []
    for i in idx:
        if all(abs(w[i] - w[j]) >= min_separation for j in chosen):
            chosen.append(i)
        if len(chosen) == n:
            break
    out = []
    for i in sorted(chosen, key=lambda i: w[i]):
        # Parabolic refinement of the peak position.
        denom = v[i - 1] - 2 * v[i] + v[i + 1]
        shift = 0.0 if denom == 0 else 0.5 * (v[i - 1] - v[i + 1]) / denom
        out.append((float(w[i] + shift * (w[1] - w[0])), float(v[i])))
    return out


def crooks_check(p_fwd: WorkDistribution, p_bwd: WorkDistribution, beta: float,
                 floor_frac: float = 1e-3,
                 w_band: float | None = None) -> FTReport:
    """Least-squares fit of ln(p_fwd(w)/p_bwd(-w)) against w."""
    if p_fwd.kind != "density" or p_bwd.kind != "density":
        raise ValueError("crooks_check expects density distributions")
    w = p_fwd.w_grid
    bwd_at_minus_w = np.interp(-w, p_bwd.w_grid, p_bwd.values,
                               left=np.nan, right=np.nan)
    floor_f = floor_frac * np.max(p_fwd.values)
    floor_b = floor_frac * np.max(p_bwd.values)
    mask = ((p_fwd.values > floor_f) & (bwd_at_minus_w > floor_b)
            & np.isfinite(bwd_at_minus_w))
    if int(mask.sum()) < 5:
        raise ValueError(f"only {int(mask.sum())} usable points for the Crooks fit")
    x = w[mask]
    y = np.log(p_fwd.values[mask] / bwd_at_minus_w[mask])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid ** 2)) / ss_tot
    delta_F = p_fwd.delta_F
    jarz = (math.nan if delta_F is None
            else jarzynski_check(p_fwd, beta, delta_F, w_band=w_band))
    return FTReport(
        slope=float(slope), intercept=float(intercept),
        slope_expected=beta,
        intercept_expected=(math.nan if delta_F is None else -beta * delta_F),
        r_squared=max(0.0, min(1.0, r2)),
        jarzynski_lhs=jarz, points_used=int(mask.sum()))


def jarzynski_check(p: WorkDistribution, beta: float, delta_F: float,
                    w_band: float | None = None) -> float:
    """<e^{-beta w}> e^{beta delta_F}; equals 1 when the equality holds.

    For densities a band limit |w| <= w_band is advisable: window ringing at
    large negative w, though tiny, is blown up by the exponential weight.
    """
    if p.kind == "peaks":
        avg = sum(pj * math.exp(-beta * wj) for wj, pj in p.peaks)
    else:
        w, v = p.w_grid, p.values
        if w_band is not None:
            mask = np.abs(w) <= w_band
            w, v = w[mask], v[mask]
        avg = float(_trapz(v * np.exp(-beta * w), w))
    return float(avg * math.exp(beta * delta_F))


def free_energy_oscillator(omega0: float, omega_f: float, beta: float) -> float:
    """Free-energy difference between oscillators of frequency omega_f and
    omega0 at inverse temperature beta."""
    if omega0 <= 0 or omega_f <= 0:
        raise ValueError("frequencies must be positive")
    return math.log(math.sinh(beta * omega_f / 2.0)
                    / math.sinh(beta * omega0 / 2.0)) / beta


def free_energy_spectral(h0: Operator, h_tau: Operator, beta: float) -> float:
    """Delta F from log-partition differences of explicit spectra."""
    return (log_partition(h0, beta) - log_partition(h_tau, beta)) / beta


def exclusive_oracle(h0: Operator, u: Operator, beta: float,
                     guard_levels: int = 2) -> WorkDistribution:
    """Exclusive-work peaks: both measurements use the bare Hamiltonian h0,
    with the system prepared thermal in h0."""
    return tmp_oracle(h0, h0, u, beta, guard_levels=guard_levels)


def exclusive_char(h0: Operator, u: Operator, beta: float, u_time: float) -> complex:
    """Exclusive characteristic function (h0 in both exponents)."""
    return char_direct(h0, h0, u, beta, u_time)
