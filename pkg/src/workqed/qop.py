"""Dense complex operator algebra on truncated composite Hilbert spaces.

All quantities are in natural units (hbar = 1); energies are in units of the
oscillator frequency and times in its inverse.  Storage is dense throughout:
the spaces handled here never exceed a few hundred dimensions, where dense
eigendecomposition dominates the cost anyway.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Construction-time tolerances.  Asserted where states are built or evolved,
# not deferred, so integrator drift is caught at the boundary where it enters.
HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-8
EIGENVALUE_FLOOR = -1e-9
UNITARITY_TOL = 1e-9

# Qubit operators in the {|+>, |->} basis (sigma_z = diag(+1, -1)).
SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
HADAMARD = (SIGMA_X + SIGMA_Z) / math.sqrt(2.0)
PI_PLUS = np.array([[1.0, 0.0], [0.0, 0.0]], dtype=complex)
PI_MINUS = np.array([[0.0, 0.0], [0.0, 1.0]], dtype=complex)


@dataclass(frozen=True)
class SpaceLayout:
    """Ordered subsystem dimensions of a composite Hilbert space."""

    factors: tuple[int, ...]

    def __post_init__(self):
        if not self.factors:
            raise ValueError("layout needs at least one factor")
        for d in self.factors:
            if d < 2:
                raise ValueError(f"factor dimension {d} < 2")
        object.__setattr__(self, "factors", tuple(int(d) for d in self.factors))

    @property
    def total_dim(self) -> int:
        return math.prod(self.factors)

    @property
    def n_slots(self) -> int:
        return len(self.factors)


@dataclass(frozen=True)
class Operator:
    """Dense complex square matrix carrying its tensor-factor structure."""

    layout: SpaceLayout
    entries: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=complex)
        d = self.layout.total_dim
        if m.shape != (d, d):
            raise ValueError(f"entries shape {m.shape} != ({d}, {d})")
        object.__setattr__(self, "entries", m)

    def dagger(self) -> "Operator":
        return Operator(self.layout, self.entries.conj().T)

    def __matmul__(self, other: "Operator") -> "Operator":
        if other.layout != self.layout:
            raise ValueError("layout mismatch")
        return Operator(self.layout, self.entries @ other.entries)

    def __add__(self, other: "Operator") -> "Operator":
        if other.layout != self.layout:
            raise ValueError("layout mismatch")
        return Operator(self.layout, self.entries + other.entries)

    def __sub__(self, other: "Operator") -> "Operator":
        if other.layout != self.layout:
            raise ValueError("layout mismatch")
        return Operator(self.layout, self.entries - other.entries)

    def __mul__(self, c: complex) -> "Operator":
        return Operator(self.layout, self.entries * c)

    __rmul__ = __mul__


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, unit-trace, positive-semidefinite state.

    The invariants are checked at construction; ``check=False`` skips them
    for trusted intermediate states (e.g. inside tight loops).
    """

    layout: SpaceLayout
    entries: np.ndarray
    check: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=complex)
        d = self.layout.total_dim
        if m.shape != (d, d):
            raise ValueError(f"entries shape {m.shape} != ({d}, {d})")
        object.__setattr__(self, "entries", m)
        if self.check:
            herm = np.max(np.abs(m - m.conj().T))
            if herm > HERMITICITY_TOL:
                raise ValueError(f"not Hermitian: max deviation {herm:.3e}")
            tr = np.trace(m).real
            if abs(tr - 1.0) > TRACE_TOL:
                raise ValueError(f"trace {tr!r} not 1 within {TRACE_TOL}")
            lo = np.linalg.eigvalsh((m + m.conj().T) / 2.0).min()
            if lo < EIGENVALUE_FLOOR:
                raise ValueError(f"negative eigenvalue {lo:.3e}")


@dataclass(frozen=True)
class Spectrum:
    """Ascending eigenvalues and the unitary matrix of eigenvectors."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.eigenvalues, dtype=float)
        v = np.asarray(self.eigenvectors, dtype=complex)
        if np.any(np.diff(e) < 0):
            raise ValueError("eigenvalues not sorted ascending")
        d = len(e)
        if np.max(np.abs(v.conj().T @ v - np.eye(d))) > UNITARITY_TOL:
            raise ValueError("eigenvector matrix not unitary")
        object.__setattr__(self, "eigenvalues", e)
        object.__setattr__(self, "eigenvectors", v)


def fock_ops(n_fock: int) -> tuple[Operator, Operator]:
    """Annihilation and creation operators on a truncated Fock space."""
    if n_fock < 2:
        raise ValueError(f"n_fock={n_fock} < 2")
    a = np.diag(np.sqrt(np.arange(1, n_fock)), k=1).astype(complex)
    layout = SpaceLayout((n_fock,))
    return Operator(layout, a), Operator(layout, a.conj().T)


def identity(layout: SpaceLayout) -> Operator:
    return Operator(layout, np.eye(layout.total_dim, dtype=complex))


def embed(op: Operator, slot: int, layout: SpaceLayout) -> Operator:
    """Place ``op`` on one tensor slot, identity elsewhere."""
    if not 0 <= slot < layout.n_slots:
        raise ValueError(f"slot {slot} out of range for {layout.n_slots} factors")
    if op.layout.total_dim != layout.factors[slot]:
        raise ValueError(
            f"operator dim {op.layout.total_dim} != factor dim {layout.factors[slot]}"
        )
    out = np.eye(1, dtype=complex)
    for i, d in enumerate(layout.factors):
        out = np.kron(out, op.entries if i == slot else np.eye(d, dtype=complex))
    return Operator(layout, out)


def embed_matrix(mat: np.ndarray, slot: int, layout: SpaceLayout) -> Operator:
    """Like :func:`embed` for a bare matrix on a single factor."""
    d = layout.factors[slot]
    return embed(Operator(SpaceLayout((d,)), mat), slot, layout)


def eig_hermitian(op: Operator, tol: float = 1e-9) -> Spectrum:
    """Eigendecomposition of a Hermitian operator."""
    m = op.entries
    dev = np.max(np.abs(m - m.conj().T))
    if dev > tol:
        raise ValueError(f"operator not Hermitian: max deviation {dev:.3e}")
    vals, vecs = np.linalg.eigh((m + m.conj().T) / 2.0)
    return Spectrum(vals, vecs)


def expm_skew(h: Operator, dt: float) -> Operator:
    """exp(-i h dt) via eigendecomposition of the Hermitian generator."""
    spec = eig_hermitian(h)
    u = (spec.eigenvectors * np.exp(-1j * spec.eigenvalues * dt)) @ spec.eigenvectors.conj().T
    return Operator(h.layout, u)


def partial_trace(rho: DensityMatrix, keep: list[int] | tuple[int, ...]) -> DensityMatrix:
    """Trace out all slots not listed in ``keep`` (order preserved)."""
    dims = rho.layout.factors
    n = len(dims)
    keep = tuple(keep)
    if not keep:
        raise ValueError("keep must be nonempty")
    if sorted(keep) == list(range(n)):
        raise ValueError("keep must be a strict subset of slots")
    if len(set(keep)) != len(keep) or any(not 0 <= s < n for s in keep):
        raise ValueError(f"bad keep slots {keep}")
    t = rho.entries.reshape(dims + dims)
    # ket index i, bra index n+i; traced slots share one index.
    ket = list(range(n))
    bra = list(range(n, 2 * n))
    for s in range(n):
        if s not in keep:
            bra[s] = ket[s]
    out_idx = [ket[s] for s in keep] + [bra[s] for s in keep]
    red = np.einsum(t, ket + bra, out_idx)
    d = math.prod(dims[s] for s in keep)
    return DensityMatrix(SpaceLayout(tuple(dims[s] for s in keep)), red.reshape(d, d))


def thermal_state(h: Operator, beta: float) -> DensityMatrix:
    """Gibbs state exp(-beta h)/Z computed spectrally."""
    if beta <= 0:
        raise ValueError(f"beta={beta} must be positive")
    spec = eig_hermitian(h)
    w = np.exp(-beta * (spec.eigenvalues - spec.eigenvalues[0]))
    w /= w.sum()
    rho = (spec.eigenvectors * w) @ spec.eigenvectors.conj().T
    return DensityMatrix(h.layout, rho)


def log_partition(h: Operator, beta: float) -> float:
    """ln Tr exp(-beta h), stabilized against large spectra."""
    e = eig_hermitian(h).eigenvalues
    e0 = e[0]
    return float(-beta * e0 + np.log(np.sum(np.exp(-beta * (e - e0)))))


def occupation_marginal(rho: DensityMatrix, slot: int) -> np.ndarray:
    """Diagonal populations of one tensor factor (basis-state marginal)."""
    dims = rho.layout.factors
    t = rho.entries.reshape(dims + dims)
    n = len(dims)
    ket = list(range(n))
    bra = [ket[s] for s in range(n)]
    bra[slot] = n
    return np.einsum(t, ket + bra, [slot, n]).diagonal().real.copy()
