"""Time-ordered propagation."""

import math

import numpy as np
import pytest

from workqed.errors import UnitarityError
from workqed.evolve import (
    ComparisonTrace,
    PropagationConfig,
    compare_generators,
    evolve_rho,
    propagator,
)
from workqed.qop import DensityMatrix, Operator, SpaceLayout

QUBIT = SpaceLayout((2,))
SZ = np.diag([1.0, -1.0]).astype(complex)
SX = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SY = np.array([[0.0, -1j], [1j, 0.0]])


def _const(h):
    return lambda t: Operator(QUBIT, h)


def test_config_validation():
    with pytest.raises(ValueError):
        PropagationConfig(dt=0.0)
    with pytest.raises(ValueError):
        PropagationConfig(method="euler")


def test_constant_hamiltonian_exact():
    # For H = sz the midpoint rule is exact: U = exp(-i sz T).
    T = 1.7
    u = propagator(_const(SZ), 0.0, T, PropagationConfig(dt=0.05))
    expect = np.diag([np.exp(-1j * T), np.exp(1j * T)])
    np.testing.assert_allclose(u.entries, expect, atol=1e-12)


def test_zero_duration_is_identity():
    u = propagator(_const(SX), 2.0, 2.0)
    np.testing.assert_allclose(u.entries, np.eye(2), atol=0)
    with pytest.raises(ValueError):
        propagator(_const(SX), 1.0, 0.0)


def test_midpoint_second_order_convergence():
    # H(t) = cos(t) sx + sin(t) sz is non-commuting at different times, so
    # the stepper has real time-ordering error; halving dt should cut it 4x.
    def h(t):
        return Operator(QUBIT, math.cos(t) * SX + math.sin(t) * SZ)

    ref = propagator(h, 0.0, 2.0, PropagationConfig(dt=1e-4)).entries
    errs = []
    for dt in (0.02, 0.01, 0.005):
        u = propagator(h, 0.0, 2.0, PropagationConfig(dt=dt)).entries
        errs.append(np.max(np.abs(u - ref)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    np.testing.assert_allclose(orders, 2.0, atol=0.15)


def test_magnus2_beats_midpoint():
    def h(t):
        return Operator(QUBIT, math.cos(3 * t) * SX + math.sin(3 * t) * SZ)

    ref = propagator(h, 0.0, 2.0, PropagationConfig(dt=1e-4, method="magnus2")).entries
    dt = 0.02
    e_mid = np.max(np.abs(
        propagator(h, 0.0, 2.0, PropagationConfig(dt=dt)).entries - ref))
    e_mag = np.max(np.abs(
        propagator(h, 0.0, 2.0, PropagationConfig(dt=dt, method="magnus2")).entries - ref))
    assert e_mag < e_mid / 10.0


def test_unitarity_preserved():
    def h(t):
        return Operator(QUBIT, math.cos(t) * SX + t * SZ)

    u = propagator(h, 0.0, 5.0, PropagationConfig(dt=0.01)).entries
    np.testing.assert_allclose(u @ u.conj().T, np.eye(2), atol=1e-12)


def test_oversized_step_rejected():
    big = 100.0 * SZ
    with pytest.raises(ValueError, match="step too large"):
        propagator(_const(big), 0.0, 1.0, PropagationConfig(dt=0.1))


def test_evolve_rho_round_trip():
    rho = DensityMatrix(QUBIT, np.diag([0.75, 0.25]).astype(complex))
    u = propagator(_const(SX), 0.0, math.pi / 4, PropagationConfig(dt=0.01))
    out = evolve_rho(rho, u)
    assert np.trace(out.entries).real == pytest.approx(1.0)
    # exp(-i sx pi/4) rotates sz into -sy for this convention.
    sy_val = np.trace(SY @ out.entries).real
    assert sy_val == pytest.approx(-0.5, abs=1e-10)
    other = DensityMatrix(SpaceLayout((2, 2)), np.eye(4) / 4.0)
    with pytest.raises(ValueError):
        evolve_rho(other, u)


def test_evolve_rho_flags_broken_state():
    rho = DensityMatrix(QUBIT, np.diag([0.5, 0.5]).astype(complex))
    bad = Operator(QUBIT, 1.01 * np.eye(2, dtype=complex))
    with pytest.raises(UnitarityError):
        evolve_rho(rho, bad)


def test_compare_generators_gap():
    rho = DensityMatrix(QUBIT, np.array([[0.5, 0.5], [0.5, 0.5]], dtype=complex))
    obs = [Operator(QUBIT, SZ), Operator(QUBIT, SX)]
    same = compare_generators(_const(SZ), _const(SZ), rho, 2.0, obs,
                              PropagationConfig(dt=0.02), n_samples=40)
    assert isinstance(same, ComparisonTrace)
    assert same.max_gap < 1e-12
    assert same.values_a.shape == (2, 41)
    diff = compare_generators(_const(SZ), _const(1.1 * SZ), rho, 2.0, obs,
                              PropagationConfig(dt=0.02), n_samples=40)
    assert diff.max_gap > 0.05
