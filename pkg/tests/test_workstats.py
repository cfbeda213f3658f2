"""Work-distribution oracles, Fourier reconstruction, and fluctuation checks."""

import math
from types import SimpleNamespace

import numpy as np
import pytest

from workqed.errors import GuardLevelError
from workqed.qop import Operator, SpaceLayout, fock_ops, log_partition
from workqed.workstats import (
    WorkDistribution,
    char_direct,
    char_from_peaks,
    crooks_check,
    dominant_peaks,
    exclusive_char,
    exclusive_oracle,
    free_energy_oscillator,
    free_energy_spectral,
    jarzynski_check,
    pdf_from_char,
    peak_weight,
    tmp_oracle,
)

QUBIT = SpaceLayout((2,))
BETA = 0.8


def _op(m):
    return Operator(QUBIT, np.asarray(m, dtype=complex))


def _rotation(theta):
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return _op([[c, -s], [s, c]])


# A two-level protocol with all four transition peaks populated:
# splittings 1.0 -> 2.5, work values -1.75, -0.75, 0.75, 1.75.
H0 = _op(np.diag([-0.5, 0.5]))
H1 = _op(np.diag([-1.25, 1.25]))
U_FWD = _rotation(0.9)


@pytest.fixture(scope="module")
def qubit_dist():
    return tmp_oracle(H0, H1, U_FWD, BETA, guard_levels=0)


def test_oracle_peaks_by_hand(qubit_dist):
    peaks = dict(qubit_dist.peaks)
    assert sorted(peaks) == pytest.approx([-1.75, -0.75, 0.75, 1.75])
    z = 2 * math.cosh(BETA * 0.5)
    p_up = math.exp(-BETA * 0.5) / z
    p_dn = math.exp(BETA * 0.5) / z
    stay = math.cos(0.45) ** 2
    flip = math.sin(0.45) ** 2
    assert peaks[-0.75] == pytest.approx(p_dn * stay)
    assert peaks[1.75] == pytest.approx(p_dn * flip)
    assert peaks[0.75] == pytest.approx(p_up * stay)
    assert peaks[-1.75] == pytest.approx(p_up * flip)
    assert qubit_dist.total_probability() == pytest.approx(1.0)


def test_identity_protocol_single_peak():
    dist = tmp_oracle(H0, H0, _op(np.eye(2)), BETA, guard_levels=0)
    weights = {w: p for w, p in dist.peaks if p > 1e-12}
    assert weights == {0.0: pytest.approx(1.0)}
    assert jarzynski_check(dist, BETA, 0.0) == pytest.approx(1.0)


def test_char_direct_matches_peak_sum(qubit_dist):
    for u_t in (0.0, 0.3, 1.7, 4.2):
        g = char_direct(H0, H1, U_FWD, BETA, u_t)
        assert g == pytest.approx(char_from_peaks(qubit_dist, u_t), abs=1e-12)
    # Conjugate symmetry of the characteristic function.
    g = char_direct(H0, H1, U_FWD, BETA, 2.1)
    g_neg = char_direct(H0, H1, U_FWD, BETA, -2.1)
    assert g_neg == pytest.approx(np.conj(g), abs=1e-12)
    assert char_direct(H0, H1, U_FWD, BETA, 0.0) == pytest.approx(1.0)


def test_char_rejects_nonunitary():
    with pytest.raises(ValueError, match="not unitary"):
        char_direct(H0, H1, _op([[1.0, 0.0], [0.0, 1.1]]), BETA, 1.0)


def test_jarzynski_exact_on_peaks(qubit_dist):
    delta_F = free_energy_spectral(H0, H1, BETA)
    assert jarzynski_check(qubit_dist, BETA, delta_F) == pytest.approx(1.0, abs=1e-12)


def test_exclusive_oracle_bochkov_kuzovlev():
    # Both measurements use H0, so <e^{-beta w}> = 1 with no free-energy term.
    dist = exclusive_oracle(H0, U_FWD, BETA, guard_levels=0)
    assert jarzynski_check(dist, BETA, 0.0) == pytest.approx(1.0, abs=1e-12)
    assert exclusive_char(H0, U_FWD, BETA, 1.3) == pytest.approx(
        char_from_peaks(dist, 1.3), abs=1e-12)


def test_guard_leakage_aborts():
    # An oscillator so hot its top two levels carry real population.
    n = 6
    a, adag = fock_ops(n)
    h = Operator(SpaceLayout((n,)), adag.entries @ a.entries)
    with pytest.raises(GuardLevelError):
        tmp_oracle(h, h, Operator(SpaceLayout((n,)), np.eye(n, dtype=complex)),
                   beta=0.05)


def test_distribution_validation():
    with pytest.raises(ValueError):
        WorkDistribution(kind="peaks", beta=1.0, peaks=((0.0, 0.7),))
    with pytest.raises(ValueError):
        WorkDistribution(kind="peaks", beta=1.0, peaks=((0.0, -0.1), (1.0, 1.1)))
    w = np.linspace(-1, 1, 101)
    with pytest.raises(ValueError):
        WorkDistribution(kind="density", beta=1.0, w_grid=w, values=0.4 * np.ones_like(w))
    with pytest.raises(ValueError):
        WorkDistribution(kind="bogus", beta=1.0)


# ---------------------------------------------------------------------------
# Fourier reconstruction
# ---------------------------------------------------------------------------

U_GRID = np.arange(0, 151) * 0.2


@pytest.fixture(scope="module")
def qubit_density(qubit_dist):
    g = np.array([char_from_peaks(qubit_dist, u) for u in U_GRID])
    return pdf_from_char(U_GRID, g, beta=BETA,
                         delta_F=free_energy_spectral(H0, H1, BETA))


def test_density_recovers_peak_weights(qubit_dist, qubit_density):
    assert qubit_density.total_probability() == pytest.approx(1.0, abs=1e-3)
    for w0, p in qubit_dist.peaks:
        assert peak_weight(qubit_density, w0, 0.45) == pytest.approx(p, abs=2e-3)


def test_dominant_peaks_positions(qubit_dist, qubit_density):
    found = dominant_peaks(qubit_density, 4, min_separation=0.5)
    assert [w for w, _ in found] == pytest.approx(
        [w for w, _ in qubit_dist.peaks], abs=0.02)
    # Heights are ordered like the weights.
    heights = {round(w): h for w, h in found}
    assert heights[2] < heights[1]


def test_sample_object_dispatch(qubit_dist, qubit_density):
    samples = [SimpleNamespace(u=u, g_value=char_from_peaks(qubit_dist, u))
               for u in U_GRID]
    again = pdf_from_char(samples, beta=BETA)
    np.testing.assert_allclose(again.values, qubit_density.values, atol=1e-12)


def test_rect_window_rings_more(qubit_dist):
    # Sharp spectral peaks under a rectangular window ring so hard the
    # negative-mass invariant rejects the reconstruction; the Hann window
    # keeps the excursion tiny.
    g = np.array([char_from_peaks(qubit_dist, u) for u in U_GRID])
    hann = pdf_from_char(U_GRID, g, beta=BETA, window="hann")
    neg_mass = np.trapezoid(np.minimum(hann.values, 0.0), hann.w_grid)
    assert -0.02 < neg_mass < 0.0
    with pytest.raises(ValueError, match="negative excursion"):
        pdf_from_char(U_GRID, g, beta=BETA, window="rect")


def test_complex_center_sample_projected(qubit_dist):
    # A lossy protocol can report Im g(0) != 0; the reconstruction projects
    # the center sample onto the conjugate-symmetric model class, leaving
    # the real density untouched.
    g = np.array([char_from_peaks(qubit_dist, u) for u in U_GRID])
    clean = pdf_from_char(U_GRID, g, beta=BETA)
    g[0] = g[0] - 0.08j
    lossy = pdf_from_char(U_GRID, g, beta=BETA)
    np.testing.assert_allclose(lossy.values, clean.values, atol=1e-12)


def test_pdf_input_validation():
    g = np.ones(3, dtype=complex)
    with pytest.raises(ValueError, match="start at 0"):
        pdf_from_char(np.array([0.1, 0.2, 0.3]), g)
    with pytest.raises(ValueError, match="uniform"):
        pdf_from_char(np.array([0.0, 0.1, 0.3]), g)
    with pytest.raises(ValueError, match="window"):
        pdf_from_char(np.array([0.0, 0.1, 0.2]), g, window="kaiser")
    with pytest.raises(ValueError, match="two"):
        pdf_from_char(np.array([0.0]), np.ones(1, dtype=complex))


# ---------------------------------------------------------------------------
# Fluctuation-theorem checks
# ---------------------------------------------------------------------------

def test_crooks_fit_on_qubit(qubit_density):
    u_bwd = Operator(QUBIT, U_FWD.entries.conj().T)
    dist_b = tmp_oracle(H1, H0, u_bwd, BETA, guard_levels=0)
    g_b = np.array([char_from_peaks(dist_b, u) for u in U_GRID])
    dens_b = pdf_from_char(U_GRID, g_b, beta=BETA)
    report = crooks_check(qubit_density, dens_b, BETA, w_band=5.0)
    delta_F = free_energy_spectral(H0, H1, BETA)
    assert report.slope == pytest.approx(BETA, abs=0.05)
    assert report.intercept == pytest.approx(-BETA * delta_F, abs=0.05)
    assert report.slope_expected == BETA
    assert report.intercept_expected == pytest.approx(-BETA * delta_F)
    assert report.r_squared > 0.95
    assert report.jarzynski_lhs == pytest.approx(1.0, abs=0.01)
    assert report.points_used >= 5
    assert set(report.to_dict()) == {
        "slope", "intercept", "slope_expected", "intercept_expected",
        "r_squared", "jarzynski_lhs", "points_used"}


def test_crooks_rejects_peak_input(qubit_dist):
    with pytest.raises(ValueError):
        crooks_check(qubit_dist, qubit_dist, BETA)


def test_free_energy_oscillator_vs_spectral():
    n = 120
    a, adag = fock_ops(n)
    layout = SpaceLayout((n,))
    num = adag.entries @ a.entries + 0.5 * np.eye(n)
    w0, w1 = 1.0, math.sqrt(0.375)
    h0 = Operator(layout, w0 * num)
    h1 = Operator(layout, w1 * num)
    analytic = free_energy_oscillator(w0, w1, 1.0)
    spectral = (log_partition(h0, 1.0) - log_partition(h1, 1.0)) / 1.0
    assert spectral == pytest.approx(analytic, abs=1e-10)
    with pytest.raises(ValueError):
        free_energy_oscillator(0.0, 1.0, 1.0)
