import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from squeezemem.errors import AboveThresholdError, CalibrationError, FilterError, ParameterError, RangeError
from squeezemem.spectra import (
    OpoSource,
    QuadSpectrum,
    apply_filter,
    apply_loss,
    band_flux,
    calibrate_opo,
    db_to_linear,
    default_grid,
    lorentzian_average,
    make_opo_spectrum,
    photon_flux,
    quad_at,
)


# ---------------------------------------------------------------------------
# Oracles: a single mode as a 2x2 covariance matrix (vacuum = identity)


def covariance(s_min, s_max, theta=0.0):
    """Covariance of a state whose principal axes sit at angle ``theta``."""
    rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    return rot @ np.diag([s_min, s_max]) @ rot.T


def beam_splitter(cov, eta):
    """Mix with vacuum on a beam splitter of power transmissivity eta."""
    t, r = math.sqrt(eta), math.sqrt(1 - eta)
    joint = np.zeros((4, 4))
    joint[:2, :2] = cov
    joint[2:, 2:] = np.eye(2)
    bs = np.block([[t * np.eye(2), r * np.eye(2)], [-r * np.eye(2), t * np.eye(2)]])
    return (bs @ joint @ bs.T)[:2, :2]


def quadrature_variance(cov, theta):
    """Variance along the quadrature at LO phase theta (theta=0 is the x axis)."""
    u = np.array([math.cos(theta), math.sin(theta)])
    return float(u @ cov @ u)


spectra_values = st.tuples(
    st.floats(0.05, 1.0), st.floats(1.0, 20.0)
).filter(lambda p: p[0] * p[1] >= 1.0)


# ---------------------------------------------------------------------------
# make_opo_spectrum


def test_zero_pump_is_vacuum():
    spec = make_opo_spectrum(OpoSource(0.0, 0.7), default_grid())
    assert np.all(spec.s_min == 1.0) and np.all(spec.s_max == 1.0)


def test_calibrated_source_levels_match_reference():
    x, eta = calibrate_opo(6.0, -2.0)
    spec = make_opo_spectrum(OpoSource(x, eta), np.array([0.0, 1e3]))
    assert 10 * np.log10(spec.s_max[0]) == pytest.approx(6.0, abs=0.01)
    assert 10 * np.log10(spec.s_min[0]) == pytest.approx(-2.0, abs=0.01)
    assert spec.s_max[0] == pytest.approx(3.98, abs=0.01)
    assert spec.s_min[0] == pytest.approx(0.631, abs=0.001)


def test_pure_state_product_is_one():
    spec = make_opo_spectrum(OpoSource(0.3, 1.0), np.array([0.0]))
    assert abs(spec.s_min[0] * spec.s_max[0] - 1.0) < 1e-12


def test_above_threshold_rejected():
    with pytest.raises(AboveThresholdError):
        OpoSource(1.0, 0.5)


@pytest.mark.parametrize("eta", [0.0, -0.1, 1.5])
def test_bad_efficiency_rejected(eta):
    with pytest.raises(ParameterError):
        OpoSource(0.3, eta)


def test_grid_must_increase():
    with pytest.raises(RangeError):
        make_opo_spectrum(OpoSource(0.3, 0.5), np.array([0.0, 2.0, 1.0]))


def test_spectrum_invariants_enforced():
    with pytest.raises(ParameterError):
        QuadSpectrum(np.array([0.0]), np.array([0.5]), np.array([1.5]))  # product < 1
    with pytest.raises(ParameterError):
        QuadSpectrum(np.array([0.0]), np.array([2.0]), np.array([1.0]))  # s_min > s_max


# ---------------------------------------------------------------------------
# calibrate_opo


def test_calibration_reference_values():
    x, eta = calibrate_opo(6.0, -2.0)
    assert x == pytest.approx(0.48, abs=0.005)
    assert eta == pytest.approx(0.42, abs=0.005)


@pytest.mark.parametrize("targets", [(6.0, -2.0), (4.10, -1.24), (1.0, -0.5), (10.0, -3.0)])
def test_calibration_round_trip(targets):
    x, eta = calibrate_opo(*targets)
    spec = make_opo_spectrum(OpoSource(x, eta), np.array([0.0]))
    assert abs(10 * np.log10(spec.s_max[0]) - targets[0]) < 1e-9
    assert abs(10 * np.log10(spec.s_min[0]) - targets[1]) < 1e-9


def test_calibration_vacuum_limit():
    # The ratio of the two excesses fixes x; the pump strength eta*x vanishes.
    x, eta = calibrate_opo(1e-6, -0.5e-6)
    assert eta * x < 1e-6


@pytest.mark.parametrize("targets", [(-1.0, -2.0), (3.0, 1.0), (1.0, -6.0), (0.5, -10.0)])
def test_calibration_infeasible(targets):
    with pytest.raises(CalibrationError):
        calibrate_opo(*targets)


# ---------------------------------------------------------------------------
# apply_loss


def test_loss_identity_and_vacuum():
    spec = make_opo_spectrum(OpoSource(0.4, 0.6), default_grid())
    assert apply_loss(spec, 1.0) == spec
    out = apply_loss(spec, 0.0)
    assert np.all(out.s_min == 1.0) and np.all(out.s_max == 1.0)


def test_loss_reference_value_against_covariance_oracle():
    oracle = beam_splitter(covariance(0.751, 1 / 0.751), 0.2)[0, 0]
    assert oracle == pytest.approx(0.9502, abs=1e-12)
    spec = QuadSpectrum(np.array([0.0]), np.array([0.751]), np.array([1 / 0.751]))
    assert apply_loss(spec, 0.2).s_min[0] == pytest.approx(oracle, abs=1e-12)


@pytest.mark.parametrize("eta", [-0.01, 1.01])
def test_loss_domain(eta):
    with pytest.raises(ParameterError):
        apply_loss(QuadSpectrum.vacuum([0.0]), eta)


@given(spectra_values, st.floats(0.0, 1.0))
def test_loss_matches_beam_splitter(values, eta):
    s_min, s_max = values
    spec = QuadSpectrum(np.array([0.0]), np.array([s_min]), np.array([s_max]))
    out = apply_loss(spec, eta)
    cov = beam_splitter(covariance(s_min, s_max), eta)
    assert abs(out.s_min[0] - cov[0, 0]) < 1e-12
    assert abs(out.s_max[0] - cov[1, 1]) < 1e-12


@given(spectra_values, st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_loss_composition(values, a, b):
    spec = QuadSpectrum(np.array([0.0]), np.array([values[0]]), np.array([values[1]]))
    twice = apply_loss(apply_loss(spec, a), b)
    once = apply_loss(spec, a * b)
    assert abs(twice.s_min[0] - once.s_min[0]) < 1e-12
    assert abs(twice.s_max[0] - once.s_max[0]) < 1e-12


@given(st.floats(0.0, 0.95), st.floats(0.0, 1.0))
def test_loss_cannot_purify(x, eta):
    pure = make_opo_spectrum(OpoSource(x, 1.0), np.array([0.0, 5e6]))
    mixed = apply_loss(pure, eta)
    assert np.all(mixed.s_min * mixed.s_max >= pure.s_min * pure.s_max - 1e-12)


# ---------------------------------------------------------------------------
# apply_filter


def test_filter_identity_and_block():
    spec = make_opo_spectrum(OpoSource(0.4, 0.6), default_grid())
    assert apply_filter(spec, lambda d: np.ones_like(d, dtype=complex)) == spec
    blocked = apply_filter(spec, lambda d: np.zeros_like(d, dtype=complex))
    assert np.all(blocked.s_max == 1.0) and np.all(blocked.s_min == 1.0)


def test_constant_filter_reference_value():
    spec = QuadSpectrum(np.array([0.0, 1e6]), np.array([0.631, 0.631]), np.array([3.98, 3.98]))
    gain = math.exp(-2.5)  # |T|^2 = e^-5
    out = apply_filter(spec, lambda d: np.full(d.shape, gain, dtype=complex))
    assert out.s_max[0] == pytest.approx(1.0201, abs=1e-4)
    ref = apply_loss(spec, math.exp(-5.0))
    assert np.max(np.abs(out.s_max - ref.s_max)) < 1e-12


@given(spectra_values, st.floats(0.0, 1.0), st.floats(0.0, 1e-6))
def test_filter_phase_is_only_delay(values, eta, delay):
    spec = QuadSpectrum(np.array([0.0, 1e6, 2e6]), np.full(3, values[0]), np.full(3, values[1]))
    out = apply_filter(spec, lambda d: math.sqrt(eta) * np.exp(1j * d * delay))
    ref = apply_loss(spec, eta)
    assert np.max(np.abs(out.s_min - ref.s_min)) < 1e-12
    assert np.max(np.abs(out.s_max - ref.s_max)) < 1e-12


def test_filter_rejects_gain():
    spec = QuadSpectrum.vacuum(default_grid())
    with pytest.raises(FilterError):
        apply_filter(spec, lambda d: np.full(d.shape, 1.01 + 0j))


def test_filter_rejects_asymmetric_transfer():
    spec = QuadSpectrum.vacuum(default_grid())
    with pytest.raises(FilterError):
        apply_filter(spec, lambda d: 0.5 + 0.1j * np.sign(d) + 0.1j)


def test_filter_array_needs_real_dc():
    spec = QuadSpectrum.vacuum(default_grid())
    t = np.full(spec.freq_grid.shape, 0.5 + 0.1j)
    with pytest.raises(FilterError):
        apply_filter(spec, t)


# ---------------------------------------------------------------------------
# quad_at and photon_flux


def test_quad_at_principal_axes():
    spec = make_opo_spectrum(OpoSource(0.4, 0.6), default_grid())
    f = 1.234e6
    s_min = np.interp(f, spec.freq_grid, spec.s_min)
    s_max = np.interp(f, spec.freq_grid, spec.s_max)
    assert quad_at(spec, 0.0, f) == pytest.approx(s_min, rel=1e-15)
    assert quad_at(spec, math.pi / 2, f) == pytest.approx(s_max, rel=1e-15)


def test_quad_at_diagonal_against_rotation_oracle():
    spec = QuadSpectrum(np.array([0.0, 1.0]), np.array([0.631, 0.631]), np.array([3.98, 3.98]))
    oracle = quadrature_variance(np.diag([0.631, 3.98]), math.pi / 4)
    assert oracle == pytest.approx(2.3055, abs=1e-12)
    assert quad_at(spec, math.pi / 4, 0.5) == pytest.approx(oracle, abs=1e-12)


def test_quad_at_out_of_range():
    spec = QuadSpectrum.vacuum(default_grid())
    with pytest.raises(RangeError):
        quad_at(spec, 0.0, 20e6)


@given(st.floats(-10, 10), spectra_values)
def test_orthogonal_sum_independent_of_theta(theta, values):
    spec = QuadSpectrum(np.array([0.0, 1.0]), np.full(2, values[0]), np.full(2, values[1]))
    total = quad_at(spec, theta, 0.5) + quad_at(spec, theta + math.pi / 2, 0.5)
    assert abs(total - (values[0] + values[1])) < 1e-12


def test_photon_flux_examples():
    assert photon_flux(1.0, 1.0) == 0.0
    assert photon_flux(0.631, 3.98) == pytest.approx(2.611, abs=1e-12)


@pytest.mark.parametrize("theta", [0.0, math.pi / 4, math.pi / 3])
def test_photon_flux_theta_independent(theta):
    spec = QuadSpectrum(np.array([0.0, 1.0]), np.array([0.631, 0.631]), np.array([3.98, 3.98]))
    flux = photon_flux(quad_at(spec, theta, 0.5), quad_at(spec, theta + math.pi / 2, 0.5))
    assert flux == pytest.approx(2.611, abs=1e-12)


def test_photon_flux_invariance_identity():
    spec = make_opo_spectrum(OpoSource(0.45, 0.5), default_grid())
    a = photon_flux(quad_at(spec, 0.3, 1e6), quad_at(spec, 0.3 + math.pi / 2, 1e6))
    b = photon_flux(quad_at(spec, 1.1, 1e6), quad_at(spec, 1.1 + math.pi / 2, 1e6))
    assert abs(a - b) < 1e-12


def test_band_flux_and_lorentzian_average():
    spec = QuadSpectrum(default_grid(), np.full(2048, 0.8), np.full(2048, 1.5))
    assert band_flux(spec, (1e6, 2e6)) == pytest.approx(0.3)
    assert lorentzian_average(spec, 320e3) == pytest.approx((0.8, 1.5))


# ---------------------------------------------------------------------------
# CSV


def test_csv_round_trip(tmp_path):
    spec = make_opo_spectrum(OpoSource(0.47, 0.42), default_grid())
    path = tmp_path / "spec.csv"
    spec.to_csv(path)
    assert path.read_text().splitlines()[0] == "freq_hz,s_min,s_max"
    assert QuadSpectrum.from_csv(path) == spec


def test_db_helpers():
    assert db_to_linear(10.0) == pytest.approx(10.0)
