import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from squeezemem.analysis import (
    FluxTimeline,
    ModeFunction,
    NoiseEstimate,
    averaged_periodogram,
    band_bins,
    error_bars,
    flux_timeline,
    lag_between,
    method1_from_powers,
    method1_powers,
    method1_timeline,
    method2_from_projections,
    method2_project,
    method2_projections,
    method2_variance,
    shot_calibration,
    window_centers,
    window_geometry,
)
from squeezemem.errors import InputError, RangeError
from squeezemem.synth import HomodyneTrace, Scenario, TraceBatch, white_noise

FS = 2e8


def white_batch(seed, n_traces, n_samples=2200, scale=1.0, t0=-4.04e-6, scenario=0):
    samples = scale * white_noise(seed, range(n_traces), n_samples)
    return TraceBatch(FS, samples, 0.0, scenario, seed, t0, np.arange(n_traces))


# ---------------------------------------------------------------------------
# Error bars


@pytest.mark.parametrize("n,expected", [(900_000, 0.0065), (1000, 0.19)])
def test_error_bar_reference_values(n, expected):
    stat, lo = error_bars(n)
    assert stat == pytest.approx(expected, abs=0.0005 if n > 1000 else 0.005)
    assert lo == 0.004


@given(st.integers(2, 10**7), st.integers(2, 10**7))
def test_error_bars_shrink_with_samples(a, b):
    lo, hi = sorted((a, b))
    assert error_bars(hi)[0] <= error_bars(lo)[0]


def test_error_bars_need_two_samples():
    with pytest.raises(InputError):
        error_bars(1)


def test_total_error_in_quadrature():
    est = NoiseEstimate(0.0, 0.003, 0.004, 10)
    assert est.total_err_db == pytest.approx(0.005)


# ---------------------------------------------------------------------------
# Method I geometry


def test_default_geometry():
    win_len, n_windows, remainder = window_geometry(2200, FS)
    assert (win_len, n_windows, remainder) == (128, 17, 24)
    assert band_bins(128, FS) == [1]
    centers = window_centers(2200, FS, -4.04e-6)
    assert centers[0] == pytest.approx(-4.04e-6 + 320e-9)
    assert centers[11] - 320e-9 == pytest.approx(3e-6, abs=1e-12)


def test_empty_band_rejected():
    with pytest.raises(InputError):
        band_bins(128, FS, (2.0e6, 3.0e6))


def test_short_trace_rejected():
    with pytest.raises(InputError):
        window_geometry(100, FS)


# ---------------------------------------------------------------------------
# Method I estimator


def test_self_normalization_exact():
    batch = white_batch(1, 20)
    assert all(e.value_db == 0.0 for e in method1_timeline(batch, batch))


@given(st.floats(0.1, 10.0))
def test_method1_scales_with_power(gain):
    shot = white_batch(2, 10)
    sig = shot.with_samples(shot.samples * math.sqrt(gain))
    for est in method1_timeline(sig, shot):
        assert est.value_db == pytest.approx(10 * math.log10(gain), abs=1e-9)


def test_method1_error_bar_counts_two_dof_per_bin():
    batch = white_batch(3, 50)
    est = method1_timeline(batch, batch)[0]
    assert est.stat_err_db == pytest.approx(error_bars(2 * 50)[0])


def test_band_power_of_white_noise_is_one():
    powers = method1_powers(white_batch(4, 2000))
    # 2000 x 17 windows, 2 dof each: relative sigma 0.54%
    assert powers.mean() == pytest.approx(1.0, abs=0.02)


def test_mean_subtraction_removes_dc():
    batch = white_batch(5, 10)
    shifted = batch.with_samples(batch.samples + 7.0)
    assert np.allclose(method1_powers(shifted), method1_powers(batch))


def test_method1_mismatched_inputs():
    with pytest.raises(InputError):
        method1_timeline(white_batch(1, 4), white_batch(1, 4, n_samples=2000))
    with pytest.raises(InputError):
        method1_from_powers(np.ones((3, 4)), np.ones((3, 5)))
    with pytest.raises(InputError):
        method1_from_powers(np.ones((3, 4)), np.zeros((3, 4)))


# ---------------------------------------------------------------------------
# Method II


def test_mode_weights_trapezoid():
    mode = ModeFunction()
    w = mode.weights(FS)
    assert w.size == 151
    dt = 1 / FS
    assert w[0] == pytest.approx(0.5 * dt)
    assert w[1] == pytest.approx(math.exp(-dt / mode.tau) * dt)


def test_constant_input_integral():
    mode = ModeFunction(t0=0.0)
    tr = HomodyneTrace(FS, np.ones(400), 0.0, Scenario.VACUUM, 0)
    expected = mode.tau * (1 - math.exp(-mode.window / mode.tau))
    assert method2_project(tr, mode) == pytest.approx(expected, rel=1e-3)


@given(st.floats(-5.0, 5.0), st.floats(-5.0, 5.0))
def test_projection_is_linear(a, b):
    mode = ModeFunction(t0=0.0)
    x = white_batch(6, 2, n_samples=400, t0=0.0)
    q = method2_projections(x, mode)
    combo = TraceBatch(FS, [a * x.samples[0] + b * x.samples[1]], 0.0, 0, 6, 0.0, [0])
    assert method2_projections(combo, mode)[0] == pytest.approx(a * q[0] + b * q[1], abs=1e-12)


def test_excluded_bin_removes_tone():
    mode = ModeFunction(t0=0.0, excluded_bins=(3,))
    m = mode.n_samples(FS)
    tone = np.cos(2 * np.pi * 3 * np.arange(m) / m)
    tr = HomodyneTrace(FS, tone, 0.0, Scenario.VACUUM, 0)
    assert abs(method2_project(tr, mode)) < 1e-18


def test_excluded_bin_out_of_range():
    with pytest.raises(RangeError):
        ModeFunction(excluded_bins=(500,)).weights(FS)


def test_mode_outside_trace():
    with pytest.raises(RangeError):
        method2_projections(white_batch(1, 2), ModeFunction(t0=6.5e-6))


def test_method2_self_normalization_and_scaling():
    shot = white_batch(8, 100)
    mode = ModeFunction(t0=3e-6)
    assert method2_variance(shot, shot, mode).value_db == 0.0
    sig = shot.with_samples(2.0 * shot.samples)
    assert method2_variance(sig, shot, mode).value_db == pytest.approx(10 * math.log10(4.0))


def test_method2_needs_two_trials():
    with pytest.raises(InputError):
        method2_from_projections(np.array([1.0]), np.array([1.0, 2.0]))


# ---------------------------------------------------------------------------
# Flux, lag and calibration


def test_flux_timeline_clipping():
    a = [NoiseEstimate(-3.0, 0.1, 0.0, 10, "w0"), NoiseEstimate(0.0, 0.1, 0.0, 10, "w1")]
    b = [NoiseEstimate(3.0, 0.1, 0.0, 10, "w0"), NoiseEstimate(-1.0, 0.1, 0.0, 10, "w1")]
    flux = flux_timeline(a, b)
    assert flux.raw[0] == pytest.approx(10**-0.3 + 10**0.3 - 2)
    assert flux.raw[1] < 0 and flux.display[1] == 0.0
    assert isinstance(flux, FluxTimeline)


def test_flux_timeline_label_mismatch():
    a = [NoiseEstimate(0.0, 0.1, 0.0, 10, "w0")]
    b = [NoiseEstimate(0.0, 0.1, 0.0, 10, "w1")]
    with pytest.raises(InputError):
        flux_timeline(a, b)


@given(st.integers(-5, 5), st.floats(0.0, 0.9))
def test_lag_recovers_shift(shift, frac):
    t = np.arange(64, dtype=float)
    ref = np.exp(-0.5 * ((t - 30) / 3) ** 2)
    delayed = np.exp(-0.5 * ((t - 30 - shift - frac) / 3) ** 2)
    assert lag_between(ref, delayed, 1.0) == pytest.approx(shift + frac, abs=0.1)


def test_shot_calibration_white_levels():
    batch = white_batch(9, 270)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert shot_calibration(batch) == pytest.approx(1.0, abs=0.03)
        level = shot_calibration(batch, ModeFunction(t0=3e-6))
    assert level == pytest.approx(np.sum(ModeFunction().weights(FS) ** 2), rel=0.2)


def test_shot_calibration_flags_drift():
    batch = white_batch(10, 900)
    gains = np.repeat(10 ** (np.array([0.0, 0.5, -0.5, 0.3, -0.3, 0.1, -0.1, 0.4, -0.4, 0.2]) / 20), 90)
    drifting = batch.with_samples(batch.samples * gains[:, None])
    with pytest.warns(RuntimeWarning, match="drifts"):
        shot_calibration(drifting)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        shot_calibration(batch)


def test_shot_calibration_empty():
    with pytest.raises(InputError):
        shot_calibration([])


def test_averaged_periodogram_white():
    freqs, power = averaged_periodogram(white_batch(11, 100), 128)
    assert freqs[1] == pytest.approx(FS / 128)
    assert power[1:].mean() == pytest.approx(1.0, abs=0.02)
