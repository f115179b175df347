"""
Quick invariant checks runnable without pytest (``squeezemem selftest``).

Each check prints one PASS/FAIL line.  The full property-based suite
lives in the test directory; these are the cheap, deterministic core.
"""

from __future__ import annotations

import math

import numpy as np

from . import _kernels
from .analysis import ModeFunction, error_bars, method1_timeline, method2_project
from .config import ExperimentConfig, parse_config, serialize_config
from .medium import EitMedium, StorageChannel, group_delay, transfer
from .spectra import OpoSource, QuadSpectrum, apply_filter, apply_loss, calibrate_opo, default_grid, make_opo_spectrum
from .synth import HomodyneTrace, Scenario, synth_stationary
from .traceio import decode_traces, encode_trace


def _loss_composition():
    spec = make_opo_spectrum(OpoSource(0.4, 0.8), default_grid())
    a = apply_loss(apply_loss(spec, 0.7), 0.3)
    b = apply_loss(spec, 0.21)
    return np.allclose(a.s_max, b.s_max, rtol=0, atol=1e-12) and np.allclose(a.s_min, b.s_min, rtol=0, atol=1e-12)


def _filter_matches_loss():
    spec = make_opo_spectrum(OpoSource(0.4, 0.8), default_grid())
    eta = math.exp(-5.0)
    out = apply_filter(spec, np.full(spec.freq_grid.shape, math.sqrt(eta), dtype=complex))
    ref = apply_loss(spec, eta)
    return np.max(np.abs(out.s_max - ref.s_max)) < 1e-12


def _opo_round_trip():
    x, eta = calibrate_opo(6.0, -2.0)
    spec = make_opo_spectrum(OpoSource(x, eta), np.array([0.0]))
    return abs(10 * math.log10(spec.s_max[0]) - 6.0) < 1e-9 and abs(10 * math.log10(spec.s_min[0]) + 2.0) < 1e-9


def _transfer_symmetry():
    medium = EitMedium(5.0, omega_c=2 * math.pi * 5.8e6, gamma12=2 * math.pi * 50e3)
    delta = np.linspace(-2e8, 2e8, 2001)
    t_pos = transfer(medium, delta)
    return np.max(np.abs(transfer(medium, -delta) - np.conj(t_pos))) < 1e-12 and np.all(np.abs(t_pos) <= 1.0)


def _delay_limit():
    medium = EitMedium(5.0, omega_c=2 * math.pi * 5.8e6)
    analytic = medium.d * medium.gamma / medium.omega_c**2
    return abs(group_delay(medium) / analytic - 1.0) < 1e-3


def _mode_normalization():
    ch = StorageChannel(0.5)
    t = np.arange(ch.t_on, ch.t_on + 20 * ch.tau_ret, 5e-9)
    g = ch.mode_samples(t)
    return abs(np.trapezoid(g * g, t) - 1.0) < 1e-9


def _determinism():
    spec = QuadSpectrum.vacuum(np.linspace(0, 2.5e7, 101))
    a = synth_stationary(spec, 0.0, 5e7, 2e-5, seed=7)
    b = synth_stationary(spec, 0.0, 5e7, 2e-5, seed=7)
    return np.array_equal(a.samples, b.samples)


def _self_normalization():
    spec = QuadSpectrum.vacuum(np.linspace(0, 1e8, 101))
    traces = [synth_stationary(spec, 0.0, 2e8, 2.2e-6, seed=3, stream=i) for i in range(8)]
    return all(e.value_db == 0.0 for e in method1_timeline(traces, traces))


def _projection_constant():
    mode = ModeFunction(t0=0.0)
    tr = HomodyneTrace(2e8, np.ones(400), 0.0, Scenario.VACUUM, 0)
    expected = mode.tau * (1 - math.exp(-mode.window / mode.tau))
    return abs(method2_project(tr, mode) / expected - 1.0) < 1e-3


def _hodt_round_trip():
    tr = HomodyneTrace(2e8, np.random.default_rng(1).standard_normal(64), 0.3, Scenario.EIT_DELAY, 2**63 + 5)
    back = decode_traces(encode_trace(tr))[0]
    return np.array_equal(back.samples, tr.samples) and back.seed == tr.seed and back.lo_phase == tr.lo_phase


def _config_round_trip():
    cfg = ExperimentConfig().update("channel.t_on", 2.5e-6).update("analysis.excluded_bins", (3, 5))
    return parse_config(serialize_config(cfg)) == cfg


def _error_bar_scale():
    stat, lo = error_bars(900_000)
    return abs(stat - 0.0065) < 2e-4 and lo == 0.004


def _kernel_agreement():
    x = np.random.default_rng(2).standard_normal((4, 2200))
    ok = np.allclose(_kernels.band_power_numpy(x, 128, 17, 1), _kernels.band_power(x, 128, 17, 1), rtol=1e-12)
    ok &= np.array_equal(_kernels.quantize_numpy(x, 0.05, 256), _kernels.quantize(x, 0.05, 256))
    w = np.linspace(1, 0, 151)
    ok &= np.allclose(_kernels.project_numpy(x, 10, w), _kernels.project(x, 10, w), rtol=1e-12)
    return bool(ok)


CHECKS = [
    ("loss composition", _loss_composition),
    ("constant filter equals loss", _filter_matches_loss),
    ("OPO calibration round trip", _opo_round_trip),
    ("EIT transfer symmetry and passivity", _transfer_symmetry),
    ("group delay analytic limit", _delay_limit),
    ("retrieved mode normalization", _mode_normalization),
    ("synthesis determinism", _determinism),
    ("Method I self-normalization", _self_normalization),
    ("Method II constant-input integral", _projection_constant),
    ("HODT round trip", _hodt_round_trip),
    ("config round trip", _config_round_trip),
    ("error bar at 9e5 samples", _error_bar_scale),
    ("numba and numpy kernels agree", _kernel_agreement),
]


def run_selftest(verbose: bool = True) -> bool:
    ok = True
    for name, check in CHECKS:
        try:
            passed = bool(check())
        except Exception as exc:  # a crashing check is a failing check
            passed = False
            name = f"{name} ({type(exc).__name__}: {exc})"
        ok &= passed
        if verbose:
            print(f"{'PASS' if passed else 'FAIL'}  {name}")
    return ok
