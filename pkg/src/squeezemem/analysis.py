"""
Estimators for shot-normalized quadrature noise.

Method I splits each trace into contiguous rectangular windows and
averages the periodogram over the DFT bins inside an analysis band.
Method II projects a segment of each trace onto an exponential temporal
mode and compares the variance of the projections with that of
shot-noise traces.  Both report values in dB relative to shot noise.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.stats
from numpy.typing import NDArray

from . import _kernels
from .errors import InputError, RangeError
from .spectra import linear_to_db
from .synth import TraceSet, as_batch

logger = logging.getLogger(__name__)

DEFAULT_WINDOW = 640e-9
DEFAULT_BAND = (1.0e6, 2.0e6)
DEFAULT_LO_DRIFT_DB = 0.004


@dataclass(frozen=True)
class NoiseEstimate:
    """A shot-normalized noise level with its two error contributions."""

    value_db: float
    stat_err_db: float
    lo_drift_err_db: float
    n_trials: int
    band_or_mode: str = ""

    def __post_init__(self):
        if self.n_trials < 2:
            raise InputError("an estimate needs at least two trials")
        if self.stat_err_db < 0 or self.lo_drift_err_db < 0:
            raise InputError("error bars must be nonnegative")

    @property
    def linear(self) -> float:
        return 10.0 ** (self.value_db / 10.0)

    @property
    def total_err_db(self) -> float:
        """Statistical and LO-drift errors combined in quadrature."""
        return math.hypot(self.stat_err_db, self.lo_drift_err_db)


@dataclass(frozen=True)
class ModeFunction:
    """Exponential temporal mode exp(-(t - t0)/tau) on [t0, t0 + window].

    ``excluded_bins`` are DFT indices of the segment that are removed
    before projection (their conjugate partners are removed too).
    """

    tau: float = 250e-9
    t0: float = 0.0
    window: float = 750e-9
    excluded_bins: tuple[int, ...] = ()

    def __post_init__(self):
        if not self.window > 0 or not self.tau > 0:
            raise InputError("mode window and tau must be positive")
        object.__setattr__(self, "excluded_bins", tuple(int(k) for k in self.excluded_bins))

    def n_samples(self, sample_rate: float) -> int:
        return int(round(self.window * sample_rate)) + 1

    def weights(self, sample_rate: float) -> NDArray[np.float64]:
        """Projection weights: trapezoid rule of f(t - t0) dt, bins removed.

        Removing bins is the linear map x -> ifft(mask * fft(x)).  It is
        symmetric, so it can be moved from the data onto the weights.
        """
        m = self.n_samples(sample_rate)
        dt = 1.0 / sample_rate
        t = np.arange(m) * dt
        w = np.exp(-t / self.tau) * dt
        w[0] *= 0.5
        w[-1] *= 0.5
        if self.excluded_bins:
            mask = np.ones(m)
            for k in self.excluded_bins:
                if not 0 <= k < m:
                    raise RangeError(f"excluded bin {k} outside segment of {m} samples")
                mask[k] = 0.0
                mask[(-k) % m] = 0.0
            w = np.fft.ifft(np.fft.fft(w) * mask).real
        return w

    def with_t0(self, t0: float) -> "ModeFunction":
        return ModeFunction(self.tau, t0, self.window, self.excluded_bins)

    def describe(self) -> str:
        return f"mode tau={self.tau:g}s t0={self.t0:g}s window={self.window:g}s"


def error_bars(samples, lo_drift_db_sigma: float = DEFAULT_LO_DRIFT_DB) -> tuple[float, float]:
    """Statistical and LO-drift error of a normalized variance, in dB.

    ``samples`` is either the sample array or the number of independent
    samples n.  For Gaussian data the relative error of a variance
    estimate is sqrt(2/(n-1)).
    """
    n = int(samples) if np.ndim(samples) == 0 else len(samples)
    if n < 2:
        raise InputError("error bars need at least two samples")
    rel = math.sqrt(2.0 / (n - 1))
    return 10.0 * math.log10(1.0 + rel), float(lo_drift_db_sigma)


def window_geometry(n_samples: int, sample_rate: float, window: float = DEFAULT_WINDOW) -> tuple[int, int, int]:
    """(samples per window, number of windows, discarded remainder)."""
    win_len = int(round(window * sample_rate))
    if win_len < 2:
        raise InputError("analysis window shorter than two samples")
    n_windows = n_samples // win_len
    if n_windows == 0:
        raise InputError("trace shorter than one analysis window")
    return win_len, n_windows, n_samples - n_windows * win_len


def band_bins(win_len: int, sample_rate: float, band: tuple[float, float] = DEFAULT_BAND) -> list[int]:
    """Positive-frequency DFT bins of a window whose centre lies in ``band``."""
    lo, hi = band
    freqs = np.arange(win_len // 2 + 1) * sample_rate / win_len
    bins = [k for k in range(1, win_len // 2 + 1) if lo <= freqs[k] <= hi]
    if not bins:
        raise InputError(f"band [{lo:g}, {hi:g}] Hz contains no DFT bin of a {win_len}-sample window")
    return bins


def method1_powers(traces: TraceSet, window: float = DEFAULT_WINDOW, band=DEFAULT_BAND) -> NDArray[np.float64]:
    """Band-averaged periodogram |X_k|^2/N per trace and window."""
    batch = as_batch(traces)
    win_len, n_windows, _ = window_geometry(batch.n_samples, batch.sample_rate, window)
    bins = band_bins(win_len, batch.sample_rate, band)
    total = np.zeros((len(batch), n_windows))
    for k in bins:
        total += _kernels.band_power(batch.samples, win_len, n_windows, k)
    return total / len(bins)


def window_centers(n_samples: int, sample_rate: float, t0_offset: float, window: float = DEFAULT_WINDOW) -> NDArray:
    win_len, n_windows, _ = window_geometry(n_samples, sample_rate, window)
    return t0_offset + (np.arange(n_windows) + 0.5) * win_len / sample_rate


def method1_from_powers(
    powers: NDArray,
    shot_powers: NDArray,
    n_bins: int = 1,
    lo_drift_db_sigma: float = DEFAULT_LO_DRIFT_DB,
    labels=None,
) -> list[NoiseEstimate]:
    """Per-window estimates from precomputed band powers.

    Each complex DFT bin contributes two real degrees of freedom per
    trial, which sets the effective sample count of the error bars.
    """
    powers = np.asarray(powers, dtype=float)
    shot_powers = np.asarray(shot_powers, dtype=float)
    if powers.ndim != 2 or shot_powers.ndim != 2:
        raise InputError("band powers must be (n_trials, n_windows) arrays")
    if powers.shape[1] != shot_powers.shape[1]:
        raise InputError("signal and shot traces have different window grids")
    if powers.shape[0] < 2 or shot_powers.shape[0] < 2:
        raise InputError("Method I needs at least two trials")
    shot = shot_powers.mean(axis=0)
    if np.any(shot <= 0):
        raise InputError("shot-noise band power is zero")
    ratio = powers.mean(axis=0) / shot
    stat, lo = error_bars(2 * n_bins * powers.shape[0], lo_drift_db_sigma)
    out = []
    for i, r in enumerate(ratio):
        label = labels[i] if labels is not None else f"window {i}"
        out.append(NoiseEstimate(float(linear_to_db(r)), stat, lo, powers.shape[0], label))
    return out


def method1_timeline(
    traces: TraceSet,
    shot_traces: TraceSet,
    window: float = DEFAULT_WINDOW,
    band=DEFAULT_BAND,
    lo_drift_db_sigma: float = DEFAULT_LO_DRIFT_DB,
) -> list[NoiseEstimate]:
    """Windowed-FFT noise level per window index, normalized to shot noise."""
    batch = as_batch(traces)
    shot = as_batch(shot_traces)
    if batch.sample_rate != shot.sample_rate:
        raise InputError("signal and shot traces have different sample rates")
    if batch.n_samples != shot.n_samples:
        raise InputError("signal and shot traces have different lengths")
    win_len, _, _ = window_geometry(batch.n_samples, batch.sample_rate, window)
    bins = band_bins(win_len, batch.sample_rate, band)
    centers = window_centers(batch.n_samples, batch.sample_rate, batch.t0_offset, window)
    labels = [f"window {i} t={c:.4g}s" for i, c in enumerate(centers)]
    return method1_from_powers(
        method1_powers(batch, window, band),
        method1_powers(shot, window, band),
        len(bins),
        lo_drift_db_sigma,
        labels,
    )


def mode_start_index(mode: ModeFunction, n_samples: int, sample_rate: float, t0_offset: float) -> int:
    start = int(round((mode.t0 - t0_offset) * sample_rate))
    if start < 0 or start + mode.n_samples(sample_rate) > n_samples:
        raise RangeError(f"mode segment [{mode.t0:g}, {mode.t0 + mode.window:g}] s lies outside the trace")
    return start


def method2_projections(traces: TraceSet, mode: ModeFunction) -> NDArray[np.float64]:
    """Quadrature sample q of every trace."""
    batch = as_batch(traces)
    start = mode_start_index(mode, batch.n_samples, batch.sample_rate, batch.t0_offset)
    return _kernels.project(batch.samples, start, mode.weights(batch.sample_rate))


def method2_project(trace, mode: ModeFunction) -> float:
    """q = sum_k f(t_k - t0) x(t_k) dt over the mode window (trapezoid)."""
    return float(method2_projections(as_batch(trace), mode)[0])


def method2_from_projections(
    q: NDArray,
    q_shot: NDArray,
    lo_drift_db_sigma: float = DEFAULT_LO_DRIFT_DB,
    label: str = "",
) -> NoiseEstimate:
    q = np.asarray(q, dtype=float)
    q_shot = np.asarray(q_shot, dtype=float)
    if q.size < 2 or q_shot.size < 2:
        raise InputError("Method II needs at least two trials")
    shot_var = float(np.var(q_shot, ddof=1))
    if not shot_var > 0:
        raise InputError("shot-noise projections have zero variance")
    ratio = float(np.var(q, ddof=1)) / shot_var
    stat, lo = error_bars(q.size, lo_drift_db_sigma)
    return NoiseEstimate(float(linear_to_db(ratio)), stat, lo, int(q.size), label)


def method2_variance(
    traces: TraceSet,
    shot_traces: TraceSet,
    mode: ModeFunction,
    lo_drift_db_sigma: float = DEFAULT_LO_DRIFT_DB,
) -> NoiseEstimate:
    """Variance of the mode projections relative to shot noise."""
    batch = as_batch(traces)
    shot = as_batch(shot_traces)
    if batch.sample_rate != shot.sample_rate:
        raise InputError("signal and shot traces have different sample rates")
    return method2_from_projections(
        method2_projections(batch, mode),
        method2_projections(shot, mode),
        lo_drift_db_sigma,
        mode.describe(),
    )


@dataclass(frozen=True)
class FluxTimeline:
    """Photon flux per window: ``raw`` for analysis, ``display`` clipped at 0."""

    raw: NDArray[np.float64]
    display: NDArray[np.float64] = field(init=False)

    def __post_init__(self):
        raw = np.asarray(self.raw, dtype=float)
        object.__setattr__(self, "raw", raw)
        object.__setattr__(self, "display", np.clip(raw, 0.0, None))


def flux_timeline(estimates_min, estimates_max) -> FluxTimeline:
    """S(theta) + S(theta + pi/2) - 2 per window from paired estimates."""
    if len(estimates_min) != len(estimates_max):
        raise InputError("paired estimates must share the window grid")
    for a, b in zip(estimates_min, estimates_max):
        if a.band_or_mode != b.band_or_mode:
            raise InputError(f"window mismatch: {a.band_or_mode!r} vs {b.band_or_mode!r}")
    raw = np.array([a.linear + b.linear - 2.0 for a, b in zip(estimates_min, estimates_max)])
    return FluxTimeline(raw)


def lag_between(reference, delayed, dt: float) -> float:
    """Delay of ``delayed`` relative to ``reference`` via cross-correlation.

    The integer-lag peak is refined with a three-point parabola.
    """
    ref = np.asarray(reference, dtype=float)
    sig = np.asarray(delayed, dtype=float)
    if ref.shape != sig.shape or ref.size < 3:
        raise InputError("lag estimation needs equal-length sequences of at least 3 points")
    corr = np.correlate(sig - sig.mean(), ref - ref.mean(), mode="full")
    peak = int(np.argmax(corr))
    shift = float(peak - (ref.size - 1))
    if 0 < peak < corr.size - 1:
        y0, y1, y2 = corr[peak - 1], corr[peak], corr[peak + 1]
        denom = y0 - 2.0 * y1 + y2
        if denom != 0:
            shift += 0.5 * (y0 - y2) / denom
    return shift * dt


def shot_calibration(
    shot_traces: TraceSet,
    window_or_mode=DEFAULT_WINDOW,
    band=DEFAULT_BAND,
    lo_drift_db_sigma: float = DEFAULT_LO_DRIFT_DB,
    sequences_per_measurement: int = 90,
) -> float:
    """Shot level (linear) of the Method I or Method II statistic.

    ``window_or_mode`` is a window length in seconds (Method I band
    power) or a :class:`ModeFunction` (variance of projections).  A
    warning is issued when per-measurement levels scatter by more than
    3 x lo_drift_db_sigma beyond what sampling noise explains.
    """
    if isinstance(shot_traces, (list, tuple)) and len(shot_traces) == 0:
        raise InputError("no shot-noise traces given")
    batch = as_batch(shot_traces)
    if isinstance(window_or_mode, ModeFunction):
        q = method2_projections(batch, window_or_mode)
        per_trial = (q - q.mean()) ** 2
        dof = 1
    else:
        per_trial = method1_powers(batch, float(window_or_mode), band).mean(axis=1)
        win_len, n_windows, _ = window_geometry(batch.n_samples, batch.sample_rate, float(window_or_mode))
        dof = 2 * n_windows * len(band_bins(win_len, batch.sample_rate, band))
    level = float(per_trial.mean())

    measurements = batch.stream_ids // sequences_per_measurement
    groups = np.unique(measurements)
    if groups.size >= 3 and lo_drift_db_sigma:
        levels, counts = [], []
        for m in groups:
            sel = per_trial[measurements == m]
            levels.append(float(sel.mean()))
            counts.append(sel.size)
        levels_db = linear_to_db(np.array(levels))
        sigmas = np.array([10 / math.log(10) * math.sqrt(2.0 / (dof * c)) for c in counts])
        # Flag drift only when the scatter is significant (chi-square test)
        # and its part beyond sampling noise exceeds 3 x lo_drift_db_sigma.
        resid = levels_db - np.average(levels_db, weights=1.0 / sigmas**2)
        chi2 = float(np.sum((resid / sigmas) ** 2))
        significant = scipy.stats.chi2.sf(chi2, groups.size - 1) < 1e-3
        excess = math.sqrt(max(float(np.var(levels_db, ddof=1)) - float(np.mean(sigmas**2)), 0.0))
        if significant and excess > 3.0 * lo_drift_db_sigma:
            warnings.warn(
                f"shot level drifts by {excess:.4f} dB across measurements (> 3 x {lo_drift_db_sigma} dB)",
                RuntimeWarning,
                stacklevel=2,
            )
    return level


def averaged_periodogram(traces: TraceSet, segment: int) -> tuple[NDArray, NDArray]:
    """Mean |X_k|^2/N over non-overlapping rectangular segments of all traces.

    Returns (frequencies in Hz, power per bin), bins 0..segment/2.
    """
    batch = as_batch(traces)
    n_seg = batch.n_samples // segment
    if n_seg == 0:
        raise InputError("trace shorter than one segment")
    seg = batch.samples[:, : n_seg * segment].reshape(-1, segment)
    seg = seg - seg.mean(axis=1, keepdims=True)
    power = np.abs(np.fft.rfft(seg, axis=1)) ** 2 / segment
    freqs = np.fft.rfftfreq(segment, 1.0 / batch.sample_rate)
    return freqs, power.mean(axis=0)
