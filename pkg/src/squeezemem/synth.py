"""
Homodyne trace containers, seeding, stationary synthesis and detector
imperfections.

Sample units are chosen so that an ideal shot-noise trace has unit
variance per sample; every spectrum is therefore a one-sided PSD in
units of the shot level.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence, Union

import numpy as np
from numpy.typing import NDArray

from . import _kernels
from .errors import InputError, ParameterError, RangeError, ScheduleError
from .spectra import QuadSpectrum, quad_at

SPECTRUM_SAMPLE_RATE = 5e7
PULSE_SAMPLE_RATE = 2e8
SPIKE_BAND_LIMIT_HZ = 700e3

# Stream purposes keep the noise, imperfection and drift draws of one
# sequence statistically independent while sharing a root seed.
NOISE_STREAM = 0
IMPERFECTION_STREAM = 1
DRIFT_STREAM = 2


class Scenario(enum.IntEnum):
    """Experimental configuration of a trace; the value is the file code."""

    VACUUM = 0
    SOURCE_ONLY = 1
    EIT_DELAY = 2
    STORE_RETRIEVE = 3

    @property
    def label(self) -> str:
        return {0: "Vacuum", 1: "SourceOnly", 2: "EitDelay", 3: "StoreRetrieve"}[int(self)]

    @classmethod
    def parse(cls, name: Union[str, int, "Scenario"]) -> "Scenario":
        if isinstance(name, (int, Scenario)):
            return cls(int(name))
        key = name.replace("_", "").replace("-", "").lower()
        for member in cls:
            if member.label.lower() == key:
                return member
        raise ParameterError(f"unknown scenario {name!r}")


def stream_id(measurement: int, sequence: int, per_measurement: int = 90) -> int:
    """Stream index of one sequence: measurement * per_measurement + sequence."""
    if not 0 <= sequence < per_measurement or measurement < 0:
        raise ParameterError("measurement and sequence indices out of range")
    return measurement * per_measurement + sequence


def stream_rng(root_seed: int, stream: int, purpose: int = NOISE_STREAM) -> np.random.Generator:
    """Independent generator for (root seed, purpose, stream).

    Uses SeedSequence spawn keys, so any stream can be regenerated on its
    own without touching the others.
    """
    seq = np.random.SeedSequence(int(root_seed), spawn_key=(int(purpose), int(stream)))
    return np.random.Generator(np.random.PCG64(seq))


def white_noise(root_seed: int, streams: Iterable[int], n_samples: int, purpose: int = NOISE_STREAM) -> NDArray:
    """Unit-variance white noise, one row per stream."""
    streams = list(streams)
    out = np.empty((len(streams), n_samples))
    for row, stream in enumerate(streams):
        out[row] = stream_rng(root_seed, stream, purpose).standard_normal(n_samples)
    return out


@dataclass(frozen=True, eq=False)
class HomodyneTrace:
    """One sampled homodyne record."""

    sample_rate: float
    samples: NDArray[np.float64]
    lo_phase: float
    scenario: Scenario
    seed: int
    t0_offset: float = 0.0
    stream_id: int = 0

    def __post_init__(self):
        samples = np.array(self.samples, dtype=float)
        if samples.ndim != 1 or samples.size == 0:
            raise InputError("a trace needs a non-empty 1-D sample array")
        if not np.all(np.isfinite(samples)):
            raise InputError("trace samples must be finite")
        if not self.sample_rate > 0:
            raise ParameterError("sample rate must be positive")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "scenario", Scenario.parse(self.scenario))

    @property
    def times(self) -> NDArray[np.float64]:
        return self.t0_offset + np.arange(self.samples.size) / self.sample_rate

    def __eq__(self, other):
        if not isinstance(other, HomodyneTrace):
            return NotImplemented
        return (
            self.sample_rate == other.sample_rate
            and self.lo_phase == other.lo_phase
            and self.scenario == other.scenario
            and self.seed == other.seed
            and self.t0_offset == other.t0_offset
            and self.stream_id == other.stream_id
            and np.array_equal(self.samples, other.samples)
        )


@dataclass(frozen=True, eq=False)
class TraceBatch:
    """Many traces of equal length sharing rate, phase and scenario.

    This is the working representation inside the pipeline; individual
    :class:`HomodyneTrace` objects are views for I/O.
    """

    sample_rate: float
    samples: NDArray[np.float64]
    lo_phase: float
    scenario: Scenario
    seed: int
    t0_offset: float = 0.0
    stream_ids: NDArray[np.int64] = field(default=None)

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 2 or samples.shape[1] == 0:
            raise InputError("batch samples must have shape (n_traces, n_samples)")
        if not self.sample_rate > 0:
            raise ParameterError("sample rate must be positive")
        ids = np.arange(samples.shape[0]) if self.stream_ids is None else np.asarray(self.stream_ids, dtype=np.int64)
        if ids.shape != (samples.shape[0],):
            raise InputError("one stream id per trace is required")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "stream_ids", ids)
        object.__setattr__(self, "scenario", Scenario.parse(self.scenario))

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def times(self) -> NDArray[np.float64]:
        return self.t0_offset + np.arange(self.n_samples) / self.sample_rate

    def trace(self, i: int) -> HomodyneTrace:
        return HomodyneTrace(
            self.sample_rate,
            self.samples[i],
            self.lo_phase,
            self.scenario,
            self.seed,
            self.t0_offset,
            int(self.stream_ids[i]),
        )

    def __iter__(self):
        for i in range(len(self)):
            yield self.trace(i)

    def with_samples(self, samples) -> "TraceBatch":
        return replace(self, samples=samples)

    @classmethod
    def from_traces(cls, traces: Sequence[HomodyneTrace]) -> "TraceBatch":
        traces = list(traces)
        if not traces:
            raise InputError("no traces given")
        first = traces[0]
        for tr in traces[1:]:
            if tr.sample_rate != first.sample_rate:
                raise InputError("traces have mismatched sample rates")
            if tr.samples.size != first.samples.size:
                raise InputError("traces have mismatched lengths")
        return cls(
            first.sample_rate,
            np.stack([tr.samples for tr in traces]),
            first.lo_phase,
            first.scenario,
            first.seed,
            first.t0_offset,
            np.array([tr.stream_id for tr in traces], dtype=np.int64),
        )


TraceSet = Union[TraceBatch, Sequence[HomodyneTrace]]


def as_batch(traces: TraceSet) -> TraceBatch:
    if isinstance(traces, TraceBatch):
        return traces
    if isinstance(traces, HomodyneTrace):
        return TraceBatch.from_traces([traces])
    return TraceBatch.from_traces(traces)


@dataclass(frozen=True)
class ImperfectionBudget:
    """Detector and LO non-idealities; ``None`` disables a term.

    Levels are relative to the shot-noise PSD.  ``spike_lines`` holds
    (frequency Hz, power dB) pairs, where the power is relative to a
    full-scale sinusoid at ``full_scale_sigma`` shot standard deviations.
    """

    lo_drift_db_sigma: float | None = 0.004
    cmrr_db: float | None = -58.0
    lo_classical_excess_db: float = 3.0
    lo_band_hz: tuple[float, float] = (1e6, 2e6)
    adc_bits: int | None = 8
    electronic_floor_db: float | None = -20.0
    spike_lines: tuple[tuple[float, float], ...] = ((150e3, -45.0), (350e3, -45.0), (550e3, -45.0))
    full_scale_sigma: float = 5.0

    def __post_init__(self):
        if self.adc_bits is not None and (int(self.adc_bits) != self.adc_bits or self.adc_bits < 1):
            raise ParameterError("adc_bits must be an integer >= 1")
        if self.lo_drift_db_sigma is not None and self.lo_drift_db_sigma < 0:
            raise ParameterError("LO drift sigma must be nonnegative")
        lo, hi = self.lo_band_hz
        if not 0 <= lo < hi:
            raise ParameterError("LO excess band must satisfy 0 <= lo < hi")
        lines = tuple((float(f), float(p)) for f, p in self.spike_lines)
        for freq, _ in lines:
            if not 0 < freq < SPIKE_BAND_LIMIT_HZ:
                raise ParameterError(f"spike line at {freq} Hz must lie in (0, 700 kHz)")
        object.__setattr__(self, "spike_lines", lines)
        if not self.full_scale_sigma > 0:
            raise ParameterError("full_scale_sigma must be positive")

    @classmethod
    def ideal(cls) -> "ImperfectionBudget":
        return cls(
            lo_drift_db_sigma=None,
            cmrr_db=None,
            adc_bits=None,
            electronic_floor_db=None,
            spike_lines=(),
        )

    @property
    def is_ideal(self) -> bool:
        return (
            not self.lo_drift_db_sigma
            and self.cmrr_db is None
            and self.adc_bits is None
            and self.electronic_floor_db is None
            and not self.spike_lines
        )

    @property
    def additive_white_level(self) -> float:
        """Electronic floor PSD relative to shot (0 when disabled)."""
        return 0.0 if self.electronic_floor_db is None else 10.0 ** (self.electronic_floor_db / 10.0)


@dataclass(frozen=True)
class PulseSchedule:
    """Timing of one pulsed sequence; times relative to control switch-off.

    The trace spans [t0_offset, t0_offset + sequence_len).  The input
    pulse occupies [pulse_end - pulse_len, pulse_end].
    """

    pulse_len: float = 930e-9
    tail_leak: float = 0.05
    t_off: float = 0.0
    t_on: float = 3e-6
    sequence_len: float = 11e-6
    sequences_per_measurement: int = 90
    n_measurements: int = 1000
    sample_rate: float = PULSE_SAMPLE_RATE
    t0_offset: float = -4.04e-6
    pulse_end: float = 0.0

    def __post_init__(self):
        if not 0 < self.pulse_len < self.sequence_len:
            raise ScheduleError("pulse length must be positive and shorter than the sequence")
        if not 0.0 <= self.tail_leak < 1.0:
            raise ScheduleError("tail_leak must lie in [0, 1)")
        if not self.t_on > self.t_off:
            raise ScheduleError("t_on must be later than t_off")
        if self.sequences_per_measurement < 1 or self.n_measurements < 1:
            raise ScheduleError("sequence counts must be positive")
        if not self.sample_rate > 0:
            raise ScheduleError("sample rate must be positive")
        t_end = self.t0_offset + self.sequence_len
        if self.pulse_end - self.pulse_len < self.t0_offset or self.pulse_end > t_end:
            raise ScheduleError("input pulse does not fit inside the trace")
        if not self.t0_offset <= self.t_off < self.t_on < t_end:
            raise ScheduleError("control switch times must fall inside the trace")

    @property
    def n_samples(self) -> int:
        return int(round(self.sequence_len * self.sample_rate))

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def times(self) -> NDArray[np.float64]:
        return self.t0_offset + np.arange(self.n_samples) * self.dt

    @property
    def pulse_start(self) -> float:
        return self.pulse_end - self.pulse_len

    @property
    def storage_time(self) -> float:
        return self.t_on - self.t_off

    @property
    def total_sequences(self) -> int:
        return self.n_measurements * self.sequences_per_measurement

    def envelope(self, times) -> NDArray[np.float64]:
        """Power transmissivity of the pulse-shaping modulator."""
        times = np.asarray(times, dtype=float)
        inside = (times >= self.pulse_start) & (times <= self.pulse_end)
        return np.where(inside, 1.0, self.tail_leak)


def synth_stationary(
    spec: QuadSpectrum,
    theta: float,
    sample_rate: float,
    duration: float,
    seed: int,
    stream: int = 0,
    scenario: Scenario = Scenario.SOURCE_ONLY,
) -> HomodyneTrace:
    """Stationary Gaussian trace whose one-sided PSD is S(theta, f).

    White noise is shaped by sqrt(S) in the frequency domain.
    """
    batch = synth_stationary_batch(spec, theta, sample_rate, duration, seed, [stream], scenario)
    return batch.trace(0)


def synth_stationary_batch(
    spec: QuadSpectrum,
    theta: float,
    sample_rate: float,
    duration: float,
    seed: int,
    streams: Iterable[int],
    scenario: Scenario = Scenario.SOURCE_ONLY,
) -> TraceBatch:
    n = int(round(duration * sample_rate))
    if n < 2:
        raise ParameterError("duration too short for the sample rate")
    grid = spec.freq_grid
    nyquist = sample_rate / 2.0
    if grid[0] > 0.0 or grid[-1] < nyquist * (1 - 1e-12):
        raise RangeError(f"spectrum grid must cover [0, {nyquist:g}] Hz")
    freqs = np.minimum(np.fft.rfftfreq(n, 1.0 / sample_rate), grid[-1])
    gain = np.sqrt(quad_at(spec, theta, freqs))
    streams = list(streams)
    white = white_noise(seed, streams, n)
    shaped = np.fft.irfft(np.fft.rfft(white, axis=1) * gain, n=n, axis=1)
    return TraceBatch(sample_rate, shaped, theta, scenario, seed, 0.0, np.array(streams, dtype=np.int64))


def _band_noise(normals: NDArray, sample_rate: float, band: tuple[float, float]) -> NDArray:
    n = normals.shape[-1]
    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
    mask = (freqs >= band[0]) & (freqs <= band[1])
    return np.fft.irfft(np.fft.rfft(normals, axis=-1) * mask, n=n, axis=-1)


def drift_gains(
    budget: ImperfectionBudget,
    seed: int,
    streams: NDArray,
    acquisition: int = 0,
    sequences_per_measurement: int = 90,
) -> NDArray[np.float64]:
    """Amplitude gain per trace; constant within a measurement."""
    streams = np.asarray(streams, dtype=np.int64)
    if not budget.lo_drift_db_sigma:
        return np.ones(streams.size)
    measurements = streams // sequences_per_measurement
    gains = np.empty(streams.size)
    cache: dict[int, float] = {}
    for i, m in enumerate(measurements):
        m = int(m)
        if m not in cache:
            z = stream_rng(seed, (int(acquisition) << 32) + m, DRIFT_STREAM).standard_normal()
            cache[m] = 10.0 ** (budget.lo_drift_db_sigma * z / 20.0)
        gains[i] = cache[m]
    return gains


def apply_imperfections(
    traces: Union[HomodyneTrace, TraceBatch],
    budget: ImperfectionBudget,
    seed: int,
    *,
    acquisition: int = 0,
    sequences_per_measurement: int = 90,
    full_scale: float | None = None,
):
    """Add LO drift, LO excess leakage, electronic noise and quantization.

    Order: drift gain on the optical signal, LO classical noise through
    the finite CMRR, white electronic floor plus spike tones, then ADC
    quantization.  Noise draws use the imperfection stream of each trace
    so the same sequence sees the same detector noise in every scenario;
    the drift gain also depends on ``acquisition`` so separately recorded
    data sets drift independently.

    ``full_scale`` is the ADC half-range; by default it is
    ``budget.full_scale_sigma`` times the RMS of the input.
    """
    single = isinstance(traces, HomodyneTrace)
    batch = as_batch(traces)
    if budget.is_ideal:
        return traces
    x = batch.samples.copy()
    n = batch.n_samples
    fs = batch.sample_rate
    gains = drift_gains(budget, seed, batch.stream_ids, acquisition, sequences_per_measurement)
    x *= gains[:, None]

    need_noise = budget.cmrr_db is not None or budget.electronic_floor_db is not None or budget.spike_lines
    if need_noise:
        n_lines = len(budget.spike_lines)
        draws = np.empty((len(batch), 2 * n + n_lines))
        for row, stream in enumerate(batch.stream_ids):
            rng = stream_rng(seed, int(stream), IMPERFECTION_STREAM)
            draws[row, : 2 * n] = rng.standard_normal(2 * n)
            draws[row, 2 * n :] = rng.uniform(0.0, 2.0 * np.pi, n_lines)
        if budget.cmrr_db is not None:
            level = 10.0 ** ((budget.cmrr_db + budget.lo_classical_excess_db) / 10.0)
            leak = _band_noise(draws[:, :n], fs, budget.lo_band_hz)
            x += (gains * math.sqrt(level))[:, None] * leak
        if budget.electronic_floor_db is not None:
            x += math.sqrt(budget.additive_white_level) * draws[:, n : 2 * n]
        t = np.arange(n) / fs
        for line, (freq, power_db) in enumerate(budget.spike_lines):
            amp = budget.full_scale_sigma * 10.0 ** (power_db / 20.0)
            phase = draws[:, 2 * n + line][:, None]
            # sin(wt + phi) expanded so the tone tables are shared by all rows
            wt = 2.0 * np.pi * freq * t
            x += amp * (np.cos(phase) * np.sin(wt)[None, :] + np.sin(phase) * np.cos(wt)[None, :])

    if budget.adc_bits is not None:
        if full_scale is None:
            full_scale = budget.full_scale_sigma * float(np.sqrt(np.mean(x * x)))
        levels = 2 ** int(budget.adc_bits)
        step = 2.0 * full_scale / levels
        x = _kernels.quantize(x, step, levels)

    out = batch.with_samples(x)
    return out.trace(0) if single else out
