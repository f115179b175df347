"""
Pulsed store-and-retrieve sequences as exactly specified Gaussian processes.

For each scenario the sampled quadrature x_theta of one 11 us sequence is
a zero-mean Gaussian vector with covariance ``C = I + K``: the identity is
shot noise and ``K`` collects the excess noise carried by light.  The
excess is built from linear maps acting on the squeezed source:

* the pulse modulator multiplies the source quadrature by the amplitude
  envelope ``a(t)`` and admixes vacuum, so the input excess is A E A with
  E the Toeplitz autocovariance of S_theta(f) - 1;
* propagation through the EIT medium convolves with the real impulse
  response of T, giving H (A E A) H^T.  Passive linear optics keep the
  shot term at exactly I;
* the dark interval between t_off and t_on carries no excess;
* after t_on the control light lets the leaking input through again
  (input gated at t_on) and the retrieved mode adds (V_theta - 1) g g^T,
  with V_theta from :func:`squeezemem.medium.retrieved_state`.

Traces are generated as ``y = C^(1/2) w`` with the symmetric square root
and a white vector ``w`` that depends only on (seed, stream).  Every
scenario therefore reuses the same ``w`` for a given sequence, so
scenario-to-shot ratios share their sampling noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
from numpy.typing import NDArray

from .errors import RangeError, ScheduleError
from .medium import EitMedium, StorageChannel, retrieved_state, transfer
from .spectra import QuadSpectrum, quad_at
from .synth import (
    HomodyneTrace,
    ImperfectionBudget,
    PulseSchedule,
    Scenario,
    TraceBatch,
    apply_imperfections,
    white_noise,
)

PREROLL = 2.56e-6
_SPECTRAL_POINTS = 1 << 15


def excess_autocovariance(spec: QuadSpectrum, theta: float, sample_rate: float, n_lags: int) -> NDArray:
    """Per-sample autocovariance of the excess S(theta, f) - 1.

    The spectrum must cover [0, sample_rate/2].  Lags 0..n_lags-1.
    """
    nyquist = sample_rate / 2.0
    if spec.freq_grid[0] > 0 or spec.freq_grid[-1] < nyquist * (1 - 1e-12):
        raise RangeError(f"source spectrum must cover [0, {nyquist:g}] Hz")
    m = max(_SPECTRAL_POINTS, 4 * n_lags)
    freqs = np.minimum(np.fft.rfftfreq(m, 1.0 / sample_rate), spec.freq_grid[-1])
    excess = quad_at(spec, theta, freqs) - 1.0
    return np.fft.irfft(excess, n=m)[:n_lags]


def impulse_response(medium: EitMedium, sample_rate: float, n_taps: int, oversample: int = 32) -> NDArray:
    """Causal real impulse response of the medium, sampled at 1/sample_rate.

    Physics uses exp(-i w t) fields, so a delay appears as a positive
    phase slope of T; numpy's forward FFT has the opposite sign, hence
    the conjugate.

    T approaches 1 only as 1/delta, so cutting it off at the Nyquist
    frequency of the trace rings into negative times and loses a few
    percent of the gain once the response is made causal.  The response
    is therefore computed ``oversample`` times finer and integrated over
    sample-centred bins (the first bin holds only t >= 0).
    """
    fine_rate = sample_rate * oversample
    m = max(_SPECTRAL_POINTS, 4 * n_taps) * oversample
    freqs = np.fft.rfftfreq(m, 1.0 / fine_rate)
    response = np.conj(transfer(medium, 2.0 * np.pi * freqs))
    fine = np.fft.irfft(response, n=m)
    half = oversample // 2
    padded = np.concatenate([np.zeros(half), fine[: n_taps * oversample - half]])
    return padded.reshape(n_taps, oversample).sum(axis=1)


def _convolution_matrix(h: NDArray, n_out: int, n_pre: int) -> NDArray:
    """Rows: output samples; columns: extended input samples (pre-roll first)."""
    n_in = n_out + n_pre
    i = np.arange(n_out)[:, None] + n_pre
    j = np.arange(n_in)[None, :]
    lag = i - j
    mat = np.zeros((n_out, n_in))
    valid = (lag >= 0) & (lag < h.size)
    mat[valid] = h[lag[valid]]
    return mat


@dataclass
class SequenceModel:
    """Exact covariance of one scenario at one LO phase.

    ``source`` is the pulsed source spectrum on a grid reaching the
    Nyquist frequency; ``medium`` and ``channel`` may be ``None`` for the
    scenarios that do not use them.
    """

    scenario: Scenario
    theta: float
    schedule: PulseSchedule
    source: QuadSpectrum | None = None
    medium: EitMedium | None = None
    channel: StorageChannel | None = None
    retrieved: tuple[float, float] | None = None
    _cov: NDArray | None = field(default=None, init=False, repr=False)
    _root: NDArray | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.scenario = Scenario.parse(self.scenario)
        if self.scenario != Scenario.VACUUM and self.source is None:
            raise ScheduleError(f"{self.scenario.label} needs a source spectrum")
        if self.scenario in (Scenario.EIT_DELAY, Scenario.STORE_RETRIEVE) and self.medium is None:
            raise ScheduleError(f"{self.scenario.label} needs an EIT medium")
        if self.scenario == Scenario.STORE_RETRIEVE:
            if self.channel is None:
                raise ScheduleError("StoreRetrieve needs a storage channel")
            sched = self.schedule
            self.channel = replace(self.channel, t_off=sched.t_off, t_on=sched.t_on)
            if self.retrieved is None:
                self.retrieved = retrieved_state(self.source, self.channel)

    @property
    def n_samples(self) -> int:
        return self.schedule.n_samples

    @property
    def times(self) -> NDArray:
        return self.schedule.times

    def retrieved_variance(self) -> float:
        v_min, v_max = self.retrieved
        return v_min * math.cos(self.theta) ** 2 + v_max * math.sin(self.theta) ** 2

    def mode_vector(self) -> NDArray:
        """Retrieved mode on the sample grid with unit Euclidean norm."""
        g = self.channel.mode(self.times)
        norm = math.sqrt(float(np.sum(g * g)))
        if norm == 0:
            raise RangeError("retrieved mode does not overlap the trace")
        return g / norm

    def excess(self) -> NDArray:
        """Excess covariance K on the trace samples."""
        sched = self.schedule
        n = self.n_samples
        if self.scenario == Scenario.VACUUM:
            return np.zeros((n, n))
        fs = sched.sample_rate
        n_pre = int(round(PREROLL * fs))
        t_in = sched.t0_offset + (np.arange(n + n_pre) - n_pre) / fs
        amp = np.sqrt(sched.envelope(t_in))
        auto = excess_autocovariance(self.source, self.theta, fs, n + n_pre)
        k_in = amp[:, None] * scipy.linalg.toeplitz(auto) * amp[None, :]
        if self.scenario == Scenario.SOURCE_ONLY:
            return k_in[n_pre:, n_pre:]
        h_mat = _convolution_matrix(impulse_response(self.medium, fs, n_pre), n, n_pre)
        if self.scenario == Scenario.EIT_DELAY:
            return h_mat @ k_in @ h_mat.T

        t_out = self.times
        pre = t_out < sched.t_off
        post = t_out >= sched.t_on
        k_out = np.zeros((n, n))
        before = h_mat[pre]
        k_out[np.ix_(pre, pre)] = before @ k_in @ before.T
        gate = (t_in >= sched.t_on).astype(float)
        after = h_mat[post] * gate[None, :]
        k_out[np.ix_(post, post)] = after @ k_in @ after.T
        g = self.mode_vector()
        k_out += (self.retrieved_variance() - 1.0) * np.outer(g, g)
        return k_out

    def covariance(self) -> NDArray:
        if self._cov is None:
            cov = self.excess()
            cov[np.diag_indices_from(cov)] += 1.0
            self._cov = 0.5 * (cov + cov.T)
        return self._cov

    def root(self) -> NDArray:
        """Symmetric square root of the covariance."""
        if self._root is None:
            if self.scenario == Scenario.VACUUM:
                self._root = np.eye(self.n_samples)
            else:
                vals, vecs = scipy.linalg.eigh(self.covariance(), driver="evr")
                vals = np.clip(vals, 0.0, None)
                self._root = (vecs * np.sqrt(vals)) @ vecs.T
        return self._root

    def variance_profile(self) -> NDArray:
        return np.diag(self.covariance()).copy()

    def full_scale(self, budget: ImperfectionBudget) -> float:
        """ADC half-range: ``full_scale_sigma`` times the model RMS."""
        rms2 = float(np.mean(self.variance_profile())) + budget.additive_white_level
        return budget.full_scale_sigma * math.sqrt(rms2)

    def synthesize(
        self,
        seed: int,
        streams,
        budget: ImperfectionBudget | None = None,
        acquisition: int = 0,
    ) -> TraceBatch:
        """Traces for the given streams, imperfections applied last."""
        streams = np.asarray(list(streams), dtype=np.int64)
        sched = self.schedule
        white = white_noise(seed, streams, self.n_samples)
        samples = white if self.scenario == Scenario.VACUUM else white @ self.root()
        batch = TraceBatch(sched.sample_rate, samples, self.theta, self.scenario, seed, sched.t0_offset, streams)
        if budget is not None and not budget.is_ideal:
            batch = apply_imperfections(
                batch,
                budget,
                seed,
                acquisition=acquisition,
                sequences_per_measurement=sched.sequences_per_measurement,
                full_scale=self.full_scale(budget),
            )
        return batch


def synth_sequence(
    source: QuadSpectrum,
    medium: EitMedium,
    channel: StorageChannel,
    schedule: PulseSchedule,
    imperfections: ImperfectionBudget | None,
    theta: float,
    seed: int,
    stream: int = 0,
    scenario: Scenario = Scenario.STORE_RETRIEVE,
) -> HomodyneTrace:
    """One store-and-retrieve sequence (or another scenario) as a trace."""
    model = SequenceModel(scenario, theta, schedule, source, medium, channel)
    return model.synthesize(seed, [stream], imperfections).trace(0)
