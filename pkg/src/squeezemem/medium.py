"""
Cold-atom Lambda-system EIT medium and phenomenological storage channel.

The medium acts on the probe as a linear transfer function of the
two-photon detuning.  Storage is modelled separately as a retrieval
efficiency that decays with storage time plus a fixed exponential
output mode.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import CalibrationError, ParameterError, RangeError
from .spectra import QuadSpectrum, apply_filter, lorentzian_average

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
# Rb87 D1 excited-state natural linewidth (external atomic constant).
RB87_D1_GAMMA = TWO_PI * 5.75e6
HALVING_TIME = 2e-6
DEFAULT_TAU_MEM = HALVING_TIME / math.log(2.0)
DEFAULT_TAU_RET = 250e-9


@dataclass(frozen=True)
class EitMedium:
    """Lambda-system parameters; all rates in rad/s."""

    d: float
    gamma: float = RB87_D1_GAMMA
    omega_c: float = 0.0
    gamma12: float = 0.0

    def __post_init__(self):
        if not self.d > 0:
            raise ParameterError("optical depth must be positive")
        if not self.gamma > 0:
            raise ParameterError("excited-state linewidth must be positive")
        if self.omega_c < 0 or self.gamma12 < 0:
            raise ParameterError("control Rabi frequency and ground decoherence must be >= 0")


def _susceptibility(medium: EitMedium, delta):
    half_gamma = medium.gamma / 2.0
    if medium.omega_c == 0.0:
        # two-level limit; the Lambda form below is 0/0 at gamma12 = delta = 0
        return half_gamma / (half_gamma - 1j * np.asarray(delta))
    ground = medium.gamma12 - 1j * delta
    return half_gamma * ground / ((half_gamma - 1j * delta) * ground + medium.omega_c**2 / 4.0)


def transfer(medium: EitMedium, delta: ArrayLike):
    """Complex field transmission T(delta), delta in rad/s.

    T = exp(-(d/2) * L) with L the normalized Lambda-system linear
    response; |T|^2 = exp(-d) on resonance without control light.
    """
    delta = np.asarray(delta, dtype=float)
    value = np.exp(-(medium.d / 2.0) * _susceptibility(medium, delta))
    return complex(value) if value.ndim == 0 else value


def group_delay(medium: EitMedium) -> float:
    """Slope of arg T at two-photon resonance (seconds)."""
    if medium.omega_c <= 0:
        raise ParameterError("group delay is undefined without control light")
    step = medium.omega_c / 1000.0
    phase_hi = np.angle(transfer(medium, step))
    phase_lo = np.angle(transfer(medium, -step))
    return float((phase_hi - phase_lo) / (2.0 * step))


def transmitted_spectrum(medium: EitMedium, source: QuadSpectrum) -> QuadSpectrum:
    return apply_filter(source, lambda delta: transfer(medium, delta))


def _half_max_crossing(freq, excess):
    half = excess[0] / 2.0
    below = np.nonzero(excess < half)[0]
    if half <= 0 or below.size == 0:
        return None
    hi_idx = below[0]
    lo, hi = freq[hi_idx - 1], freq[hi_idx]
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.interp(mid, freq, excess) >= half:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-9 * max(hi, 1.0):
            break
    return 0.5 * (lo + hi)


def eit_fwhm(medium: EitMedium, source: QuadSpectrum) -> float:
    """Full width at half maximum (Hz) of the transmitted anti-squeezing excess."""
    out = transmitted_spectrum(medium, source)
    excess = out.s_max - 1.0
    if excess.size < 2 or np.argmax(excess) != 0:
        raise RangeError("transmitted excess must peak at the first grid point (f=0)")
    crossing = _half_max_crossing(out.freq_grid, excess)
    if crossing is None:
        raise RangeError("window too wide: no half-maximum crossing inside the grid")
    return 2.0 * crossing


def _omega_for_delay(d, gamma, gamma12, delay_target):
    """Control Rabi frequency giving ``delay_target`` at fixed gamma12."""

    def delay_at(omega):
        return group_delay(EitMedium(d, gamma, omega, gamma12))

    # With gamma12 > 0 the delay peaks at an intermediate control strength;
    # take the crossing on the strong-control (transparent) branch.
    grid = np.geomspace(1e-3 * gamma, 1e3 * gamma, 241)
    delays = np.array([delay_at(om) for om in grid])
    crossings = np.nonzero((delays[:-1] >= delay_target) & (delays[1:] < delay_target))[0]
    if crossings.size == 0:
        return None
    idx = crossings[-1]
    lo, hi = grid[idx], grid[idx + 1]
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if delay_at(mid) > delay_target:
            lo = mid
        else:
            hi = mid
        if hi / lo - 1.0 < 1e-13:
            break
    return math.sqrt(lo * hi)


def calibrate_medium(
    d: float,
    gamma: float = RB87_D1_GAMMA,
    delay_target: float = 135e-9,
    fwhm_target: float = 2.7e6,
    source: QuadSpectrum | None = None,
    strict: bool = True,
    gamma12_max: float | None = None,
) -> EitMedium:
    """Fit (omega_c, gamma12) to a group delay and a transmitted-window FWHM.

    Nested bisection: the inner solve finds the control Rabi frequency
    matching the delay for a trial gamma12; the outer solve adjusts
    gamma12 until the FWHM of the transmitted anti-squeezing excess of
    ``source`` matches.  Ground-state decoherence only narrows the window
    at fixed delay, so the widest reachable window is at gamma12 = 0.

    With ``strict=False`` an unreachable FWHM target falls back to the
    medium that meets the delay exactly and comes closest in width; a
    warning reports the residual.
    """
    if delay_target <= 0:
        raise CalibrationError("EIT group delay is strictly positive", target="delay")
    if source is None:
        raise ParameterError("a source spectrum is required to evaluate the window width")
    if gamma12_max is None:
        gamma12_max = gamma

    def solve(gamma12):
        omega = _omega_for_delay(d, gamma, gamma12, delay_target)
        if omega is None:
            return None, None
        medium = EitMedium(d, gamma, omega, gamma12)
        try:
            width = eit_fwhm(medium, source)
        except RangeError:
            width = math.inf
        return medium, width

    widest, width0 = solve(0.0)
    if widest is None:
        raise CalibrationError(f"no control strength gives a {delay_target:.3g} s delay", target="delay")
    if width0 < fwhm_target * (1.0 - 1e-6):
        message = (
            f"FWHM target {fwhm_target / 1e6:.3f} MHz unreachable at d={d:g}: "
            f"widest window at {delay_target * 1e9:.1f} ns delay is {width0 / 1e6:.3f} MHz"
        )
        if strict:
            raise CalibrationError(message, target="fwhm")
        logger.warning("%s; using gamma12=0", message)
        return widest

    # Bracket by doubling.  Past some gamma12 the delay target is no longer
    # reachable or the window stops peaking at f=0; bisect toward that edge
    # before giving up.
    lo, hi = 0.0, 1e-6 * gamma
    while True:
        narrow, width_hi = solve(hi)
        if narrow is None or math.isinf(width_hi):
            edge_lo, edge_hi = lo, hi
            for _ in range(60):
                mid = 0.5 * (edge_lo + edge_hi)
                trial, trial_width = solve(mid)
                if trial is None or math.isinf(trial_width):
                    edge_hi = mid
                    continue
                edge_lo = mid
                if trial_width <= fwhm_target:
                    break
            hi = edge_lo
            narrow, width_hi = solve(hi)
        if narrow is not None and width_hi <= fwhm_target:
            break
        if narrow is None or math.isinf(width_hi) or hi >= gamma12_max or hi <= lo:
            message = f"FWHM target {fwhm_target / 1e6:.3f} MHz not bracketed for gamma12 <= {gamma12_max:.3g} rad/s"
            if strict:
                raise CalibrationError(message, target="fwhm")
            logger.warning(message)
            return widest
        lo, hi = hi, 2.0 * hi
    best = narrow
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        medium, width = solve(mid)
        best = medium
        if width > fwhm_target:
            lo = mid
        else:
            hi = mid
        if abs(width - fwhm_target) < 1e-6 * fwhm_target or hi - lo < 1e-12 * gamma:
            break
    return best


@dataclass(frozen=True)
class StorageChannel:
    """Retrieval efficiency, memory decay and retrieved temporal mode."""

    eta0: float
    tau_mem: float = DEFAULT_TAU_MEM
    tau_ret: float = DEFAULT_TAU_RET
    t_off: float = 0.0
    t_on: float = 3e-6

    def __post_init__(self):
        if not 0.0 <= self.eta0 <= 1.0:
            raise ParameterError("eta0 must lie in [0, 1]")
        if not (self.tau_mem > 0 and self.tau_ret > 0):
            raise ParameterError("time constants must be positive")
        if not self.t_on > self.t_off:
            raise ParameterError("t_on must be later than t_off")

    @property
    def storage_time(self) -> float:
        return self.t_on - self.t_off

    def efficiency(self, t_s: float | None = None) -> float:
        """eta(t_s) = eta0 * exp(-t_s / tau_mem)."""
        if t_s is None:
            t_s = self.storage_time
        if t_s < 0:
            raise ParameterError("storage time must be nonnegative")
        return self.eta0 * math.exp(-t_s / self.tau_mem)

    def mode(self, t: ArrayLike) -> NDArray[np.float64]:
        """Analytic retrieved mode sqrt(2/tau) exp(-(t - t_on)/tau), zero before t_on."""
        t = np.asarray(t, dtype=float)
        dt = t - self.t_on
        out = np.zeros_like(t)
        on = dt >= 0
        out[on] = math.sqrt(2.0 / self.tau_ret) * np.exp(-dt[on] / self.tau_ret)
        return out

    def mode_samples(self, t: ArrayLike) -> NDArray[np.float64]:
        """Mode sampled on ``t`` and renormalized so the trapezoid integral of g^2 is 1."""
        t = np.asarray(t, dtype=float)
        g = self.mode(t)
        norm = np.trapezoid(g**2, t)
        if norm <= 0:
            raise RangeError("sampling grid does not overlap the retrieved mode")
        return g / math.sqrt(norm)

    def with_storage_time(self, t_s: float) -> "StorageChannel":
        return replace(self, t_on=self.t_off + t_s)


def storage_channel(
    medium: EitMedium,
    t_off: float = 0.0,
    t_on: float = 3e-6,
    flux_ratio_target: float = 0.20,
    tau_mem: float = DEFAULT_TAU_MEM,
    tau_ret: float = DEFAULT_TAU_RET,
) -> StorageChannel:
    """Calibrate eta0 from the retrieved-to-delayed peak flux ratio.

    Both fluxes are compared per mode at the transparency centre, where
    the delayed pulse carries |T(0)|^2 of the input excess; the retrieved
    mode carries eta(t_s) of it.  Hence eta(t_s) = ratio * |T(0)|^2.
    """
    if not 0.0 < flux_ratio_target <= 1.0:
        raise ParameterError("flux ratio target must lie in (0, 1]")
    t_s = t_on - t_off
    if t_s <= 0:
        raise ParameterError("t_on must be later than t_off")
    center = abs(transfer(medium, 0.0)) ** 2
    eta_ts = flux_ratio_target * center
    eta0 = eta_ts * math.exp(t_s / tau_mem)
    if eta0 > 1.0:
        raise CalibrationError(
            f"flux ratio {flux_ratio_target} after {t_s * 1e6:.2f} us needs eta0={eta0:.3f} > 1",
            target="flux_ratio",
        )
    return StorageChannel(eta0, tau_mem, tau_ret, t_off, t_on)


def mode_hwhm(tau: float) -> float:
    """Half width (Hz) of the Lorentzian power spectrum of exp(-t/tau)."""
    return 1.0 / (TWO_PI * tau)


def retrieved_state(
    source: QuadSpectrum,
    channel: StorageChannel,
    t_s: float | None = None,
) -> tuple[float, float]:
    """Single-mode variances (V_min, V_max) of the retrieved light.

    The source is averaged over the retrieval mode's Lorentzian spectral
    weight and then attenuated by eta(t_s).
    """
    eta = channel.efficiency(t_s)
    s_min, s_max = lorentzian_average(source, mode_hwhm(channel.tau_ret))
    return 1.0 + eta * (s_min - 1.0), 1.0 + eta * (s_max - 1.0)
