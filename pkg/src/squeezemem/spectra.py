"""
Shot-noise-normalized quadrature spectra of single-mode Gaussian light.

A spectrum is stored as its two principal quadratures on a one-sided
sideband-frequency grid.  The LO phase convention puts the squeezed
quadrature at theta = 0 and the anti-squeezed one at theta = pi/2, so
the noise at any other phase follows from the two principal values.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import AboveThresholdError, CalibrationError, FilterError, ParameterError, RangeError

DEFAULT_KAPPA_HZ = 40e6
DEFAULT_GRID_MAX_HZ = 10e6
DEFAULT_GRID_POINTS = 2048

_SYMMETRY_RTOL = 1e-9
_PASSIVITY_ATOL = 1e-12


def db_to_linear(level_db):
    return 10.0 ** (np.asarray(level_db, dtype=float) / 10.0)


def linear_to_db(level):
    return 10.0 * np.log10(level)


def default_grid(f_max: float = DEFAULT_GRID_MAX_HZ, n: int = DEFAULT_GRID_POINTS) -> NDArray[np.float64]:
    """Linear sideband grid from 0 to ``f_max`` (Hz)."""
    return np.linspace(0.0, f_max, n)


def _check_grid(grid: ArrayLike) -> NDArray[np.float64]:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise RangeError("frequency grid must be a non-empty 1-D array")
    if grid[0] < 0:
        raise RangeError("frequency grid must be nonnegative")
    if grid.size > 1 and np.any(np.diff(grid) <= 0):
        raise RangeError("frequency grid must be strictly increasing")
    return grid


@dataclass(frozen=True, eq=False)
class QuadSpectrum:
    """Principal quadrature noise spectra S(0, f) and S(pi/2, f).

    Values are relative to shot noise (vacuum = 1).
    """

    freq_grid: NDArray[np.float64]
    s_min: NDArray[np.float64]
    s_max: NDArray[np.float64]

    def __post_init__(self):
        grid = _check_grid(self.freq_grid)
        s_min = np.array(self.s_min, dtype=float)
        s_max = np.array(self.s_max, dtype=float)
        if s_min.shape != grid.shape or s_max.shape != grid.shape:
            raise ParameterError("s_min and s_max must match the frequency grid")
        if np.any(s_min <= 0) or np.any(s_max <= 0):
            raise ParameterError("quadrature variances must be positive")
        if np.any(s_min > s_max * (1 + 1e-12)):
            raise ParameterError("s_min must not exceed s_max (squeezed quadrature is theta=0)")
        if np.any(s_min * s_max < 1 - 1e-9):
            raise ParameterError("uncertainty product s_min*s_max must be >= 1")
        for name, arr in (("freq_grid", grid), ("s_min", s_min), ("s_max", s_max)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __eq__(self, other):
        if not isinstance(other, QuadSpectrum):
            return NotImplemented
        return (
            np.array_equal(self.freq_grid, other.freq_grid)
            and np.array_equal(self.s_min, other.s_min)
            and np.array_equal(self.s_max, other.s_max)
        )

    @classmethod
    def vacuum(cls, grid: ArrayLike) -> "QuadSpectrum":
        grid = _check_grid(grid)
        ones = np.ones_like(grid)
        return cls(grid, ones, ones.copy())

    def at_theta(self, theta: float) -> NDArray[np.float64]:
        """S(theta, f) on the whole grid."""
        c2 = np.cos(theta) ** 2
        s2 = np.sin(theta) ** 2
        return self.s_min * c2 + self.s_max * s2

    def to_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["freq_hz", "s_min", "s_max"])
            for row in zip(self.freq_grid, self.s_min, self.s_max):
                writer.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "QuadSpectrum":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["freq_hz", "s_min", "s_max"]:
                raise ParameterError(f"unexpected spectrum header {header!r}")
            rows = [[float(v) for v in row] for row in reader if row]
        arr = np.array(rows, dtype=float).reshape(-1, 3)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2])


@dataclass(frozen=True)
class OpoSource:
    """Below-threshold degenerate OPO.

    pump_param is x = sqrt(P/P_th); escape_detection_eff lumps cavity
    escape efficiency and detection efficiency; kappa_hz is the cavity
    half-width at half maximum.
    """

    pump_param: float
    escape_detection_eff: float
    kappa_hz: float = DEFAULT_KAPPA_HZ

    def __post_init__(self):
        if not 0.0 <= self.pump_param:
            raise ParameterError("pump parameter must be nonnegative")
        if self.pump_param >= 1.0:
            raise AboveThresholdError(f"pump parameter x={self.pump_param} is at or above threshold")
        if not 0.0 < self.escape_detection_eff <= 1.0:
            raise ParameterError("escape/detection efficiency must lie in (0, 1]")
        if not self.kappa_hz > 0:
            raise ParameterError("cavity linewidth must be positive")


def make_opo_spectrum(src: OpoSource, grid: ArrayLike) -> QuadSpectrum:
    grid = _check_grid(grid)
    x = src.pump_param
    gain = src.escape_detection_eff * 4.0 * x
    r2 = (grid / src.kappa_hz) ** 2
    s_max = 1.0 + gain / ((1.0 - x) ** 2 + r2)
    s_min = 1.0 - gain / ((1.0 + x) ** 2 + r2)
    return QuadSpectrum(grid, s_min, s_max)


def calibrate_opo(target_max_db: float, target_min_db: float) -> tuple[float, float]:
    """Return (x, eta_opo) reproducing the zero-frequency dB levels.

    The ratio of anti-squeezing excess to squeezing deficit fixes x in
    closed form; the efficiency follows by back-substitution.
    """
    if not target_max_db > 0 > target_min_db:
        raise CalibrationError("need target_max_db > 0 > target_min_db", target="source levels")
    s_max = float(db_to_linear(target_max_db))
    s_min = float(db_to_linear(target_min_db))
    root = np.sqrt((s_max - 1.0) / (1.0 - s_min))
    x = (root - 1.0) / (root + 1.0)
    if x <= 0:
        raise CalibrationError(
            "anti-squeezing below the pure-state bound for this squeezing level",
            target="source levels",
        )
    eta = (s_max - 1.0) * (1.0 - x) ** 2 / (4.0 * x)
    if eta > 1.0 + 1e-12:
        raise CalibrationError(
            f"targets ({target_max_db} dB, {target_min_db} dB) need eta_opo={eta:.4f} > 1",
            target="source levels",
        )
    return float(x), float(min(eta, 1.0))


def apply_loss(spec: QuadSpectrum, eta: float) -> QuadSpectrum:
    """Mix each quadrature with vacuum at power transmissivity ``eta``."""
    if not 0.0 <= eta <= 1.0:
        raise ParameterError(f"transmissivity {eta} outside [0, 1]")
    return QuadSpectrum(
        spec.freq_grid,
        eta * spec.s_min + (1.0 - eta),
        eta * spec.s_max + (1.0 - eta),
    )


TransferLike = Union[Callable[[NDArray[np.float64]], NDArray[np.complex128]], ArrayLike]


def apply_filter(spec: QuadSpectrum, transfer: TransferLike) -> QuadSpectrum:
    """Pass a spectrum through a linear, conjugate-symmetric filter.

    ``transfer`` is either a callable T(delta) taking angular sideband
    frequency in rad/s, or the complex response sampled on the
    spectrum's grid.  A callable is checked for T(-delta) = conj(T(delta));
    an array is trusted except for the requirement that T(0) is real.
    The filter phase only delays the field, so each principal quadrature
    sees a plain loss of |T|^2.
    """
    grid = spec.freq_grid
    if callable(transfer):
        delta = 2.0 * np.pi * grid
        t_pos = np.asarray(transfer(delta), dtype=complex)
        t_neg = np.asarray(transfer(-delta), dtype=complex)
        scale = np.maximum(np.abs(t_pos), 1e-300)
        if np.any(np.abs(t_neg - np.conj(t_pos)) > _SYMMETRY_RTOL * scale + 1e-300):
            raise FilterError("transfer function is not conjugate-symmetric in sideband frequency")
    else:
        t_pos = np.asarray(transfer, dtype=complex)
        if t_pos.shape != grid.shape:
            raise FilterError("sampled transfer function must match the spectrum grid")
        if grid[0] == 0.0 and abs(t_pos[0].imag) > _SYMMETRY_RTOL * max(abs(t_pos[0]), 1e-300):
            raise FilterError("T(0) must be real for a conjugate-symmetric filter")
    power = np.abs(t_pos) ** 2
    if np.any(power > 1.0 + _PASSIVITY_ATOL):
        raise FilterError("|T| > 1: filter is not passive")
    power = np.minimum(power, 1.0)
    return QuadSpectrum(
        grid,
        power * spec.s_min + (1.0 - power),
        power * spec.s_max + (1.0 - power),
    )


def quad_at(spec: QuadSpectrum, theta: float, freq: ArrayLike):
    """S(theta, f), linearly interpolated between grid points."""
    freq = np.asarray(freq, dtype=float)
    grid = spec.freq_grid
    if np.any(freq < grid[0]) or np.any(freq > grid[-1]):
        raise RangeError(f"frequency outside grid [{grid[0]}, {grid[-1]}] Hz")
    s_min = np.interp(freq, grid, spec.s_min)
    s_max = np.interp(freq, grid, spec.s_max)
    value = s_min * np.cos(theta) ** 2 + s_max * np.sin(theta) ** 2
    return float(value) if value.ndim == 0 else value


def photon_flux(s_theta, s_theta_perp):
    """Mean photon number per mode from two orthogonal quadrature variances.

    Proportional to S(theta) + S(theta + pi/2) - 2 for shot-normalized
    values; vacuum gives zero.
    """
    return np.asarray(s_theta, dtype=float) + np.asarray(s_theta_perp, dtype=float) - 2.0


def band_flux(spec: QuadSpectrum, band: tuple[float, float]) -> float:
    """Photon flux averaged over grid points inside ``band`` (Hz)."""
    lo, hi = band
    mask = (spec.freq_grid >= lo) & (spec.freq_grid <= hi)
    if not np.any(mask):
        raise RangeError(f"band {band} contains no grid points")
    return float(np.mean(photon_flux(spec.s_min[mask], spec.s_max[mask])))


def lorentzian_average(spec: QuadSpectrum, hwhm_hz: float) -> tuple[float, float]:
    """Principal quadratures averaged with a Lorentzian weight centred at f=0.

    The weight is normalized over the grid (trapezoid rule), so grid
    truncation renormalizes rather than biases toward shot noise.
    """
    if hwhm_hz <= 0:
        raise ParameterError("Lorentzian width must be positive")
    f = spec.freq_grid
    weight = 1.0 / (1.0 + (f / hwhm_hz) ** 2)
    norm = np.trapezoid(weight, f)
    if norm <= 0:
        raise RangeError("grid too short to average over")
    return (
        float(np.trapezoid(weight * spec.s_min, f) / norm),
        float(np.trapezoid(weight * spec.s_max, f) / norm),
    )
