"""
Hot loops used by synthesis and analysis.

Each kernel has a numba version and a pure-numpy version with identical
semantics.  Setting the environment variable ``SQUEEZEMEM_NO_NUMBA=1``
(or running without numba installed) selects the numpy path.  Both
versions are always importable under explicit names so tests and the
benchmark can compare them directly.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("SQUEEZEMEM_NO_NUMBA", "").strip() not in ("1", "true", "yes")


def _optional_njit(func):
    if HAVE_NUMBA:
        return njit(cache=False, fastmath=False)(func)
    return func


# ---------------------------------------------------------------------------
# Single-bin periodogram over contiguous windows


def band_power_numpy(x, win_len, n_windows, k):
    """|X_k|^2 / N of each mean-subtracted rectangular window.

    ``x`` has shape (n_traces, n_samples); returns (n_traces, n_windows).
    """
    x = np.asarray(x, dtype=float)
    seg = x[:, : n_windows * win_len].reshape(x.shape[0], n_windows, win_len)
    seg = seg - seg.mean(axis=2, keepdims=True)
    phase = 2.0 * np.pi * k * np.arange(win_len) / win_len
    re = seg @ np.cos(phase)
    im = seg @ np.sin(phase)
    return (re * re + im * im) / win_len


def _band_power_loop(x, win_len, n_windows, k):
    n_traces = x.shape[0]
    out = np.empty((n_traces, n_windows))
    cos_t = np.empty(win_len)
    sin_t = np.empty(win_len)
    for j in range(win_len):
        phase = 2.0 * np.pi * k * j / win_len
        cos_t[j] = np.cos(phase)
        sin_t[j] = np.sin(phase)
    for i in range(n_traces):
        for w in range(n_windows):
            start = w * win_len
            mean = 0.0
            for j in range(win_len):
                mean += x[i, start + j]
            mean /= win_len
            re = 0.0
            im = 0.0
            for j in range(win_len):
                v = x[i, start + j] - mean
                re += v * cos_t[j]
                im += v * sin_t[j]
            out[i, w] = (re * re + im * im) / win_len
    return out


band_power_numba = _optional_njit(_band_power_loop)


def band_power(x, win_len, n_windows, k):
    x = np.ascontiguousarray(x, dtype=float)
    if USE_NUMBA:
        return band_power_numba(x, int(win_len), int(n_windows), int(k))
    return band_power_numpy(x, win_len, n_windows, k)


# ---------------------------------------------------------------------------
# Mid-rise uniform quantizer


def quantize_numpy(x, step, n_levels):
    """Mid-rise quantizer with ``n_levels`` codes, saturating at full scale."""
    half = n_levels // 2
    code = np.floor(np.asarray(x, dtype=float) / step)
    code = np.clip(code, -half, half - 1)
    return (code + 0.5) * step


def _quantize_loop(x, step, n_levels):
    half = n_levels // 2
    out = np.empty_like(x)
    flat_in = x.ravel()
    flat_out = out.ravel()
    for i in range(flat_in.size):
        code = np.floor(flat_in[i] / step)
        if code < -half:
            code = -half
        elif code > half - 1:
            code = half - 1
        flat_out[i] = (code + 0.5) * step
    return out


quantize_numba = _optional_njit(_quantize_loop)


def quantize(x, step, n_levels):
    x = np.ascontiguousarray(x, dtype=float)
    if USE_NUMBA:
        return quantize_numba(x, float(step), int(n_levels))
    return quantize_numpy(x, step, n_levels)


# ---------------------------------------------------------------------------
# Weighted projection of a segment onto a mode


def project_numpy(x, start, weights):
    """sum_j weights[j] * x[:, start + j] for each row."""
    x = np.asarray(x, dtype=float)
    return x[:, start : start + weights.size] @ weights


def _project_loop(x, start, weights):
    n_traces = x.shape[0]
    out = np.empty(n_traces)
    for i in range(n_traces):
        acc = 0.0
        for j in range(weights.size):
            acc += weights[j] * x[i, start + j]
        out[i] = acc
    return out


project_numba = _optional_njit(_project_loop)


def project(x, start, weights):
    """Always the numpy path: the projection is one BLAS matrix-vector
    product, which beats the compiled loop (see benchmarks/bench_kernels.py).
    """
    return project_numpy(x, start, np.asarray(weights, dtype=float))
