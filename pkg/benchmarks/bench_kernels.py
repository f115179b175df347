"""
Compare the numba and pure-numpy hot kernels.

Usage::

    python benchmarks/bench_kernels.py [--traces 1000] [--repeat 5]

Each kernel is run on a (traces x 2200) block, the shape of one chunk of
pulsed sequences.  The numba timings exclude the first (compiling) call.
Results are checked for agreement before timing.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from squeezemem import _kernels


def cases(x: np.ndarray):
    weights = np.exp(-np.arange(151) / 50.0) * 5e-9
    return {
        "band_power": (
            lambda: _kernels.band_power_numpy(x, 128, 17, 1),
            lambda: _kernels.band_power_numba(x, 128, 17, 1),
        ),
        "quantize": (
            lambda: _kernels.quantize_numpy(x, 0.04, 256),
            lambda: _kernels.quantize_numba(x, 0.04, 256),
        ),
        "project": (
            lambda: _kernels.project_numpy(x, 1408, weights),
            lambda: _kernels.project_numba(x, 1408, weights),
        ),
    }


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[1])
    parser.add_argument("--traces", type=int, default=1000)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)

    x = np.random.default_rng(0).standard_normal((args.traces, 2200))
    print(f"numba available: {_kernels.HAVE_NUMBA}; dispatch uses numba: {_kernels.USE_NUMBA}")
    print(f"{'kernel':<12} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    for name, (numpy_fn, numba_fn) in cases(x).items():
        ref = numpy_fn()
        if _kernels.HAVE_NUMBA:
            if not np.allclose(ref, numba_fn(), rtol=1e-10, atol=1e-12):
                raise SystemExit(f"{name}: numba and numpy results disagree")
            t_numba = min(timeit.repeat(numba_fn, number=1, repeat=args.repeat)) * 1e3
        else:
            t_numba = float("nan")
        t_numpy = min(timeit.repeat(numpy_fn, number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<12} {t_numpy:>10.2f} {t_numba:>10.2f} {t_numpy / t_numba:>7.1f}x")


if __name__ == "__main__":
    main()
