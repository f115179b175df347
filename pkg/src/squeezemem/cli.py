"""Command-line entry point: ``squeezemem <subcommand> [options]``."""

from __future__ import annotations

import argparse
import logging
import math
import sys

from .config import ExperimentConfig, load_config
from .errors import CalibrationError, ConfigError, FormatError, SqueezeMemError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CALIBRATION = 3
EXIT_IO = 4


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH", help="flat section.key = value config file")
    parser.add_argument("--seed", type=int, help="root seed (overrides run.seed)")
    parser.add_argument("--out", metavar="DIR", help="output directory (overrides run.out)")
    parser.add_argument("--scale", choices=("desk", "paper"), help="desk: 1000 measurements, paper: 10^4")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="squeezemem", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="print calibrated parameters with targets and residuals")
    _common(p)
    p = sub.add_parser("spectrum", help="CW noise spectra of source and EIT-transmitted light")
    _common(p)
    p = sub.add_parser("timeline", help="pulsed original / delayed / store-retrieve timelines")
    _common(p)
    p.add_argument("--save-traces", action="store_true", help="also write every synthesized trace as HODT")
    p = sub.add_parser("analyze", help="run the estimators on HODT files or re-check CSV tables")
    _common(p)
    p.add_argument("inputs", nargs="+", metavar="FILE")
    p = sub.add_parser("selftest", help="run the built-in invariant checks")
    _common(p)
    return parser


def load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.scale:
        cfg = cfg.with_scale(args.scale)
    if args.seed is not None:
        cfg = cfg.update("run.seed", args.seed)
    if args.out:
        cfg = cfg.update("run.out", args.out)
    return cfg


def _print_calibration(cal) -> None:
    d = cal.as_dict()
    print(f"source   x = {d['source_x']:.6f}   eta_opo = {d['source_eta_opo']:.6f}")
    print(f"pulsed   x = {d['pulsed_x']:.6f}   eta_opo = {d['pulsed_eta_opo']:.6f}")
    print(f"medium   d = {d['d']:g}   Omega_c = 2pi x {d['omega_c_rad_s'] / (2 * math.pi) / 1e6:.4f} MHz"
          f"   gamma12 = 2pi x {d['gamma12_rad_s'] / (2 * math.pi) / 1e3:.3f} kHz")
    print(f"channel  eta0 = {d['eta0']:.6f}   eta(t_on) = {d['eta_at_t_on']:.6f}")
    for name, entry in d["residuals"].items():
        print(f"  {name:<14} target {entry['target']:<12.6g} value {entry['value']:<14.8g} residual {entry['residual']:.3g}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    from . import experiment

    try:
        cfg = load(args)
        if args.command == "calibrate":
            _print_calibration(experiment.calibrate_all(cfg))
        elif args.command == "spectrum":
            summary = experiment.run_spectrum(cfg)
            print(f"transmitted FWHM {summary['fwhm_hz'] / 1e6:.3f} MHz; outputs in {cfg.run.out}")
        elif args.command == "timeline":
            summary = experiment.run_timeline(cfg, save_traces=args.save_traces)
            m = summary["metrics"]
            print(f"lag {m['lag_s'] * 1e9:.1f} ns; retrieved/delayed flux {m['retrieved_over_delayed']:.3f};"
                  f" outputs in {cfg.run.out}")
        elif args.command == "analyze":
            experiment.analyze(args.inputs, cfg)
            print(f"outputs in {cfg.run.out}")
        elif args.command == "selftest":
            from .selftest import run_selftest

            return EXIT_OK if run_selftest() else 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CalibrationError as exc:
        target = f" [{exc.target}]" if exc.target else ""
        print(f"calibration failed{target}: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    except (FormatError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SqueezeMemError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
