"""
Scenario orchestration: calibration, synthesis, analysis and outputs.

Every run writes its CSV tables, a ``summary.json`` and a
``manifest.json`` listing the config digest, root seed, library versions
and the sha256 of each emitted file.  Nothing time-dependent is written,
so the same config and seed reproduce every byte.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import platform
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

import numpy as np

from . import __version__
from .analysis import (
    ModeFunction,
    NoiseEstimate,
    averaged_periodogram,
    band_bins,
    flux_timeline,
    lag_between,
    method1_from_powers,
    method1_powers,
    method2_from_projections,
    method2_projections,
    window_centers,
    window_geometry,
)
from .config import ExperimentConfig, serialize_config
from .errors import CalibrationError, ConfigError, FormatError, InputError, RangeError
from .medium import (
    EitMedium,
    StorageChannel,
    calibrate_medium,
    eit_fwhm,
    group_delay,
    storage_channel,
    transmitted_spectrum,
)
from .sequence import SequenceModel
from .spectra import (
    OpoSource,
    QuadSpectrum,
    calibrate_opo,
    default_grid,
    linear_to_db,
    make_opo_spectrum,
)
from .synth import (
    ImperfectionBudget,
    Scenario,
    TraceBatch,
    apply_imperfections,
    as_batch,
    synth_stationary_batch,
)
from .traceio import (
    SPECTRUM_HEADER,
    TIMELINE_HEADER,
    encode_trace,
    flux_from_db,
    read_table,
    read_traces,
    sniff_kind,
    write_table,
)

logger = logging.getLogger(__name__)

NYQUIST_GRID_STEP_HZ = 5e3


@dataclass(frozen=True)
class Calibration:
    """Calibrated model objects plus the residuals of each target."""

    cw_source: OpoSource
    pulsed_source: OpoSource
    medium: EitMedium
    channel: StorageChannel
    residuals: dict = field(default_factory=dict)

    def cw_spectrum(self, grid=None) -> QuadSpectrum:
        return make_opo_spectrum(self.cw_source, default_grid() if grid is None else grid)

    def pulsed_spectrum(self, sample_rate: float) -> QuadSpectrum:
        """Pulsed-run source on a grid reaching the Nyquist frequency."""
        nyquist = sample_rate / 2.0
        n = int(round(nyquist / NYQUIST_GRID_STEP_HZ)) + 1
        return make_opo_spectrum(self.pulsed_source, np.linspace(0.0, nyquist, n))

    def as_dict(self) -> dict:
        return {
            "source_x": self.cw_source.pump_param,
            "source_eta_opo": self.cw_source.escape_detection_eff,
            "pulsed_x": self.pulsed_source.pump_param,
            "pulsed_eta_opo": self.pulsed_source.escape_detection_eff,
            "kappa_hz": self.cw_source.kappa_hz,
            "d": self.medium.d,
            "gamma_rad_s": self.medium.gamma,
            "omega_c_rad_s": self.medium.omega_c,
            "gamma12_rad_s": self.medium.gamma12,
            "eta0": self.channel.eta0,
            "eta_at_t_on": self.channel.efficiency(),
            "tau_mem_s": self.channel.tau_mem,
            "residuals": self.residuals,
        }


def calibrate_all(cfg: ExperimentConfig) -> Calibration:
    """Source, medium and channel calibration; failures name their target."""
    src_cfg = cfg.source
    if src_cfg.pump_param is None:
        x, eta = calibrate_opo(src_cfg.max_db, src_cfg.min_db)
    else:
        x, eta = src_cfg.pump_param, src_cfg.escape_eff
    cw = OpoSource(x, eta, src_cfg.kappa_hz)
    xp, etap = calibrate_opo(src_cfg.pulsed_max_db, src_cfg.pulsed_min_db)
    pulsed = OpoSource(xp, etap, src_cfg.kappa_hz)
    cw_spec = make_opo_spectrum(cw, default_grid())

    med = cfg.medium
    if med.omega_c is None:
        medium = calibrate_medium(
            med.d, med.gamma, med.delay_target, med.fwhm_target, source=cw_spec, strict=med.strict
        )
    else:
        medium = EitMedium(med.d, med.gamma, med.omega_c, med.gamma12)

    ch = cfg.channel
    if ch.eta0 is None:
        channel = storage_channel(medium, ch.t_off, ch.t_on, ch.flux_ratio, ch.tau_mem, ch.tau_ret)
    else:
        channel = StorageChannel(ch.eta0, ch.tau_mem, ch.tau_ret, ch.t_off, ch.t_on)

    delay = group_delay(medium)
    try:
        width = eit_fwhm(medium, cw_spec)
    except RangeError as exc:  # window wider than the grid, reported as a residual
        logger.warning("FWHM not measurable: %s", exc)
        width = float("nan")
    s0 = cw_spec
    residuals = {
        "source_max_db": {"target": src_cfg.max_db, "value": float(linear_to_db(s0.s_max[0]))},
        "source_min_db": {"target": src_cfg.min_db, "value": float(linear_to_db(s0.s_min[0]))},
        "delay_s": {"target": med.delay_target, "value": delay},
        "fwhm_hz": {"target": med.fwhm_target, "value": width},
    }
    for entry in residuals.values():
        entry["residual"] = entry["value"] - entry["target"]
    return Calibration(cw, pulsed, medium, channel, residuals)


# ---------------------------------------------------------------------------
# Output bookkeeping


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def versions() -> dict:
    import numba
    import scipy

    return {
        "squeezemem": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
        "python": platform.python_version(),
    }


def write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True, allow_nan=True) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, NoiseEstimate):
        return {
            "value_db": obj.value_db,
            "stat_err_db": obj.stat_err_db,
            "lo_drift_err_db": obj.lo_drift_err_db,
            "n_trials": obj.n_trials,
            "band_or_mode": obj.band_or_mode,
        }
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    return obj


def write_manifest(out: Path, cfg: ExperimentConfig, command: str, files: Iterable[Path]) -> Path:
    entries = {p.name: _sha256(p) for p in sorted(files, key=lambda p: p.name)}
    manifest = {
        "command": command,
        "config_sha256": cfg.digest(),
        "seed": cfg.run.seed,
        "versions": versions(),
        "files": entries,
    }
    path = out / "manifest.json"
    write_json(path, manifest)
    return path


def _prepare_out(out) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# Spectrum scenario (continuous-wave, stationary traces)


def _chunks(n: int, chunk: int):
    for start in range(0, n, chunk):
        yield range(start, min(n, start + chunk))


def stationary_band_levels(
    spec: QuadSpectrum,
    cfg: ExperimentConfig,
    thetas,
    n_trials: int | None = None,
    budget: ImperfectionBudget | None = None,
    acquisition_base: int = 100,
):
    """Average periodograms and Method I powers of stationary traces.

    Returns ``(freqs, per_theta_power, shot_power, m1_levels)`` where
    ``m1_levels`` maps each theta to its Method I NoiseEstimate averaged
    over all windows.  Shot traces are synthesized from the same
    streams as the signal traces.
    """
    an = cfg.analysis
    fs = an.spectrum_sample_rate
    n_trials = an.spectrum_trials if n_trials is None else n_trials
    budget = cfg.budget() if budget is None else budget
    grid_max = fs / 2.0
    if spec.freq_grid[-1] < grid_max:
        raise InputError("spectrum grid does not reach the Nyquist frequency")
    vacuum = QuadSpectrum.vacuum(spec.freq_grid)
    band = (an.band_lo_hz, an.band_hi_hz)
    seed = cfg.run.seed
    per_theta = {}
    m1 = {}
    shot_m1 = []
    signal_m1 = {theta: [] for theta in thetas}
    psd_acc = {theta: [] for theta in thetas}
    shot_acc = []
    for streams in _chunks(n_trials, cfg.run.chunk):
        shot = synth_stationary_batch(vacuum, 0.0, fs, an.spectrum_duration, seed, streams, Scenario.VACUUM)
        shot = _imperfect(shot, budget, seed, acquisition_base, 1.0, cfg)
        shot_acc.append(averaged_periodogram(shot, an.spectrum_segment)[1] * len(streams))
        shot_m1.append(method1_powers(shot, an.window, band).reshape(-1, 1))
        for i, theta in enumerate(thetas):
            batch = synth_stationary_batch(spec, theta, fs, an.spectrum_duration, seed, streams)
            mean_s = float(np.mean(spec.at_theta(theta)))
            batch = _imperfect(batch, budget, seed, acquisition_base + 1 + i, mean_s, cfg)
            psd_acc[theta].append(averaged_periodogram(batch, an.spectrum_segment)[1] * len(streams))
            signal_m1[theta].append(method1_powers(batch, an.window, band).reshape(-1, 1))
    freqs = np.fft.rfftfreq(an.spectrum_segment, 1.0 / fs)
    shot_psd = np.sum(shot_acc, axis=0) / n_trials
    shot_pow = np.concatenate(shot_m1)
    for theta in thetas:
        per_theta[theta] = np.sum(psd_acc[theta], axis=0) / n_trials
        sig = np.concatenate(signal_m1[theta])
        est = method1_from_powers(sig, shot_pow, 1, cfg.imperfections.lo_drift_db_sigma, ["all windows"])[0]
        m1[theta] = est
    return freqs, per_theta, shot_psd, m1


def _imperfect(batch: TraceBatch, budget, seed, acquisition, mean_variance, cfg):
    if budget.is_ideal:
        return batch
    full_scale = budget.full_scale_sigma * math.sqrt(mean_variance + budget.additive_white_level)
    return apply_imperfections(
        batch,
        budget,
        seed,
        acquisition=acquisition,
        sequences_per_measurement=cfg.schedule.sequences_per_measurement,
        full_scale=full_scale,
    )


def run_spectrum(cfg: ExperimentConfig, out=None) -> dict:
    """Source and EIT-transmitted noise spectra versus shot noise."""
    out = _prepare_out(out or cfg.run.out)
    cal = calibrate_all(cfg)
    fs = cfg.analysis.spectrum_sample_rate
    grid = np.linspace(0.0, fs / 2.0, int(round(fs / 2.0 / NYQUIST_GRID_STEP_HZ)) + 1)
    source = cal.cw_spectrum(grid)
    transmitted = transmitted_spectrum(cal.medium, source)
    thetas = (0.0, math.pi / 2)
    files = []
    summary = {"calibration": cal.as_dict(), "fwhm_hz": cal.residuals["fwhm_hz"]["value"]}
    for name, spec, base in (("source", source, 100), ("eit", transmitted, 200)):
        freqs, per_theta, shot, m1 = stationary_band_levels(spec, cfg, thetas, acquisition_base=base)
        rows = []
        for k in range(1, freqs.size):
            rows.append(
                (
                    freqs[k],
                    linear_to_db(per_theta[thetas[0]][k] / shot[k]),
                    linear_to_db(per_theta[thetas[1]][k] / shot[k]),
                    linear_to_db(shot[k]),
                )
            )
        path = out / f"spectrum_{name}.csv"
        write_table(path, SPECTRUM_HEADER, rows)
        files.append(path)
        summary[f"{name}_method1"] = {"s_min": m1[thetas[0]], "s_max": m1[thetas[1]]}
    summary_path = out / "summary.json"
    write_json(summary_path, summary)
    files.append(summary_path)
    config_path = out / "config.txt"
    config_path.write_text(serialize_config(cfg))
    files.append(config_path)
    write_manifest(out, cfg, "spectrum", files)
    return summary


# ---------------------------------------------------------------------------
# Timeline scenario (pulsed sequences)


TIMELINE_SCENARIOS = (
    ("original", Scenario.SOURCE_ONLY),
    ("delayed", Scenario.EIT_DELAY),
    ("retrieve", Scenario.STORE_RETRIEVE),
)


def acquisition_id(scenario: Scenario, theta_index: int) -> int:
    """Drift stream label of one recorded data set."""
    return 1 + 16 * int(scenario) + theta_index


@dataclass
class Acquisition:
    """Accumulated Method I powers and Method II projections of one data set."""

    powers: list = field(default_factory=list)
    projections: list = field(default_factory=list)

    def add(self, batch: TraceBatch, window, band, mode: ModeFunction | None):
        self.powers.append(method1_powers(batch, window, band))
        if mode is not None:
            self.projections.append(method2_projections(batch, mode))

    @property
    def power_matrix(self):
        return np.concatenate(self.powers)

    @property
    def q(self):
        return np.concatenate(self.projections)


def build_models(cfg: ExperimentConfig, cal: Calibration, schedule=None, thetas=None, scenarios=None):
    schedule = cfg.pulse_schedule() if schedule is None else schedule
    thetas = cfg.run.thetas if thetas is None else thetas
    scenarios = [s for _, s in TIMELINE_SCENARIOS] if scenarios is None else scenarios
    source = cal.pulsed_spectrum(schedule.sample_rate)
    channel = replace(cal.channel, t_off=schedule.t_off, t_on=schedule.t_on)
    models = {}
    for scenario in scenarios:
        for i, theta in enumerate(thetas):
            models[(scenario, i)] = SequenceModel(scenario, theta, schedule, source, cal.medium, channel)
    return schedule, models


def simulate(
    cfg: ExperimentConfig,
    models: dict,
    schedule,
    n_sequences: int,
    mode: ModeFunction | None,
    budget: ImperfectionBudget | None = None,
    trace_sink=None,
):
    """Synthesize and reduce every acquisition chunk by chunk.

    Returns a dict keyed like ``models`` plus ``"shot"``.  ``trace_sink``
    (optional) receives ``(key, batch)`` for every chunk.
    """
    budget = cfg.budget() if budget is None else budget
    an = cfg.analysis
    band = (an.band_lo_hz, an.band_hi_hz)
    seed = cfg.run.seed
    shot_model = SequenceModel(Scenario.VACUUM, 0.0, schedule)
    acquisitions = {key: Acquisition() for key in models}
    acquisitions["shot"] = Acquisition()
    for streams in _chunks(n_sequences, cfg.run.chunk):
        shot = shot_model.synthesize(seed, streams, budget, acquisition=0)
        acquisitions["shot"].add(shot, an.window, band, mode)
        if trace_sink is not None:
            trace_sink("shot", shot)
        for key, model in models.items():
            scenario, theta_index = key
            batch = model.synthesize(seed, streams, budget, acquisition_id(scenario, theta_index))
            acquisitions[key].add(batch, an.window, band, mode)
            if trace_sink is not None:
                trace_sink(key, batch)
    return acquisitions


def timeline_rows(est_a, est_b, centers):
    flux = flux_timeline(est_a, est_b)
    rows = []
    for i, (a, b) in enumerate(zip(est_a, est_b)):
        rows.append((i, centers[i], a.value_db, b.value_db, flux.raw[i], a.stat_err_db, a.lo_drift_err_db))
    return rows, flux


def timeline_metrics(flux: dict, centers, window: float, retrieve_index: int) -> dict:
    """Lag, retrieval ratio and relaxation check from flux timelines.

    The steady state is the delayed timeline after the retrieve window;
    its window-to-window scatter is the noise scale for judging whether the
    post-retrieval deviation shrinks monotonically.
    """
    original = flux["original"].raw
    delayed = flux["delayed"].raw
    retrieve = flux["retrieve"].raw
    lag = lag_between(original, delayed, window)
    delayed_peak = float(np.max(delayed))
    retrieved_peak = float(retrieve[retrieve_index])
    tail = retrieve[retrieve_index:]
    plateau = delayed[retrieve_index + 1 :]
    steady = float(np.mean(plateau)) if plateau.size else float("nan")
    scatter = float(np.std(plateau, ddof=1)) if plateau.size > 1 else float("nan")
    deviation = np.abs(tail - steady)
    return {
        "lag_s": lag,
        "delayed_peak_flux": delayed_peak,
        "retrieved_peak_flux": retrieved_peak,
        "retrieved_over_delayed": retrieved_peak / delayed_peak if delayed_peak > 0 else float("nan"),
        "steady_state_flux": steady,
        "steady_state_scatter": scatter,
        "post_retrieval_deviation": deviation.tolist(),
    }


def run_timeline(cfg: ExperimentConfig, out=None, save_traces: bool = False) -> dict:
    """Original, delayed and store-retrieve timelines at two LO phases."""
    if len(cfg.run.thetas) != 2:
        raise ConfigError("timeline needs exactly two LO phases", key="run.thetas")
    out = _prepare_out(out or cfg.run.out)
    cal = calibrate_all(cfg)
    schedule, models = build_models(cfg, cal)
    an = cfg.analysis
    mode_t0 = schedule.t_on if an.mode_t0 is None else an.mode_t0
    mode = ModeFunction(an.mode_tau, mode_t0, an.mode_window, an.excluded_bins)
    n = cfg.n_sequences

    files = []
    sink = None
    trace_files: dict = {}
    if save_traces:
        handles = {}

        def sink(key, batch):
            name = "shot" if key == "shot" else f"{Scenario(key[0]).label}_{key[1]}"
            path = out / f"traces_{name}.hodt"
            if key not in handles:
                handles[key] = open(path.with_name(path.name + ".part"), "wb")
                trace_files[key] = path
            for tr in batch:
                handles[key].write(encode_trace(tr))

    acq = simulate(cfg, models, schedule, n, mode, trace_sink=sink)
    if save_traces:
        for key, fh in handles.items():
            fh.close()
            os.replace(trace_files[key].with_name(trace_files[key].name + ".part"), trace_files[key])
            files.append(trace_files[key])

    summary, written = _emit_timelines(cfg, acq, schedule, mode, out)
    files.extend(written)
    summary["calibration"] = cal.as_dict()
    summary["predicted_retrieved_db"] = [float(linear_to_db(v)) for v in models[(Scenario.STORE_RETRIEVE, 0)].retrieved]
    summary_path = out / "summary.json"
    write_json(summary_path, summary)
    files.append(summary_path)
    config_path = out / "config.txt"
    config_path.write_text(serialize_config(cfg))
    files.append(config_path)
    write_manifest(out, cfg, "timeline", files)
    return summary


def _emit_timelines(cfg, acq, schedule, mode, out: Path):
    an = cfg.analysis
    band = (an.band_lo_hz, an.band_hi_hz)
    lo = cfg.imperfections.lo_drift_db_sigma if cfg.imperfections.enabled else 0.0
    n_samples = schedule.n_samples
    fs = schedule.sample_rate
    win_len, _, _ = window_geometry(n_samples, fs, an.window)
    n_bins = len(band_bins(win_len, fs, band))
    centers = window_centers(n_samples, fs, schedule.t0_offset, an.window)
    labels = [f"window {i}" for i in range(centers.size)]
    shot = acq["shot"]
    files = []
    flux = {}
    summary = {"method1": {}, "method2": {}, "n_sequences": int(shot.power_matrix.shape[0])}
    for name, scenario in TIMELINE_SCENARIOS:
        est = [
            method1_from_powers(acq[(scenario, i)].power_matrix, shot.power_matrix, n_bins, lo, labels)
            for i in range(2)
        ]
        rows, flux[name] = timeline_rows(est[0], est[1], centers)
        path = out / f"timeline_{name}.csv"
        write_table(path, TIMELINE_HEADER, rows)
        files.append(path)
        summary["method1"][name] = {"theta_a": est[0], "theta_b": est[1]}
        if mode is not None and acq[(scenario, 0)].projections:
            summary["method2"][name] = [
                method2_from_projections(acq[(scenario, i)].q, shot.q, lo, mode.describe()) for i in range(2)
            ]
    retrieve_index = int(np.searchsorted(centers - 0.5 * win_len / fs, schedule.t_on - 1e-12))
    summary["metrics"] = timeline_metrics(flux, centers, an.window, retrieve_index)
    summary["retrieve_window_index"] = retrieve_index
    return summary, files


def method2_retrieval(
    cfg: ExperimentConfig,
    cal: Calibration,
    storage_time: float,
    n_sequences: int,
    thetas=(0.0,),
    subtract_empty: bool = True,
) -> dict:
    """Method II at t0 = t_on for one storage time.

    With ``subtract_empty`` an identical run with an empty memory
    (eta0 = 0) is analyzed too; its level is the offset left by the
    leaking input, reported alongside the offset-subtracted excess.
    """
    base = cfg.pulse_schedule()
    schedule = replace(base, t_on=base.t_off + storage_time)
    an = cfg.analysis
    mode = ModeFunction(an.mode_tau, schedule.t_on, an.mode_window, an.excluded_bins)
    _, models = build_models(cfg, cal, schedule, thetas, [Scenario.STORE_RETRIEVE])
    empty = {}
    if subtract_empty:
        empty_cal = replace(cal, channel=replace(cal.channel, eta0=0.0))
        _, empty_models = build_models(cfg, empty_cal, schedule, thetas, [Scenario.STORE_RETRIEVE])
        empty = {("empty",) + key: m for key, m in empty_models.items()}
    all_models = {**models, **empty}
    budget = cfg.budget()
    seed = cfg.run.seed
    shot_model = SequenceModel(Scenario.VACUUM, 0.0, schedule)
    q = {key: [] for key in all_models}
    q_shot = []
    for streams in _chunks(n_sequences, cfg.run.chunk):
        q_shot.append(method2_projections(shot_model.synthesize(seed, streams, budget, 0), mode))
        for key, model in all_models.items():
            scenario, idx = key[-2], key[-1]
            batch = model.synthesize(seed, streams, budget, acquisition_id(scenario, idx))
            q[key].append(method2_projections(batch, mode))
    lo = cfg.imperfections.lo_drift_db_sigma if cfg.imperfections.enabled else 0.0
    q_shot = np.concatenate(q_shot)
    result = {}
    for i, theta in enumerate(thetas):
        key = (Scenario.STORE_RETRIEVE, i)
        est = method2_from_projections(np.concatenate(q[key]), q_shot, lo, mode.describe())
        entry = {"theta": theta, "estimate": est, "predicted": models[key].retrieved_variance()}
        if subtract_empty:
            off = method2_from_projections(np.concatenate(q[("empty",) + key]), q_shot, lo, mode.describe())
            entry["empty"] = off
            entry["excess"] = est.linear - off.linear
        result[theta] = entry
    return result


# ---------------------------------------------------------------------------
# External data


def analyze(paths, cfg: ExperimentConfig, out=None) -> dict:
    """Run the estimators on recorded HODT files or re-check CSV tables.

    Inputs are read and analyzed in full before anything is written, so a
    bad input leaves no output behind.
    """
    traces = []
    tables = []
    for p in map(Path, paths):
        try:
            kind = sniff_kind(p)
        except OSError as exc:
            raise FormatError(f"{p}: {exc}") from exc
        if kind == "hodt":
            traces.extend(read_traces(p, cfg.schedule.t0_offset))
        else:
            tables.append((kind, p))

    staged: list[tuple[str, list, list]] = []
    summary: dict = {"inputs": [Path(p).name for p in paths]}
    for kind, p in tables:
        header = TIMELINE_HEADER if kind == "timeline" else SPECTRUM_HEADER
        rows = read_table(p, header)
        if kind == "timeline":
            rows = [[int(r[0]), r[1], r[2], r[3], flux_from_db(r[2], r[3]), r[5], r[6]] for r in rows]
        staged.append((f"checked_{p.stem}.csv", header, rows))

    if traces:
        staged.extend(_analyze_traces(traces, cfg, summary))

    out = _prepare_out(out or cfg.run.out)
    files = []
    for name, header, rows in staged:
        path = out / name
        write_table(path, header, rows)
        files.append(path)
    summary_path = out / "summary.json"
    write_json(summary_path, summary)
    files.append(summary_path)
    write_manifest(out, cfg, "analyze", files)
    return summary


def _analyze_traces(traces, cfg: ExperimentConfig, summary: dict):
    shot = [t for t in traces if t.scenario == Scenario.VACUUM]
    if not shot:
        raise CalibrationError("no Vacuum traces supplied for shot-noise calibration", target="shot")
    rates = {t.sample_rate for t in traces}
    if len(rates) != 1:
        raise FormatError(f"trace files mix sample rates {sorted(rates)}")
    groups: dict = {}
    for t in traces:
        if t.scenario != Scenario.VACUUM:
            groups.setdefault(t.scenario, {}).setdefault(t.lo_phase, []).append(t)
    if not groups:
        groups = {Scenario.VACUUM: {0.0: shot}}
    an = cfg.analysis
    rate = rates.pop()
    shot_batch = as_batch(shot)
    lo = cfg.imperfections.lo_drift_db_sigma if cfg.imperfections.enabled else 0.0
    staged = []
    sched = cfg.schedule
    pulsed = rate == sched.sample_rate and shot_batch.n_samples == int(round(sched.sequence_len * rate))
    if not pulsed:
        _, shot_psd = averaged_periodogram(shot_batch, an.spectrum_segment)
        for scenario, by_phase in groups.items():
            phases = sorted(by_phase)
            pair = (phases[0], phases[-1])
            psd = {}
            for phase in pair:
                freqs, psd[phase] = averaged_periodogram(as_batch(by_phase[phase]), an.spectrum_segment)
            rows = [
                (freqs[k], linear_to_db(psd[pair[0]][k] / shot_psd[k]), linear_to_db(psd[pair[1]][k] / shot_psd[k]),
                 linear_to_db(shot_psd[k]))
                for k in range(1, freqs.size)
            ]
            staged.append((f"spectrum_{scenario.label}.csv", SPECTRUM_HEADER, rows))
        return staged

    band = (an.band_lo_hz, an.band_hi_hz)
    n_samples = shot_batch.n_samples
    win_len, _, _ = window_geometry(n_samples, rate, an.window)
    n_bins = len(band_bins(win_len, rate, band))
    centers = window_centers(n_samples, rate, shot_batch.t0_offset, an.window)
    labels = [f"window {i}" for i in range(centers.size)]
    shot_pow = method1_powers(shot_batch, an.window, band)
    mode_t0 = cfg.channel.t_on if an.mode_t0 is None else an.mode_t0
    mode = ModeFunction(an.mode_tau, mode_t0, an.mode_window, an.excluded_bins)
    summary["method2"] = {}
    for scenario, by_phase in groups.items():
        phases = sorted(by_phase)
        pair = (phases[0], phases[-1])
        est = []
        for phase in pair:
            batch = as_batch(by_phase[phase])
            est.append(method1_from_powers(method1_powers(batch, an.window, band), shot_pow, n_bins, lo, labels))
        rows, _ = timeline_rows(est[0], est[1], centers)
        staged.append((f"timeline_{scenario.label}.csv", TIMELINE_HEADER, rows))
        try:
            summary["method2"][scenario.label] = [
                method2_from_projections(
                    method2_projections(as_batch(by_phase[p]), mode),
                    method2_projections(shot_batch, mode),
                    lo,
                    mode.describe(),
                )
                for p in pair
            ]
        except RangeError as exc:  # mode segment outside these traces
            summary["method2"][scenario.label] = str(exc)
    return staged
