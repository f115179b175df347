"""
Flat ``section.key = value`` experiment configuration.

Every key has a default; an empty file gives the reference experiment.
Values are numbers, ``true``/``false``, ``auto`` (compute during
calibration), bare strings, or lists written as ``[a, b, c]``.  ``#``
starts a comment.  Floats are serialized with ``repr`` so parsing the
serialized text reproduces the configuration exactly.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, fields, replace
from typing import Any

from .errors import ConfigError, ParameterError, ScheduleError
from .medium import DEFAULT_TAU_MEM, DEFAULT_TAU_RET, RB87_D1_GAMMA
from .spectra import DEFAULT_KAPPA_HZ
from .synth import SPIKE_BAND_LIMIT_HZ, ImperfectionBudget, PulseSchedule


def _opt(kind, doc, optional=False):
    return {"kind": kind, "doc": doc, "optional": optional}


@dataclass(frozen=True)
class SourceConfig:
    max_db: float = field(default=6.0, metadata=_opt("float", "CW anti-squeezing at f->0 (dB)"))
    min_db: float = field(default=-2.0, metadata=_opt("float", "CW squeezing at f->0 (dB)"))
    pulsed_max_db: float = field(default=4.10, metadata=_opt("float", "pulsed-run input anti-squeezing (dB)"))
    pulsed_min_db: float = field(default=-1.24, metadata=_opt("float", "pulsed-run input squeezing (dB)"))
    pump_param: float | None = field(default=None, metadata=_opt("float", "OPO x; auto = fit CW levels", True))
    escape_eff: float | None = field(default=None, metadata=_opt("float", "OPO escape*detection eff.", True))
    kappa_hz: float = field(default=DEFAULT_KAPPA_HZ, metadata=_opt("float", "OPO cavity HWHM (Hz)"))


@dataclass(frozen=True)
class MediumConfig:
    d: float = field(default=5.0, metadata=_opt("float", "optical depth"))
    gamma: float = field(default=RB87_D1_GAMMA, metadata=_opt("float", "excited-state linewidth, Rb87 D1 (rad/s)"))
    omega_c: float | None = field(default=None, metadata=_opt("float", "control Rabi frequency (rad/s)", True))
    gamma12: float | None = field(default=None, metadata=_opt("float", "ground decoherence (rad/s)", True))
    delay_target: float = field(default=135e-9, metadata=_opt("float", "group delay target (s)"))
    fwhm_target: float = field(default=2.7e6, metadata=_opt("float", "transmitted window FWHM target (Hz)"))
    strict: bool = field(default=False, metadata=_opt("bool", "fail when the FWHM target is unreachable"))


@dataclass(frozen=True)
class ChannelConfig:
    eta0: float | None = field(default=None, metadata=_opt("float", "retrieval efficiency at t_s=0", True))
    flux_ratio: float = field(default=0.20, metadata=_opt("float", "retrieved/delayed peak flux target"))
    tau_mem: float = field(default=DEFAULT_TAU_MEM, metadata=_opt("float", "memory decay time, 2 us halving (s)"))
    tau_ret: float = field(default=DEFAULT_TAU_RET, metadata=_opt("float", "retrieved mode decay time (s)"))
    coherence_time: float = field(default=10e-6, metadata=_opt("float", "atomic coherence estimate, informational (s)"))
    t_off: float = field(default=0.0, metadata=_opt("float", "control switch-off (s)"))
    t_on: float = field(default=3e-6, metadata=_opt("float", "control switch-on (s)"))


@dataclass(frozen=True)
class ScheduleConfig:
    pulse_len: float = field(default=930e-9, metadata=_opt("float", "input pulse length (s)"))
    tail_leak: float = field(default=0.05, metadata=_opt("float", "modulator leak, power fraction"))
    pulse_end: float = field(default=0.0, metadata=_opt("float", "end of the input pulse (s)"))
    sequence_len: float = field(default=11e-6, metadata=_opt("float", "trace length (s)"))
    sequences_per_measurement: int = field(default=90, metadata=_opt("int", "sequences per measurement"))
    n_measurements: int = field(default=1000, metadata=_opt("int", "measurements (desk scale)"))
    sample_rate: float = field(default=2e8, metadata=_opt("float", "pulsed sample rate (S/s)"))
    t0_offset: float = field(default=-4.04e-6, metadata=_opt("float", "trace start relative to t_off (s)"))


@dataclass(frozen=True)
class ImperfectionConfig:
    enabled: bool = field(default=True, metadata=_opt("bool", "apply detector imperfections"))
    lo_drift_db_sigma: float = field(default=0.004, metadata=_opt("float", "LO power drift (dB)"))
    cmrr_db: float = field(default=-58.0, metadata=_opt("float", "common-mode rejection (dB)"))
    lo_classical_excess_db: float = field(default=3.0, metadata=_opt("float", "LO excess over shot (dB)"))
    lo_band_lo_hz: float = field(default=1e6, metadata=_opt("float", "LO excess band start (Hz)"))
    lo_band_hi_hz: float = field(default=2e6, metadata=_opt("float", "LO excess band end (Hz)"))
    adc_bits: int = field(default=8, metadata=_opt("int", "ADC resolution (bits)"))
    electronic_floor_db: float = field(default=-20.0, metadata=_opt("float", "electronic noise vs shot (dB)"))
    spike_freqs_hz: tuple[float, ...] = field(
        default=(150e3, 350e3, 550e3), metadata=_opt("floatlist", "spike tones below 700 kHz (Hz)")
    )
    spike_db: tuple[float, ...] = field(
        default=(-45.0, -45.0, -45.0), metadata=_opt("floatlist", "spike power vs shot full scale (dB)")
    )
    full_scale_sigma: float = field(default=5.0, metadata=_opt("float", "ADC half-range in signal sigmas"))


@dataclass(frozen=True)
class AnalysisConfig:
    window: float = field(default=640e-9, metadata=_opt("float", "Method I window (s)"))
    band_lo_hz: float = field(default=1.0e6, metadata=_opt("float", "Method I band start (Hz)"))
    band_hi_hz: float = field(default=2.0e6, metadata=_opt("float", "Method I band end (Hz)"))
    mode_tau: float = field(default=250e-9, metadata=_opt("float", "Method II mode decay (s)"))
    mode_window: float = field(default=750e-9, metadata=_opt("float", "Method II integration window (s)"))
    mode_t0: float | None = field(default=None, metadata=_opt("float", "Method II start; auto = t_on", True))
    excluded_bins: tuple[int, ...] = field(default=(), metadata=_opt("intlist", "Method II DFT bins removed"))
    spectrum_sample_rate: float = field(default=5e7, metadata=_opt("float", "CW spectrum sample rate (S/s)"))
    spectrum_trials: int = field(default=1000, metadata=_opt("int", "CW spectrum trials"))
    spectrum_duration: float = field(default=64e-6, metadata=_opt("float", "CW trace length (s)"))
    spectrum_segment: int = field(default=128, metadata=_opt("int", "CW periodogram segment (samples)"))


@dataclass(frozen=True)
class RunConfig:
    seed: int = field(default=0, metadata=_opt("int", "root seed"))
    out: str = field(default="out", metadata=_opt("str", "output directory"))
    thetas: tuple[float, ...] = field(
        default=(0.0, math.pi / 2), metadata=_opt("floatlist", "LO phases (rad)")
    )
    n_sequences: int | None = field(default=None, metadata=_opt("int", "sequences per scenario; auto = all", True))
    chunk: int = field(default=1000, metadata=_opt("int", "sequences per processing chunk"))


SECTIONS = {
    "source": SourceConfig,
    "medium": MediumConfig,
    "channel": ChannelConfig,
    "schedule": ScheduleConfig,
    "imperfections": ImperfectionConfig,
    "analysis": AnalysisConfig,
    "run": RunConfig,
}

SCALE_MEASUREMENTS = {"desk": 1000, "paper": 10000}


@dataclass(frozen=True)
class ExperimentConfig:
    source: SourceConfig = field(default_factory=SourceConfig)
    medium: MediumConfig = field(default_factory=MediumConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    imperfections: ImperfectionConfig = field(default_factory=ImperfectionConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def __post_init__(self):
        validate(self)

    def update(self, key: str, value: Any) -> "ExperimentConfig":
        section, name = _split_key(key)
        sub = getattr(self, section)
        return replace(self, **{section: replace(sub, **{name: value})})

    def with_scale(self, scale: str) -> "ExperimentConfig":
        if scale not in SCALE_MEASUREMENTS:
            raise ConfigError(f"unknown scale {scale!r}", key="--scale")
        return self.update("schedule.n_measurements", SCALE_MEASUREMENTS[scale])

    # Derived objects -----------------------------------------------------

    def pulse_schedule(self) -> PulseSchedule:
        s = self.schedule
        return PulseSchedule(
            pulse_len=s.pulse_len,
            tail_leak=s.tail_leak,
            t_off=self.channel.t_off,
            t_on=self.channel.t_on,
            sequence_len=s.sequence_len,
            sequences_per_measurement=s.sequences_per_measurement,
            n_measurements=s.n_measurements,
            sample_rate=s.sample_rate,
            t0_offset=s.t0_offset,
            pulse_end=s.pulse_end,
        )

    def budget(self) -> ImperfectionBudget:
        imp = self.imperfections
        if not imp.enabled:
            return ImperfectionBudget.ideal()
        return ImperfectionBudget(
            lo_drift_db_sigma=imp.lo_drift_db_sigma,
            cmrr_db=imp.cmrr_db,
            lo_classical_excess_db=imp.lo_classical_excess_db,
            lo_band_hz=(imp.lo_band_lo_hz, imp.lo_band_hi_hz),
            adc_bits=imp.adc_bits,
            electronic_floor_db=imp.electronic_floor_db,
            spike_lines=tuple(zip(imp.spike_freqs_hz, imp.spike_db)),
            full_scale_sigma=imp.full_scale_sigma,
        )

    @property
    def n_sequences(self) -> int:
        if self.run.n_sequences is not None:
            return self.run.n_sequences
        return self.schedule.n_measurements * self.schedule.sequences_per_measurement

    def digest(self) -> str:
        return hashlib.sha256(serialize_config(self).encode("utf-8")).hexdigest()


def _split_key(key: str) -> tuple[str, str]:
    section, _, name = key.partition(".")
    if section not in SECTIONS or not name:
        raise ConfigError("unknown key", key=key)
    if name not in {f.name for f in fields(SECTIONS[section])}:
        raise ConfigError("unknown key", key=key)
    return section, name


def _require(cond: bool, key: str, message: str) -> None:
    if not cond:
        raise ConfigError(message, key=key)


def validate(cfg: ExperimentConfig) -> None:
    """Check every constraint; the error names the offending key."""
    src = cfg.source
    _require(src.max_db > 0, "source.max_db", "must be > 0 dB")
    _require(src.min_db < 0, "source.min_db", "must be < 0 dB")
    _require(src.pulsed_max_db > 0, "source.pulsed_max_db", "must be > 0 dB")
    _require(src.pulsed_min_db < 0, "source.pulsed_min_db", "must be < 0 dB")
    _require(src.kappa_hz > 0, "source.kappa_hz", "must be > 0")
    _require(
        (src.pump_param is None) == (src.escape_eff is None),
        "source.pump_param",
        "pump_param and escape_eff must both be set or both be auto",
    )
    if src.pump_param is not None:
        _require(0 <= src.pump_param < 1, "source.pump_param", "must lie in [0, 1) (below threshold)")
        _require(0 < src.escape_eff <= 1, "source.escape_eff", "must lie in (0, 1]")

    med = cfg.medium
    _require(med.d > 0, "medium.d", "must be > 0")
    _require(med.gamma > 0, "medium.gamma", "must be > 0")
    _require(med.omega_c is None or med.omega_c > 0, "medium.omega_c", "must be > 0")
    _require(med.gamma12 is None or med.gamma12 >= 0, "medium.gamma12", "must be >= 0")
    _require(
        (med.omega_c is None) or (med.gamma12 is not None),
        "medium.gamma12",
        "must be set when medium.omega_c is set",
    )
    _require(med.delay_target > 0, "medium.delay_target", "must be > 0")
    _require(med.fwhm_target > 0, "medium.fwhm_target", "must be > 0")

    ch = cfg.channel
    _require(ch.eta0 is None or 0 <= ch.eta0 <= 1, "channel.eta0", "must lie in [0, 1]")
    _require(0 < ch.flux_ratio <= 1, "channel.flux_ratio", "must lie in (0, 1]")
    _require(ch.tau_mem > 0, "channel.tau_mem", "must be > 0")
    _require(ch.tau_ret > 0, "channel.tau_ret", "must be > 0")
    _require(ch.coherence_time > 0, "channel.coherence_time", "must be > 0")
    _require(ch.t_on > ch.t_off, "channel.t_on", "must be later than channel.t_off (t_on > t_off)")

    sc = cfg.schedule
    _require(sc.pulse_len > 0, "schedule.pulse_len", "must be > 0")
    _require(0 <= sc.tail_leak < 1, "schedule.tail_leak", "must lie in [0, 1)")
    _require(sc.sequence_len > sc.pulse_len, "schedule.sequence_len", "must exceed schedule.pulse_len")
    _require(sc.sequences_per_measurement >= 1, "schedule.sequences_per_measurement", "must be >= 1")
    _require(sc.n_measurements >= 1, "schedule.n_measurements", "must be >= 1")
    _require(sc.sample_rate > 0, "schedule.sample_rate", "must be > 0")
    try:
        cfg.pulse_schedule()
    except ScheduleError as exc:
        raise ConfigError(str(exc), key="schedule") from exc

    imp = cfg.imperfections
    _require(imp.lo_drift_db_sigma >= 0, "imperfections.lo_drift_db_sigma", "must be >= 0")
    _require(imp.adc_bits >= 1, "imperfections.adc_bits", "must be >= 1")
    _require(0 <= imp.lo_band_lo_hz < imp.lo_band_hi_hz, "imperfections.lo_band_hi_hz", "band must satisfy lo < hi")
    _require(
        len(imp.spike_freqs_hz) == len(imp.spike_db),
        "imperfections.spike_db",
        "needs one power per spike frequency",
    )
    for f in imp.spike_freqs_hz:
        _require(0 < f < SPIKE_BAND_LIMIT_HZ, "imperfections.spike_freqs_hz", "spikes must lie in (0, 700 kHz)")
    _require(imp.full_scale_sigma > 0, "imperfections.full_scale_sigma", "must be > 0")
    try:
        cfg.budget()
    except ParameterError as exc:
        raise ConfigError(str(exc), key="imperfections") from exc

    an = cfg.analysis
    _require(an.window > 0, "analysis.window", "must be > 0")
    _require(0 <= an.band_lo_hz < an.band_hi_hz, "analysis.band_hi_hz", "band must satisfy lo < hi")
    _require(an.mode_tau > 0, "analysis.mode_tau", "must be > 0")
    _require(an.mode_window > 0, "analysis.mode_window", "must be > 0")
    _require(all(k >= 0 for k in an.excluded_bins), "analysis.excluded_bins", "bins must be >= 0")
    _require(an.spectrum_sample_rate > 0, "analysis.spectrum_sample_rate", "must be > 0")
    _require(an.spectrum_trials >= 2, "analysis.spectrum_trials", "must be >= 2")
    _require(an.spectrum_duration > 0, "analysis.spectrum_duration", "must be > 0")
    _require(an.spectrum_segment >= 4, "analysis.spectrum_segment", "must be >= 4")

    run = cfg.run
    _require(0 <= run.seed < 2**63, "run.seed", "must lie in [0, 2^63)")
    _require(len(run.out) > 0, "run.out", "must not be empty")
    _require(len(run.thetas) >= 1, "run.thetas", "needs at least one phase")
    _require(run.n_sequences is None or run.n_sequences >= 2, "run.n_sequences", "must be >= 2")
    _require(run.chunk >= 1, "run.chunk", "must be >= 1")


# ---------------------------------------------------------------------------
# Text format


def _format_value(value, kind) -> str:
    if value is None:
        return "auto"
    if kind == "bool":
        return "true" if value else "false"
    if kind == "float":
        return repr(float(value))
    if kind == "int":
        return str(int(value))
    if kind == "str":
        return str(value)
    if kind == "floatlist":
        return "[" + ", ".join(repr(float(v)) for v in value) + "]"
    if kind == "intlist":
        return "[" + ", ".join(str(int(v)) for v in value) + "]"
    raise AssertionError(kind)


def serialize_config(cfg: ExperimentConfig) -> str:
    lines = []
    for section, cls in SECTIONS.items():
        lines.append(f"# [{section}]")
        sub = getattr(cfg, section)
        for f in fields(cls):
            meta = f.metadata
            text = _format_value(getattr(sub, f.name), meta["kind"])
            lines.append(f"{section}.{f.name} = {text}  # {meta['doc']}")
        lines.append("")
    return "\n".join(lines)


def _parse_scalar(text: str, kind: str):
    if kind == "float":
        value = float(text)
        if not math.isfinite(value):
            raise ValueError("value must be finite")
        return value
    if kind == "int":
        return int(text, 10)
    if kind == "bool":
        low = text.lower()
        if low in ("true", "yes", "1"):
            return True
        if low in ("false", "no", "0"):
            return False
        raise ValueError("expected true or false")
    if kind == "str":
        if len(text) >= 2 and text[0] == text[-1] and text[0] in "'\"":
            return text[1:-1]
        return text
    raise AssertionError(kind)


def _parse_value(text: str, meta: dict):
    kind = meta["kind"]
    if text.lower() == "auto":
        if not meta["optional"]:
            raise ValueError("auto is not allowed for this key")
        return None
    if kind in ("floatlist", "intlist"):
        inner = text
        if inner.startswith("[") != inner.endswith("]"):
            raise ValueError("unbalanced brackets in list")
        if inner.startswith("["):
            inner = inner[1:-1]
        items = [item.strip() for item in inner.split(",")] if inner.strip() else []
        scalar = "float" if kind == "floatlist" else "int"
        return tuple(_parse_scalar(item, scalar) for item in items)
    return _parse_scalar(text, kind)


def parse_config(text: str) -> ExperimentConfig:
    """Parse configuration text; missing keys take their defaults."""
    values: dict[str, dict[str, Any]] = {name: {} for name in SECTIONS}
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        if "=" not in line:
            col = len(line) - len(line.lstrip()) + 1
            raise ConfigError("expected 'section.key = value'", line=lineno, column=col)
        key_part, _, value_part = line.partition("=")
        key = key_part.strip()
        if not key:
            raise ConfigError("missing key before '='", line=lineno, column=1)
        section, name = _split_key(key)
        if key in seen:
            raise ConfigError("duplicate key", key=key)
        seen.add(key)
        value_text = value_part.strip()
        column = len(key_part) + 2 + (len(value_part) - len(value_part.lstrip()))
        if not value_text:
            raise ConfigError(f"missing value for {key}", line=lineno, column=column)
        meta = {f.name: f.metadata for f in fields(SECTIONS[section])}[name]
        try:
            values[section][name] = _parse_value(value_text, meta)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}", line=lineno, column=column) from exc
    try:
        return ExperimentConfig(**{name: SECTIONS[name](**vals) for name, vals in values.items()})
    except (TypeError, ParameterError) as exc:  # pragma: no cover - defensive
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
