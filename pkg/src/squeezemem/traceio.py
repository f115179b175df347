"""
Binary trace files and CSV tables.

HODT layout (little-endian): magic ``HODT``, u32 version (1), f64 sample
rate, f64 LO phase, u32 scenario code, u64 seed, u64 sample count, then
the samples as f64.  A file may hold several records back to back.  The
trace start time and stream index are not part of the record; readers
supply ``t0_offset`` and number records in file order.
"""

from __future__ import annotations

import csv
import math
import os
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import FormatError
from .synth import HomodyneTrace, Scenario, TraceBatch

MAGIC = b"HODT"
VERSION = 1
_HEADER = struct.Struct("<4sIddIQQ")

TIMELINE_HEADER = ["window_index", "t_center_s", "s_min_db", "s_max_db", "flux", "stat_err_db", "lo_err_db"]
SPECTRUM_HEADER = ["freq_hz", "s_min_db", "s_max_db", "shot_db"]


def encode_trace(trace: HomodyneTrace) -> bytes:
    samples = np.ascontiguousarray(trace.samples, dtype="<f8")
    header = _HEADER.pack(
        MAGIC,
        VERSION,
        float(trace.sample_rate),
        float(trace.lo_phase),
        int(trace.scenario),
        int(trace.seed) & 0xFFFFFFFFFFFFFFFF,
        samples.size,
    )
    return header + samples.tobytes()


def write_traces(path, traces: Iterable[HomodyneTrace] | TraceBatch) -> None:
    """Write records atomically: a failure leaves no partial file."""
    path = Path(path)
    tmp = path.with_name(path.name + ".part")
    with open(tmp, "wb") as fh:
        for trace in traces:
            fh.write(encode_trace(trace))
    os.replace(tmp, path)


def decode_traces(data: bytes, t0_offset: float = 0.0) -> list[HomodyneTrace]:
    traces = []
    pos = 0
    while pos < len(data):
        if len(data) - pos < _HEADER.size:
            raise FormatError(f"truncated header at byte {pos}")
        magic, version, rate, phase, code, seed, n = _HEADER.unpack_from(data, pos)
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r} at byte {pos}")
        if version != VERSION:
            raise FormatError(f"unsupported HODT version {version}")
        pos += _HEADER.size
        nbytes = 8 * n
        if len(data) - pos < nbytes:
            raise FormatError(f"truncated samples: record declares {n} samples")
        try:
            scenario = Scenario(code)
        except ValueError as exc:
            raise FormatError(f"unknown scenario code {code}") from exc
        samples = np.frombuffer(data, dtype="<f8", count=n, offset=pos).astype(float)
        pos += nbytes
        if n == 0 or not np.all(np.isfinite(samples)):
            raise FormatError("record has no samples or non-finite samples")
        traces.append(HomodyneTrace(rate, samples, phase, scenario, seed, t0_offset, len(traces)))
    if not traces:
        raise FormatError("file holds no HODT records")
    return traces


def read_traces(path, t0_offset: float = 0.0) -> list[HomodyneTrace]:
    with open(path, "rb") as fh:
        return decode_traces(fh.read(), t0_offset)


def write_trace_csv(path, trace: HomodyneTrace) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time_s", "value"])
        for t, v in zip(trace.times, trace.samples):
            writer.writerow([repr(float(t)), repr(float(v))])


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_table(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".part")
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    os.replace(tmp, path)


def read_table(path, header: Sequence[str]) -> list[list[float]]:
    """Rows of a CSV whose header must equal ``header``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        found = next(reader, None)
        if found != list(header):
            raise FormatError(f"{path}: expected header {','.join(header)}, found {found}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise FormatError(f"{path}:{lineno}: expected {len(header)} columns")
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
    return rows


def sniff_kind(path) -> str:
    """'hodt', 'timeline' or 'spectrum' from the file contents."""
    with open(path, "rb") as fh:
        head = fh.read(256)
    if head.startswith(MAGIC):
        return "hodt"
    first = head.split(b"\n", 1)[0].strip().decode("utf-8", errors="replace")
    if first == ",".join(TIMELINE_HEADER):
        return "timeline"
    if first == ",".join(SPECTRUM_HEADER):
        return "spectrum"
    raise FormatError(f"{path}: not a HODT file or a known CSV table")


def flux_from_db(s_min_db: float, s_max_db: float) -> float:
    return 10.0 ** (s_min_db / 10.0) + 10.0 ** (s_max_db / 10.0) - 2.0


def db_or_nan(value: float) -> float:
    return 10.0 * math.log10(value) if value > 0 else float("nan")
