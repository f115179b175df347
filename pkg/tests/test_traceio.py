import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from squeezemem.errors import FormatError
from squeezemem.synth import HomodyneTrace, Scenario
from squeezemem.traceio import (
    SPECTRUM_HEADER,
    TIMELINE_HEADER,
    decode_traces,
    encode_trace,
    read_table,
    read_traces,
    sniff_kind,
    write_table,
    write_trace_csv,
    write_traces,
)

traces = st.builds(
    HomodyneTrace,
    sample_rate=st.floats(1.0, 1e10),
    samples=arrays(np.float64, st.integers(1, 64), elements=st.floats(-1e6, 1e6)),
    lo_phase=st.floats(-10, 10),
    scenario=st.sampled_from(list(Scenario)),
    seed=st.integers(0, 2**64 - 1),
)


@given(st.lists(traces, min_size=1, max_size=4))
def test_round_trip(records):
    data = b"".join(encode_trace(t) for t in records)
    back = decode_traces(data)
    assert len(back) == len(records)
    for i, (a, b) in enumerate(zip(records, back)):
        assert np.array_equal(a.samples, b.samples)
        assert (a.sample_rate, a.lo_phase, a.scenario, a.seed) == (b.sample_rate, b.lo_phase, b.scenario, b.seed)
        assert b.stream_id == i


def test_header_layout():
    tr = HomodyneTrace(2e8, np.array([1.0, 2.0]), 0.5, Scenario.EIT_DELAY, 7)
    data = encode_trace(tr)
    assert data[:4] == b"HODT"
    assert struct.unpack_from("<IddIQQ", data, 4) == (1, 2e8, 0.5, 2, 7, 2)
    assert len(data) == 44 + 16


@pytest.fixture
def blob():
    tr = HomodyneTrace(2e8, np.arange(10.0), 0.0, Scenario.VACUUM, 1)
    return encode_trace(tr)


@pytest.mark.parametrize("cut", [3, 20, 43, 50])
def test_truncation_rejected(blob, cut):
    with pytest.raises(FormatError):
        decode_traces(blob[:cut])


def test_bad_magic(blob):
    with pytest.raises(FormatError, match="magic"):
        decode_traces(b"XXXX" + blob[4:])


def test_bad_version(blob):
    with pytest.raises(FormatError, match="version"):
        decode_traces(blob[:4] + struct.pack("<I", 2) + blob[8:])


def test_unknown_scenario(blob):
    bad = bytearray(blob)
    struct.pack_into("<I", bad, 24, 9)
    with pytest.raises(FormatError, match="scenario"):
        decode_traces(bytes(bad))


def test_empty_file():
    with pytest.raises(FormatError):
        decode_traces(b"")


def test_write_is_atomic(tmp_path):
    path = tmp_path / "t.hodt"

    def failing():
        yield HomodyneTrace(2e8, np.ones(4), 0.0, 0, 0)
        raise RuntimeError("interrupted")

    with pytest.raises(RuntimeError):
        write_traces(path, failing())
    assert not path.exists()


def test_file_round_trip(tmp_path):
    path = tmp_path / "t.hodt"
    records = [HomodyneTrace(2e8, np.arange(5.0) * i, 0.1, 3, i) for i in range(3)]
    write_traces(path, records)
    assert sniff_kind(path) == "hodt"
    back = read_traces(path, t0_offset=-4.04e-6)
    assert [b.seed for b in back] == [0, 1, 2]
    assert back[0].t0_offset == -4.04e-6


def test_tables(tmp_path):
    path = tmp_path / "timeline.csv"
    write_table(path, TIMELINE_HEADER, [[0, -3.7e-6, -0.5, 1.2, 0.3, 0.01, 0.004]])
    assert sniff_kind(path) == "timeline"
    assert read_table(path, TIMELINE_HEADER) == [[0.0, -3.7e-6, -0.5, 1.2, 0.3, 0.01, 0.004]]
    with pytest.raises(FormatError):
        read_table(path, SPECTRUM_HEADER)


def test_sniff_unknown(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(FormatError):
        sniff_kind(path)


def test_trace_csv(tmp_path):
    path = tmp_path / "trace.csv"
    write_trace_csv(path, HomodyneTrace(1e6, np.array([0.25, -1.0]), 0.0, 0, 0))
    assert path.read_text().splitlines() == ["time_s,value", "0.0,0.25", "1e-06,-1.0"]
