import json
import math

import numpy as np
import pytest

from squeezemem.cli import EXIT_CALIBRATION, EXIT_CONFIG, EXIT_IO, EXIT_OK, main
from squeezemem.synth import HomodyneTrace, Scenario, white_noise
from squeezemem.traceio import TIMELINE_HEADER, read_table, write_traces

# A reduced sample rate keeps the covariance models small.
FAST = """\
schedule.sample_rate = 5e7
run.n_sequences = 40
run.chunk = 20
analysis.spectrum_trials = 10
"""


@pytest.fixture(scope="module")
def fast_cfg(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "fast.cfg"
    path.write_text(FAST)
    return str(path)


@pytest.fixture(scope="module")
def timeline_run(tmp_path_factory, fast_cfg):
    out = tmp_path_factory.mktemp("timeline")
    assert main(["timeline", "--config", fast_cfg, "--out", str(out), "--save-traces"]) == EXIT_OK
    return out


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_selftest(capsys):
    assert main(["selftest"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines and all(line.startswith("PASS") for line in lines)


def test_calibrate_prints_residuals(capsys, fast_cfg):
    assert main(["calibrate", "--config", fast_cfg]) == EXIT_OK
    out = capsys.readouterr().out
    for name in ("source_max_db", "source_min_db", "delay_s", "fwhm_hz"):
        assert name in out


def test_strict_unreachable_width_is_calibration_error(tmp_path, capsys):
    cfg = tmp_path / "strict.cfg"
    cfg.write_text("medium.strict = true\n")
    assert main(["calibrate", "--config", str(cfg)]) == EXIT_CALIBRATION
    assert "fwhm" in capsys.readouterr().err


@pytest.mark.parametrize("text", ["channel.t_on = -1e-6\n", "bogus.key = 1\n", "medium.d = \n"])
def test_config_errors_exit_2(tmp_path, text):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(text)
    assert main(["calibrate", "--config", str(cfg)]) == EXIT_CONFIG


def test_missing_config_file_is_io_error(tmp_path):
    assert main(["calibrate", "--config", str(tmp_path / "missing.cfg")]) == EXIT_IO


def test_timeline_outputs(timeline_run):
    names = {p.name for p in timeline_run.iterdir()}
    for name in ("timeline_original.csv", "timeline_delayed.csv", "timeline_retrieve.csv",
                 "summary.json", "config.txt", "manifest.json", "traces_shot.hodt"):
        assert name in names
    assert not any(n.endswith(".part") for n in names)
    rows = read_table(timeline_run / "timeline_retrieve.csv", TIMELINE_HEADER)
    assert len(rows) == 17


def test_manifest_hashes_files(timeline_run):
    import hashlib

    m = manifest(timeline_run)
    for name, digest in m["files"].items():
        assert hashlib.sha256((timeline_run / name).read_bytes()).hexdigest() == digest
    assert m["seed"] == 0 and m["command"] == "timeline"


def test_spectrum_is_deterministic(tmp_path, fast_cfg):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["spectrum", "--config", fast_cfg, "--out", str(a)]) == EXIT_OK
    assert main(["spectrum", "--config", fast_cfg, "--out", str(b)]) == EXIT_OK
    # config.txt records run.out, so only the data files are compared
    data_a = {k: v for k, v in manifest(a)["files"].items() if k != "config.txt"}
    data_b = {k: v for k, v in manifest(b)["files"].items() if k != "config.txt"}
    assert data_a == data_b
    c = tmp_path / "c"
    assert main(["spectrum", "--config", fast_cfg, "--out", str(c), "--seed", "1"]) == EXIT_OK
    assert manifest(c)["files"]["spectrum_source.csv"] != manifest(a)["files"]["spectrum_source.csv"]


def test_analyze_reproduces_timeline(tmp_path, timeline_run, fast_cfg):
    out = tmp_path / "re"
    inputs = sorted(str(p) for p in timeline_run.glob("*.hodt"))
    assert main(["analyze", "--config", fast_cfg, "--out", str(out), *inputs]) == EXIT_OK
    reanalyzed = (out / "timeline_StoreRetrieve.csv").read_bytes()
    assert reanalyzed == (timeline_run / "timeline_retrieve.csv").read_bytes()


def test_analyze_shot_only_is_zero_db(tmp_path):
    path = tmp_path / "shot.hodt"
    samples = white_noise(3, range(30), 2200)
    write_traces(path, [HomodyneTrace(2e8, s, 0.0, Scenario.VACUUM, 3, 0.0, i) for i, s in enumerate(samples)])
    out = tmp_path / "out"
    assert main(["analyze", "--out", str(out), str(path)]) == EXIT_OK
    rows = read_table(out / "timeline_Vacuum.csv", TIMELINE_HEADER)
    assert all(r[2] == 0.0 and r[3] == 0.0 for r in rows)


def test_analyze_without_shot_is_calibration_error(tmp_path):
    path = tmp_path / "sig.hodt"
    write_traces(path, [HomodyneTrace(2e8, np.ones(2200), 0.0, Scenario.SOURCE_ONLY, 1)])
    assert main(["analyze", "--out", str(tmp_path / "out"), str(path)]) == EXIT_CALIBRATION
    assert not (tmp_path / "out").exists()


def test_truncated_hodt_leaves_no_output(tmp_path, timeline_run):
    data = (timeline_run / "traces_shot.hodt").read_bytes()
    path = tmp_path / "cut.hodt"
    path.write_bytes(data[: len(data) - 13])
    out = tmp_path / "out"
    assert main(["analyze", "--out", str(out), str(path)]) == EXIT_IO
    assert not out.exists()


def test_analyze_rechecks_tables(tmp_path, timeline_run):
    out = tmp_path / "out"
    assert main(["analyze", "--out", str(out), str(timeline_run / "timeline_delayed.csv")]) == EXIT_OK
    orig = read_table(timeline_run / "timeline_delayed.csv", TIMELINE_HEADER)
    checked = read_table(out / "checked_timeline_delayed.csv", TIMELINE_HEADER)
    for a, b in zip(orig, checked):
        assert (math.isnan(a[4]) and math.isnan(b[4])) or a[4] == pytest.approx(b[4], rel=1e-12)
