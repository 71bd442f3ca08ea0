import csv
import io
import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from conicscan.cli import EXIT_IO, EXIT_OK, EXIT_USAGE, main, thread_count
from conicscan.geometry import DepthFrame, default_intrinsics, save_frame


def _run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def _records(out):
    return [json.loads(line) for line in out.splitlines()]


@pytest.fixture(scope="module")
def frames(tmp_path_factory):
    """Three rendered frames: the three-object scene, an empty frame, a tilted cylinder."""
    root = tmp_path_factory.mktemp("frames")
    assert main(["gen", "-o", str(root / "paper"), "--preset", "paper", "--frames", "2"]) == 0
    assert main(["gen", "-o", str(root / "tilt"), "--preset", "tilted-cylinder"]) == 0
    save_frame(DepthFrame(default_intrinsics(), np.full((240, 320), np.nan)), root / "empty.pgm")
    return root


def test_detect_paper_scene(frames, capsys):
    code, out, _ = _run(["detect", str(frames / "paper" / "frame_0000.pgm")], capsys)
    assert code == EXIT_OK
    (rec,) = _records(out)
    assert sorted(p["kind"] for p in rec["primitives"]) == ["cone", "cylinder", "sphere"]
    assert all(v >= 0 for v in rec["timing_us"].values())
    assert rec["frame"] == 0 and rec["timestamp"] == 0.0


def test_records_round_trip(frames, capsys):
    _, out, _ = _run(["detect", str(frames / "paper")], capsys)
    recs = _records(out)
    assert [r["frame"] for r in recs] == [0, 1]
    for r in recs:
        assert json.loads(json.dumps(r)) == r
        for p in r["primitives"]:
            assert {"kind", "radius", "center", "support", "residual"} <= set(p)


def test_empty_frame_gives_empty_record(frames, capsys):
    code, out, _ = _run(["detect", str(frames / "empty.pgm")], capsys)
    assert code == EXIT_OK
    assert _records(out)[0]["primitives"] == []


def test_output_order_follows_input(frames, capsys, monkeypatch):
    monkeypatch.setenv("CONIC_SCAN_THREADS", "3")
    paths = [str(frames / "empty.pgm"), str(frames / "paper" / "frame_0001.pgm"),
             str(frames / "paper" / "frame_0000.pgm")]
    _, out, _ = _run(["detect", *paths], capsys)
    assert [r["source"] for r in _records(out)] == paths


def test_transpose_flag(frames, capsys):
    path = str(frames / "tilt" / "frame_0000.pgm")
    _, plain, _ = _run(["detect", path], capsys)
    _, turned, _ = _run(["detect", "--transpose", path], capsys)
    assert _records(plain)[0]["primitives"] == []
    assert [p["kind"] for p in _records(turned)[0]["primitives"]] == ["cylinder"]


def test_csv_output(frames, capsys):
    _, out, _ = _run(["detect", "--format", "csv", str(frames / "paper" / "frame_0000.pgm")], capsys)
    rows = list(csv.DictReader(io.StringIO(out)))
    assert sorted(r["kind"] for r in rows) == ["cone", "cylinder", "sphere"]
    assert all(float(r["radius"]) > 0 for r in rows)


def test_paths_from_stdin(frames, capsys, monkeypatch):
    monkeypatch.setattr(sys, "stdin", io.StringIO(str(frames / "empty.pgm") + "\n\n"))
    code, out, _ = _run(["detect", "-"], capsys)
    assert code == EXIT_OK and len(_records(out)) == 1


def test_missing_input_is_io_error(capsys):
    code, _, err = _run(["detect", "/nonexistent/frame.pgm"], capsys)
    assert code == EXIT_IO and "nonexistent" in err


def test_bad_flags_are_usage_errors(frames, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["detect", "--no-such-flag", str(frames / "empty.pgm")])
    assert exc.value.code == EXIT_USAGE
    # a value the config rejects
    code, _, _ = _run(["detect", "--threshold", "-1", str(frames / "empty.pgm")], capsys)
    assert code == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["experiment", "nonsense"])
    assert exc.value.code == EXIT_USAGE


def test_thread_env_var(monkeypatch):
    monkeypatch.setenv("CONIC_SCAN_THREADS", "1")
    assert thread_count() == 1
    monkeypatch.setenv("CONIC_SCAN_THREADS", "many")
    with pytest.raises(Exception):
        thread_count()


def test_bad_thread_env_var_exit_code(frames, capsys, monkeypatch):
    monkeypatch.setenv("CONIC_SCAN_THREADS", "many")
    code, _, _ = _run(["detect", str(frames / "empty.pgm")], capsys)
    assert code == EXIT_USAGE


def test_gen_scene_file_round_trip(tmp_path, capsys):
    assert main(["gen", "-o", str(tmp_path / "a"), "--preset", "sphere", "--dump-scene", "--ext", "csv"]) == 0
    scene = tmp_path / "a" / "scene.yaml"
    assert main(["gen", "-o", str(tmp_path / "b"), "--scene", str(scene), "--ext", "csv"]) == 0
    a = (tmp_path / "a" / "frame_0000.csv").read_text()
    assert a == (tmp_path / "b" / "frame_0000.csv").read_text()
    capsys.readouterr()


def test_gen_bad_scene_is_usage_error(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("- just\n- a list\n")
    code, _, _ = _run(["gen", "-o", str(tmp_path / "out"), "--scene", str(bad)], capsys)
    assert code == EXIT_USAGE
    code, _, _ = _run(["gen", "-o", str(tmp_path / "out"), "--scene", str(tmp_path / "none.yaml")], capsys)
    assert code == EXIT_IO


def test_experiment_ransac_prints_k(capsys, tmp_path):
    code, out, err = _run(["experiment", "ransac", "--trials", "3", "--format", "jsonl"], capsys)
    assert code == EXIT_OK
    rows = _records(out)
    assert {r["k"] for r in rows if r["method"] == "ransac"} == {369, 1232}
    assert "k=369" in err


def test_bench_results_repeat(capsys):
    argv = ["bench", "--sizes", "160x120", "--frames", "2", "--format", "jsonl"]
    _, a, _ = _run(argv, capsys)
    _, b, _ = _run(argv, capsys)
    # timings vary between runs; what was detected does not
    assert _records(a)[0]["primitives"] == _records(b)[0]["primitives"]


@pytest.mark.skipif(shutil.which("conicscan") is None, reason="console script not installed")
def test_console_script(frames):
    proc = subprocess.run(["conicscan", "detect", str(frames / "empty.pgm")], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["primitives"] == []
    proc = subprocess.run(["conicscan", "detect"], capture_output=True, text=True)
    assert proc.returncode == EXIT_USAGE
