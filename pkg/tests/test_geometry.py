import numpy as np
import pytest

from conicscan.geometry import (
    CameraIntrinsics,
    DepthFrame,
    EmptyFrameError,
    FrameError,
    default_intrinsics,
    load_frame,
    project_row,
    read_intrinsics,
    reproject,
    save_frame,
    transpose_frame,
)
from conicscan.synth import SceneSpec, render, trash_can


def _write_pgm(path, mm):
    h, w = mm.shape
    path.write_bytes(f"P5\n{w} {h}\n65535\n".encode() + mm.astype(">u2").tobytes())


def test_default_intrinsics_320x240():
    k = default_intrinsics(320, 240)
    assert (k.fx, k.fy, k.cx, k.cy) == (262.5, 262.5, 159.5, 119.5)


@pytest.mark.parametrize("kw", [dict(fx=0.0), dict(fy=-1.0), dict(cx=320.0), dict(cy=-0.5)])
def test_intrinsics_reject_invalid(kw):
    base = dict(fx=262.5, fy=262.5, cx=159.5, cy=119.5, width=320, height=240)
    base.update(kw)
    with pytest.raises(ValueError):
        CameraIntrinsics(**base)


def test_pgm_4x4_millimeters_to_meters(tmp_path):
    mm = np.arange(1, 17, dtype=np.uint16).reshape(4, 4) * 250
    _write_pgm(tmp_path / "f.pgm", mm)
    frame = load_frame(tmp_path / "f.pgm", CameraIntrinsics(3.0, 3.0, 1.5, 1.5, 4, 4))
    assert np.array_equal(frame.depths, mm / 1000.0)


def test_csv_frame_and_invalid_pixels(tmp_path):
    (tmp_path / "f.csv").write_text("1000,0,2000\n0,1500,0\n")
    frame = load_frame(tmp_path / "f.csv")
    assert frame.shape == (2, 3)
    assert np.isnan(frame.depths[0, 1]) and frame.depths[1, 1] == 1.5
    assert frame.valid.sum() == 3


def test_all_zero_frame_is_empty(tmp_path):
    _write_pgm(tmp_path / "z.pgm", np.zeros((3, 4), np.uint16))
    with pytest.raises(EmptyFrameError):
        load_frame(tmp_path / "z.pgm")


@pytest.mark.parametrize("payload", [b"P2\n2 2\n255\n0 0 0 0", b"P5\n4 4\n65535\n\x00\x01", b""])
def test_malformed_pgm(tmp_path, payload):
    (tmp_path / "bad.pgm").write_bytes(payload)
    with pytest.raises(FrameError):
        load_frame(tmp_path / "bad.pgm")


def test_missing_file():
    with pytest.raises(FrameError):
        load_frame("/nonexistent/frame.pgm")


def test_intrinsics_size_mismatch(tmp_path):
    _write_pgm(tmp_path / "f.pgm", np.full((4, 4), 1000, np.uint16))
    with pytest.raises(FrameError):
        load_frame(tmp_path / "f.pgm", default_intrinsics(320, 240))


def test_save_load_round_trip(tmp_path, intr):
    frame = render(SceneSpec([trash_can(0.0, 2.0)]), intr)
    for name in ("f.pgm", "f.csv"):
        save_frame(frame, tmp_path / name)
        back = load_frame(tmp_path / name, intr)
        diff = np.abs(np.nan_to_num(back.depths) - np.nan_to_num(frame.depths))
        assert diff.max() <= 0.0005 + 1e-12


def test_read_intrinsics_sidecar(tmp_path):
    (tmp_path / "k.txt").write_text("# camera\nfx = 300\nfy: 310\ncx 100\ncy=80\nwidth=200\nheight=160\n")
    k = read_intrinsics(tmp_path / "k.txt")
    assert (k.fx, k.fy, k.cx, k.cy, k.width, k.height) == (300, 310, 100, 80, 200, 160)
    (tmp_path / "bad.txt").write_text("fx=1\n")
    with pytest.raises(FrameError):
        read_intrinsics(tmp_path / "bad.txt", 10, 10)


def test_project_row_reprojects_and_keeps_column_order(intr):
    frame = render(SceneSpec([trash_can(0.0, 2.0)]), intr)
    for row in (100, 150, 200):
        pts = project_row(frame, row)
        assert [p.u for p in pts] == sorted(p.u for p in pts)
        for p in pts:
            u, v = reproject(intr, p.p3d)
            assert abs(u - p.u) < 0.5 and abs(v - row) < 0.5
    with pytest.raises(IndexError):
        project_row(frame, 240)


def test_transpose_swaps_axes(intr):
    frame = DepthFrame(intr, np.random.default_rng(0).uniform(0.5, 4.0, (240, 320)))
    t = transpose_frame(frame)
    assert t.shape == (320, 240)
    assert t.intrinsics.cx == intr.cy and t.intrinsics.width == intr.height
    assert transpose_frame(t) == frame


def test_depth_frame_shape_mismatch(intr):
    with pytest.raises(FrameError):
        DepthFrame(intr, np.ones((10, 10)))
