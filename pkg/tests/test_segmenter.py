import numpy as np
import pytest

from conicscan.geometry import Ellipse, ScanRowPoint, project_row
from conicscan.segmenter import SegmenterConfig, extract_ellipses, extract_frame_ellipses, prefilter, segment_2d
from conicscan.synth import SceneSpec, back_wall, exercise_ball, render, sample_ellipse_2d, trash_can

CFG = SegmenterConfig()


def _ell(ratio=1.0, r2=0.2, front=5):
    return Ellipse((0.0, 0.0, 2.0), r2, r2, 0.0, 0, 20, 0.001, r_major=1.0, r_minor=ratio,
                   front_support=front)


@pytest.mark.parametrize("kw", [dict(error_threshold=0.0), dict(min_support=5), dict(radius_min=0.0),
                                dict(radius_min=1.0, radius_max=0.5), dict(elongation_min=0.0),
                                dict(elongation_min=1.5), dict(max_gap=-1)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SegmenterConfig(**kw)


def test_row_through_cylinder_before_wall(intr):
    frame = render(SceneSpec([trash_can(0.0, 1.5)], [back_wall(3.0)], 0.002, seed=1), intr)
    row = 150
    kept = prefilter(extract_ellipses(project_row(frame, row), CFG, row), CFG)
    assert len(kept) == 1
    assert kept[0].r2 == pytest.approx(0.2, abs=0.02)
    assert kept[0].center[2] == pytest.approx(1.5, abs=0.02)


def test_pure_wall_row_gives_nothing(intr):
    frame = render(SceneSpec([], [back_wall(3.0)]), intr)
    assert extract_ellipses(project_row(frame, 120), CFG, 120) == []


def test_noisy_wall_fits_are_prefiltered(intr):
    frame = render(SceneSpec([], [back_wall(3.0)], 0.005, seed=2), intr)
    raw = extract_frame_ellipses(frame, CFG)
    assert not prefilter(raw, CFG)


def test_two_spheres_left_to_right(intr):
    scene = SceneSpec([exercise_ball(-0.6, 2.4), exercise_ball(0.6, 2.4)], [back_wall(4.0)])
    frame = render(scene, intr)
    row = 160
    kept = prefilter(extract_ellipses(project_row(frame, row), CFG, row), CFG)
    assert len(kept) == 2
    assert kept[0].center[0] < -0.3 and kept[1].center[0] > 0.3


def test_prefilter_rules():
    assert prefilter([_ell(0.1)], CFG) == []
    assert len(prefilter([_ell(1.0)], CFG)) == 1
    assert prefilter([_ell(1.0, r2=2.0)], CFG) == []
    assert prefilter([_ell(1.0, r2=0.01)], CFG) == []
    assert prefilter([_ell(1.0, front=0)], CFG) == []
    order = [_ell(1.0, r2=r) for r in (0.1, 0.3, 0.2)]
    assert [e.r2 for e in prefilter(order, CFG)] == [0.1, 0.3, 0.2]


def test_noise_sigma_2_ellipse_still_found():
    cfg = SegmenterConfig(error_threshold=4.05, radius_min=1.0, radius_max=1e3, max_jump=0.0,
                          min_front_support=0)
    xs, ys, _ = sample_ellipse_2d(40.0, 20.0, sigma=2.0, seed=4)
    models = segment_2d(xs, ys, cfg)
    best = max(models, key=lambda m: m.support)
    assert best.support >= 80
    assert best.ellipse.r_major == pytest.approx(40.0, rel=0.15)
    assert best.ellipse.r_minor == pytest.approx(20.0, rel=0.15)


def test_gap_breaks_segment():
    xs, ys, _ = sample_ellipse_2d(0.3, 0.2, arc=150, count=60, center=(0.0, 2.0))
    cfg = SegmenterConfig(max_gap=2, min_front_support=0, max_jump=0.0)
    # ten missing columns after the 30th sample
    pts = [ScanRowPoint(u + (10 if u >= 30 else 0), x, y, (x, 0.0, y)) for u, x, y in zip(range(60), xs, ys)]
    out = extract_ellipses(pts, cfg)
    assert len(out) == 2
    assert out[0].u_end < 40 <= out[1].u_start


def test_deterministic(intr):
    frame = render(SceneSpec([trash_can(0.0, 2.0)], [back_wall()], 0.005, seed=3), intr)
    a = extract_frame_ellipses(frame, CFG)
    b = extract_frame_ellipses(frame, CFG)
    assert a == b


def test_operation_budget(intr):
    frame = render(SceneSpec([trash_can(0.0, 2.0)], [back_wall()], 0.005, seed=3), intr)
    _, (adds, removes, fits) = extract_frame_ellipses(frame, CFG, return_ops=True)
    n = int(frame.valid.sum())
    assert adds + removes <= 2 * n
    assert fits <= n
