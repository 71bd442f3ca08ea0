import math

import numpy as np
import pytest

from conicscan.geometry import CameraIntrinsics, project_frame
from conicscan.synth import (
    Cylinder,
    Occluder,
    SceneSpec,
    Sphere,
    cylinder_wall_slice,
    dump_scene,
    load_scene,
    paper_scene,
    parking_cone,
    render,
    sample_ellipse_2d,
    scene_from_dict,
    scene_to_dict,
)

# odd size so that one pixel looks straight down the optical axis
ODD = CameraIntrinsics(262.5, 262.5, 160.0, 120.0, 321, 241)


def test_center_pixel_of_sphere():
    frame = render(SceneSpec([Sphere((0.0, 0.0, 2.0), 0.36)]), ODD)
    assert frame.depths[120, 160] == pytest.approx(1.64, abs=1e-12)


def test_empty_scene_all_invalid(intr):
    assert not render(SceneSpec(), intr).valid.any()


def test_render_deterministic(intr):
    a = render(paper_scene(0.005, seed=3), intr, t=0.5)
    b = render(paper_scene(0.005, seed=3), intr, t=0.5)
    assert np.array_equal(a.depths, b.depths, equal_nan=True)
    c = render(paper_scene(0.005, seed=4), intr, t=0.5)
    assert not np.array_equal(a.depths, c.depths, equal_nan=True)


def test_vertical_cylinder_rows_match_closed_form(intr):
    # every row plane cuts a vertical cylinder in its base circle, seen from above
    can = Cylinder((0.1, 0.7, 2.0), (0.0, -1.0, 0.0), 0.2, 0.6)
    frame = render(SceneSpec([can]), intr)
    x, d = project_frame(frame)
    rows = np.arange(intr.height)[:, None] * np.ones_like(d)
    y = (rows - intr.cy) / intr.fy * d
    side = frame.valid & (np.abs(y - 0.1) > 1e-6)
    assert side.sum() > 1000
    err = np.abs(np.hypot(x[side] - 0.1, d[side] - 2.0) - 0.2)
    assert err.max() < 1e-9


def test_moving_object_follows_velocity(intr):
    ball = Sphere((0.0, 0.0, 2.0), 0.3, velocity=(0.0, 0.0, 0.5))
    f0 = render(SceneSpec([ball]), ODD)
    f1 = render(SceneSpec([ball]), ODD, t=2.0)
    assert f1.depths[120, 160] - f0.depths[120, 160] == pytest.approx(1.0, abs=1e-12)
    assert f1.timestamp == 2.0


def test_noise_is_along_the_ray():
    clean = render(SceneSpec([Sphere((0.0, 0.0, 2.0), 0.36)]), ODD)
    noisy = render(SceneSpec([Sphere((0.0, 0.0, 2.0), 0.36)], noise_sigma=0.01, seed=1), ODD)
    x0, d0 = project_frame(clean)
    x1, d1 = project_frame(noisy)
    ok = clean.valid & noisy.valid
    # bearing x/z is unchanged by range noise
    assert np.allclose(x0[ok] / d0[ok], x1[ok] / d1[ok], atol=1e-12)
    assert 0.005 < np.std(d1[ok] - d0[ok]) < 0.02


def test_occluder_hides_growing_share(intr):
    can = Cylinder((0.0, 0.7, 1.0), (0.0, -1.0, 0.0), 0.2, 0.6)
    visible = []
    for frac in (0.0, 0.2, 0.4):
        frame = render(SceneSpec([can], occluders=[Occluder(0, frac)]), intr)
        x, d = project_frame(frame)
        on_can = frame.valid & (np.abs(np.hypot(x, d - 1.0) - 0.2) < 1e-6)
        visible.append(on_can.sum())
    assert visible[0] > visible[1] > visible[2] > 0


@pytest.mark.parametrize("kw", [dict(noise_sigma=-1.0), dict(occluders=[Occluder(0, 1.0)])])
def test_scene_validation(kw):
    with pytest.raises(ValueError):
        SceneSpec(**kw)


def test_scene_round_trip(tmp_path):
    scene = paper_scene(0.004, seed=9)
    scene.occluders.append(Occluder(1, 0.25))
    path = tmp_path / "scene.yaml"
    dump_scene(scene, path)
    back = load_scene(path)
    assert scene_to_dict(back) == scene_to_dict(scene)
    assert np.array_equal(render(back).depths, render(scene).depths, equal_nan=True)


def test_scene_from_bad_data():
    with pytest.raises(ValueError):
        scene_from_dict([1, 2])
    with pytest.raises(ValueError):
        scene_from_dict({"objects": [{"kind": "sphere", "center": [0, 0, 2], "radius": 1, "mass": 3}]})


def test_scaled_scene(intr):
    scene = SceneSpec([Sphere((0.0, 0.0, 2.0), 0.36)])
    big = scene.scaled(2.0)
    assert big.objects[0].center == (0.0, 0.0, 4.0) and big.objects[0].radius == 0.72
    a, b = render(scene, ODD), render(big, ODD)
    assert np.allclose(2.0 * a.depths, b.depths, equal_nan=True)


def test_cone_apex_and_half_angle():
    cone = parking_cone(0.0, 2.0, base_radius=0.2, height=0.7, top_radius=0.03)
    assert cone.half_angle == pytest.approx(math.atan(0.17 / 0.7))
    assert np.allclose(cone.apex, (0.0, 0.7 - 0.2 / 0.17 * 0.7, 2.0))


def test_sample_ellipse_exact_and_labels():
    xs, ys, labels = sample_ellipse_2d(3.0, 1.0, count=40, center=(1.0, 2.0),
                                       background=[((0, 0), (1, 0), 10)])
    assert len(xs) == 50 and labels.sum() == 40
    assert np.allclose(((xs[:40] - 1.0) / 3.0) ** 2 + (ys[:40] - 2.0) ** 2, 1.0)
    with pytest.raises(ValueError):
        sample_ellipse_2d(3.0, 1.0, count=5)


def test_cylinder_wall_slice_inlier_ratio():
    xs, ys, labels = cylinder_wall_slice(seed=1)
    assert len(xs) == 200 and labels.sum() == 60
    assert np.all(np.diff(np.arctan2(xs, ys)) >= 0)
