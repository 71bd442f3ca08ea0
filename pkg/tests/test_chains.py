import math

import numpy as np
import pytest

from conicscan.chains import (
    ChainConfig,
    EllipseChain,
    Line3D,
    MomentAccumulator3D,
    build_components,
    fit_center_circle,
    fit_center_line,
)
from conicscan.ellipse_fit import FitError
from conicscan.geometry import Ellipse
from conicscan.segmenter import SegmenterConfig, extract_frame_ellipses, prefilter
from conicscan.synth import SceneSpec, back_wall, exercise_ball, floor_plane, render, trash_can


def _ell(center, row, r=0.2, u=0):
    return Ellipse(tuple(center), r, r, 0.0, row, 20, 0.001, r, r, u, u + 10, 5)


@pytest.mark.parametrize("kw", [dict(phi=0.0), dict(k_neighbors=0), dict(min_chain=2)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        ChainConfig(**kw)


def test_stacked_centers_form_one_component():
    ells = [_ell((0.0, 0.01 * i, 2.0), i) for i in range(10)]
    chains = build_components(ells, ChainConfig(phi=0.05))
    assert [len(c) for c in chains] == [10]


def test_displaced_middle_row_is_skipped():
    ells = [_ell((0.0, 0.01 * i, 2.0), i) for i in range(10)]
    ells[5] = _ell((0.5, 0.05, 2.0), 5)
    chains = build_components(ells, ChainConfig(phi=0.05, k_neighbors=2))
    assert [len(c) for c in chains] == [9]
    assert 5 not in chains[0].rows


def test_two_cylinders_two_components(intr):
    scene = SceneSpec([trash_can(-0.5, 2.0), trash_can(0.5, 2.0)], [floor_plane(), back_wall()])
    cfg = SegmenterConfig()
    ells = prefilter(extract_frame_ellipses(render(scene, intr), cfg), cfg)
    # short fragments where the base meets the floor are left to the classifier
    chains = [c for c in build_components(ells, ChainConfig(phi=0.05)) if len(c) > 20]
    assert len(chains) == 2
    xs = sorted(np.mean(c.centers[:, 0]) for c in chains)
    assert xs == pytest.approx([-0.5, 0.5], abs=0.05)


def test_chain_rows_must_increase():
    with pytest.raises(ValueError):
        EllipseChain((_ell((0, 0, 2), 3), _ell((0, 0, 2), 3)))


def test_vertical_line_exact():
    pts = np.array([[0.1, y, 2.0] for y in np.linspace(0, 0.5, 8)])
    line, res = fit_center_line(pts)
    assert res == pytest.approx(0.0, abs=1e-12)
    assert abs(abs(line.direction[1]) - 1.0) < 1e-9
    assert np.linalg.norm(line.direction) == pytest.approx(1.0, abs=1e-12)


def test_oblique_line_monte_carlo():
    rng = np.random.default_rng(7)
    truth = np.array([0.3, 1.0, 0.2]) / np.linalg.norm([0.3, 1.0, 0.2])
    s = np.linspace(0.0, 0.6, 30)
    worst = 0.0
    for _ in range(50):
        pts = np.array([1.0, 0.0, 2.0]) + s[:, None] * truth + rng.normal(0, 0.001, (30, 3))
        line, _ = fit_center_line(pts)
        worst = max(worst, math.degrees(math.acos(min(1.0, abs(np.dot(line.direction, truth))))))
    assert worst < 1.0


def test_moments_match_batch(rng):
    pts = rng.normal([1.0, 2.0, 3.0], 0.3, (40, 3))
    acc = MomentAccumulator3D()
    for p in pts:
        acc.add(p)
    assert np.allclose(acc.mean, pts.mean(0), rtol=1e-12)
    q = pts - pts.mean(0)
    assert np.allclose(acc.scatter(), q.T @ q, rtol=1e-12, atol=1e-14)


def test_coincident_centers_rejected():
    with pytest.raises((FitError, ValueError)):
        fit_center_line(np.ones((5, 3)))


def test_circle_exact_semicircle():
    phi = np.linspace(0.1, math.pi - 0.1, 12)
    pts = np.column_stack([0.2 + 0.3 * np.cos(phi), 0.3 * np.sin(phi), np.full(12, 2.0)])
    circle, res = fit_center_circle(pts)
    assert circle.radius == pytest.approx(0.3, abs=1e-6)
    assert circle.center == pytest.approx((0.2, 0.0, 2.0), abs=1e-6)
    assert res < 1e-9


def test_circle_from_line_fails():
    pts = np.column_stack([np.zeros(6), np.linspace(0, 1, 6), np.full(6, 2.0)])
    with pytest.raises(FitError):
        fit_center_circle(pts)


def test_sphere_chain_centers_lie_on_thales_circle(intr):
    # every row plane contains the camera, so the cross-section center is the
    # foot of the perpendicular from the sphere center onto the plane; those
    # feet lie on the circle with diameter camera-to-sphere-center
    ball = exercise_ball(0.0, 2.4)
    scene = SceneSpec([ball], [floor_plane(), back_wall()])
    cfg = SegmenterConfig()
    ells = prefilter(extract_frame_ellipses(render(scene, intr), cfg), cfg)
    chain = max(build_components(ells), key=len)
    circle, _ = fit_center_circle(chain)
    c = np.asarray(ball.center)
    assert circle.radius == pytest.approx(0.5 * np.linalg.norm(c), rel=0.02)
    assert np.linalg.norm(np.asarray(circle.center) - 0.5 * c) < 0.02 * np.linalg.norm(c)


def test_line3d_helpers():
    line = Line3D((0.0, 0.0, 0.0), (0.0, 2.0, 0.0))
    assert line.direction == (0.0, 1.0, 0.0)
    assert line.project([[1.0, 3.0, 0.0]])[0] == pytest.approx(3.0)
    assert line.distance([[1.0, 3.0, 0.0]])[0] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        Line3D((0, 0, 0), (0, 0, 0))
