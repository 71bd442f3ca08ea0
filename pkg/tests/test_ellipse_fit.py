import math

import numpy as np
import pytest

from conicscan import _kernels
from conicscan.ellipse_fit import (
    FitError,
    ScatterAccumulator,
    batch_sums,
    fit,
    fit_circle,
    from_geometric,
    point_error,
    point_errors,
    to_geometric,
)
from conicscan.synth import sample_ellipse_2d


def test_single_point_sums():
    acc = ScatterAccumulator(origin=(0.0, 0.0)).add(1.0, 2.0)
    assert acc["x"] == 1 and acc["y"] == 2 and acc["xy"] == 2
    assert acc["x2"] == 1 and acc["y2"] == 4
    assert acc["x3y"] == 2 and acc["x2y2"] == 4 and acc["n"] == 1


def test_ten_points_match_batch_bitwise(rng):
    xs, ys = rng.normal(size=10), rng.normal(size=10)
    acc = ScatterAccumulator(origin=(0.0, 0.0)).extend(xs, ys)
    ref = ScatterAccumulator(origin=(0.0, 0.0))
    for x, y in zip(xs, ys):
        ref.add(x, y)
    assert np.array_equal(acc.sums, ref.sums)
    assert np.allclose(acc.sums, batch_sums(xs, ys, (0.0, 0.0)), rtol=1e-12, atol=1e-12)


def test_add_remove_equals_batch():
    p = [(1.0, 2.0), (-0.5, 3.0), (2.5, -1.0)]
    acc = ScatterAccumulator(origin=(0.0, 0.0))
    for x, y in p:
        acc.add(x, y)
    acc.remove(*p[2])
    ref = batch_sums([1.0, -0.5], [2.0, 3.0], (0.0, 0.0))
    assert np.allclose(acc.sums, ref, rtol=0, atol=1e-12)


def test_removing_everything_restores_zero(rng):
    xs, ys = rng.uniform(-2, 2, 30), rng.uniform(-2, 2, 30)
    acc = ScatterAccumulator().extend(xs, ys)
    for x, y in zip(xs, ys):
        acc.remove(x, y)
    assert acc.n == 0
    assert np.max(np.abs(acc.sums)) < 1e-12


def test_remove_from_empty_raises():
    with pytest.raises(ValueError):
        ScatterAccumulator().remove(0.0, 0.0)


def test_non_finite_point_rejected():
    with pytest.raises(ValueError):
        ScatterAccumulator().add(math.nan, 0.0)


def test_round_trip_theta_30():
    conic = from_geometric(5.0, -2.0, 3.0, 1.0, math.radians(30))
    e = to_geometric(conic)
    assert e.cx == pytest.approx(5.0, abs=1e-9)
    assert e.cy == pytest.approx(-2.0, abs=1e-9)
    assert e.r_major == pytest.approx(3.0, abs=1e-9)
    assert e.r_minor == pytest.approx(1.0, abs=1e-9)
    assert e.theta == pytest.approx(math.radians(30), abs=1e-9)


def test_exact_fit_of_rotated_ellipse():
    xs, ys, _ = sample_ellipse_2d(3.0, 1.0, arc=200.0, count=40, center=(5.0, -2.0), theta=0.5)
    e = to_geometric(fit(ScatterAccumulator().extend(xs, ys)))
    assert (e.cx, e.cy, e.r_major, e.r_minor) == pytest.approx((5.0, -2.0, 3.0, 1.0), abs=1e-9)
    assert e.theta == pytest.approx(0.5, abs=1e-9)


def test_fit_needs_six_points():
    xs, ys, _ = sample_ellipse_2d(3.0, 1.0, count=6)
    acc = ScatterAccumulator().extend(xs[:5], ys[:5])
    with pytest.raises(FitError):
        fit(acc)


def test_collinear_points_fail():
    acc = ScatterAccumulator().extend(np.arange(10.0), 2.0 * np.arange(10.0) + 1.0)
    with pytest.raises(FitError):
        fit(acc)


def test_hyperbola_data_still_yields_ellipse(rng):
    t = np.linspace(-2, 2, 40)
    xs, ys = np.cosh(t), np.sinh(t)
    try:
        conic = fit(ScatterAccumulator().extend(xs, ys))
    except FitError:
        return
    assert conic.discriminant < 0


def test_residual_is_aggregate_sampson():
    # sqrt(sum F^2 / sum |grad F|^2), computable from the power sums alone
    xs, ys, _ = sample_ellipse_2d(2.0, 1.0, count=60, sigma=0.01, seed=3)
    conic, res = ScatterAccumulator().extend(xs, ys).fit_with_residual()
    a, b, c, d, e, f = conic.as_array()
    val = conic(xs, ys)
    g = np.hypot(2 * a * xs + b * ys + d, b * xs + 2 * c * ys + e)
    assert res == pytest.approx(np.sqrt(np.sum(val ** 2) / np.sum(g ** 2)), rel=1e-6)
    # close to the per-point Sampson RMS for near-uniform gradients
    assert res == pytest.approx(np.sqrt(np.mean((val / g) ** 2)), rel=0.1)


def test_circle_fit():
    phi = np.linspace(0, 2, 25)
    acc = ScatterAccumulator().extend(1.0 + 0.5 * np.cos(phi), -3.0 + 0.5 * np.sin(phi))
    cx, cy, r, res = fit_circle(acc)
    assert (cx, cy, r) == pytest.approx((1.0, -3.0, 0.5), abs=1e-9)
    assert res < 1e-9


def test_point_error_against_dense_sampling(rng):
    e = to_geometric(from_geometric(0.3, -0.2, 2.0, 0.7, 0.4))
    phi = np.linspace(0, 2 * np.pi, 200001)
    ct, st = math.cos(e.theta), math.sin(e.theta)
    bx = e.cx + ct * e.r_major * np.cos(phi) - st * e.r_minor * np.sin(phi)
    by = e.cy + st * e.r_major * np.cos(phi) + ct * e.r_minor * np.sin(phi)
    pts = rng.uniform(-3, 3, (200, 2))
    exact = point_errors(e, pts[:, 0], pts[:, 1])
    brute = np.array([np.min(np.hypot(bx - x, by - y)) for x, y in pts])
    assert np.all(np.abs(exact - brute) <= 0.02 * e.r_minor)


def test_point_error_special_cases():
    e = to_geometric(from_geometric(0.0, 0.0, 2.0, 1.0, 0.0))
    assert point_error(e, 0.0, 0.0) == pytest.approx(1.0)
    assert point_error(e, 3.0, 0.0) == pytest.approx(1.0)
    assert point_error(e, 0.0, 1.0) == pytest.approx(0.0, abs=1e-12)


def test_warm_start_matches_cold_solve(rng):
    xs, ys, _ = sample_ellipse_2d(1.0, 0.4, arc=220, count=80, sigma=0.01, seed=1)
    s = np.zeros(_kernels.NSUMS)
    state = np.full(1, np.nan)
    warm, cold = np.zeros(6), np.zeros(6)
    for i, (x, y) in enumerate(zip(xs - xs[0], ys - ys[0])):
        _kernels.sums_update(s, x, y, 1.0)
        if i < 6:
            continue
        rw = _kernels.solve_conic_warm(s, warm, state)
        rc = _kernels.solve_conic(s, cold)
        assert rw == pytest.approx(rc, rel=1e-9, abs=1e-15)
        wn = warm / np.linalg.norm(warm) * np.sign(warm[0] + warm[2])
        cn = cold / np.linalg.norm(cold) * np.sign(cold[0] + cold[2])
        assert np.allclose(wn, cn, atol=1e-9)
