"""Direct least-squares ellipse fitting with O(1) point insertion and removal.

The fit follows the ellipse-specific direct method in its numerically
stable block form: the 6x6 scatter matrix is split into quartic (S1),
cubic (S2) and quadratic/linear (S3) blocks, the linear part is
eliminated through S3, and the remaining 3x3 pencil is solved for the
single eigenvector with ``4ac - b^2 > 0``. Everything the solve needs is a
function of 15 running power sums, so adding or removing a point costs a
fixed number of flops.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels

__all__ = [
    "FitError",
    "ScatterAccumulator",
    "ConicCoefficients",
    "GeometricEllipse2D",
    "batch_sums",
    "fit",
    "fit_circle",
    "to_geometric",
    "from_geometric",
    "point_error",
    "point_errors",
    "MIN_FIT_POINTS",
]

MIN_FIT_POINTS = 6

SUM_NAMES = (
    "x4", "x3y", "x2y2", "xy3", "y4",
    "x3", "x2y", "xy2", "y3",
    "x2", "xy", "y2", "x", "y", "n",
)


class FitError(ValueError):
    """No ellipse (or circle) can be fitted to the accumulated points."""


@dataclass(frozen=True)
class ConicCoefficients:
    """``a x^2 + b xy + c y^2 + d x + e y + f = 0``."""

    a: float
    b: float
    c: float
    d: float
    e: float
    f: float

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c, self.d, self.e, self.f])

    def normalized(self) -> "ConicCoefficients":
        """Unit coefficient vector with ``a + c > 0``."""
        v = self.as_array()
        v = v / np.linalg.norm(v)
        if v[0] + v[2] < 0:
            v = -v
        return ConicCoefficients(*v)

    @property
    def discriminant(self) -> float:
        return self.b * self.b - 4.0 * self.a * self.c

    def __call__(self, x, y):
        return (
            self.a * x * x + self.b * x * y + self.c * y * y
            + self.d * x + self.e * y + self.f
        )

    def translated(self, tx: float, ty: float) -> "ConicCoefficients":
        """The same curve shifted by ``(tx, ty)``."""
        a, b, c, d, e, f = self.a, self.b, self.c, self.d, self.e, self.f
        return ConicCoefficients(
            a,
            b,
            c,
            d - 2.0 * a * tx - b * ty,
            e - b * tx - 2.0 * c * ty,
            f + a * tx * tx + b * tx * ty + c * ty * ty - d * tx - e * ty,
        )


@dataclass(frozen=True)
class GeometricEllipse2D:
    cx: float
    cy: float
    r_major: float
    r_minor: float
    theta: float
    half_x: float = float("nan")
    half_y: float = float("nan")

    @property
    def ratio(self) -> float:
        return self.r_minor / self.r_major


class ScatterAccumulator:
    """Running power sums of ``(x - ox, y - oy)`` over a point set.

    The offset defaults to the first point added, which keeps quartic sums
    well scaled for coordinates far from the origin.
    """

    __slots__ = ("sums", "ox", "oy", "_fixed_origin")

    def __init__(self, origin: tuple[float, float] | None = None):
        self.sums = np.zeros(_kernels.NSUMS)
        self._fixed_origin = origin is not None
        self.ox, self.oy = (float(origin[0]), float(origin[1])) if origin else (0.0, 0.0)

    @property
    def n(self) -> int:
        return int(self.sums[14])

    def __len__(self):
        return self.n

    def __getitem__(self, name: str) -> float:
        return float(self.sums[SUM_NAMES.index(name)])

    def as_dict(self) -> dict[str, float]:
        return {k: float(v) for k, v in zip(SUM_NAMES, self.sums)}

    def copy(self) -> "ScatterAccumulator":
        other = ScatterAccumulator.__new__(ScatterAccumulator)
        other.sums = self.sums.copy()
        other.ox, other.oy = self.ox, self.oy
        other._fixed_origin = self._fixed_origin
        return other

    def add(self, x: float, y: float) -> "ScatterAccumulator":
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ValueError("point coordinates must be finite")
        if self.sums[14] == 0 and not self._fixed_origin:
            self.ox, self.oy = float(x), float(y)
        _kernels.sums_update(self.sums, x - self.ox, y - self.oy, 1.0)
        return self

    def remove(self, x: float, y: float) -> "ScatterAccumulator":
        if self.sums[14] <= 0:
            raise ValueError("cannot remove a point from an empty accumulator")
        _kernels.sums_update(self.sums, x - self.ox, y - self.oy, -1.0)
        return self

    def extend(self, xs, ys) -> "ScatterAccumulator":
        for x, y in zip(np.asarray(xs, float), np.asarray(ys, float)):
            self.add(x, y)
        return self

    def fit(self) -> ConicCoefficients:
        return fit(self)

    def fit_with_residual(self) -> tuple[ConicCoefficients, float]:
        """Conic in world coordinates plus its RMS Sampson residual."""
        if self.n < MIN_FIT_POINTS:
            raise FitError(f"need at least {MIN_FIT_POINTS} points, have {self.n}")
        coef = np.zeros(6)
        res = _kernels.solve_conic(self.sums, coef)
        if res < 0:
            raise FitError("degenerate point set: no ellipse fit")
        return ConicCoefficients(*coef).translated(self.ox, self.oy), res


def batch_sums(xs, ys, origin: tuple[float, float] | None = None) -> np.ndarray:
    """Power sums computed from scratch, same layout as ``ScatterAccumulator.sums``."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if origin is None:
        origin = (x[0], y[0]) if x.size else (0.0, 0.0)
    x = x - origin[0]
    y = y - origin[1]
    powers = [(4, 0), (3, 1), (2, 2), (1, 3), (0, 4), (3, 0), (2, 1), (1, 2), (0, 3),
              (2, 0), (1, 1), (0, 2), (1, 0), (0, 1), (0, 0)]
    return np.array([np.sum(x ** p * y ** q) for p, q in powers])


def fit(acc: ScatterAccumulator) -> ConicCoefficients:
    """Ellipse-specific least-squares conic of the accumulated points.

    Raises
    ------
    FitError
        Fewer than six points, a singular linear block (collinear points),
        or no eigenvector satisfying the ellipse constraint.
    """
    return acc.fit_with_residual()[0]


def fit_circle(acc: ScatterAccumulator) -> tuple[float, float, float, float]:
    """Algebraic circle fit from the same power sums.

    Returns ``(cx, cy, radius, rms_residual)`` in world coordinates.
    """
    if acc.n < 3:
        raise FitError("need at least 3 points for a circle")
    out = np.zeros(4)
    if not _kernels.circle_from_sums(acc.sums, out):
        raise FitError("collinear or coincident points: no circle fit")
    return out[0] + acc.ox, out[1] + acc.oy, out[2], out[3]


def to_geometric(conic: ConicCoefficients) -> GeometricEllipse2D:
    if not conic.discriminant < 0:
        raise FitError("conic is not an ellipse (b^2 - 4ac >= 0)")
    out = np.zeros(7)
    if not _kernels.conic_to_geometric(conic.as_array(), out):
        raise FitError("conic has no real points")
    return GeometricEllipse2D(*out)


def from_geometric(cx, cy, r_major, r_minor, theta) -> ConicCoefficients:
    """Implicit coefficients of a geometric ellipse."""
    ct, st = math.cos(theta), math.sin(theta)
    ia, ib = 1.0 / r_major ** 2, 1.0 / r_minor ** 2
    a = ct * ct * ia + st * st * ib
    c = st * st * ia + ct * ct * ib
    b = 2.0 * ct * st * (ia - ib)
    return ConicCoefficients(a, b, c, 0.0, 0.0, -1.0).translated(cx, cy)


def point_errors(e: GeometricEllipse2D, xs, ys, iterations: int = 64) -> np.ndarray:
    """Orthogonal distances from points to the ellipse boundary.

    Exact up to bisection tolerance; circles use the closed form.
    """
    x = np.asarray(xs, dtype=np.float64) - e.cx
    y = np.asarray(ys, dtype=np.float64) - e.cy
    ct, st = math.cos(e.theta), math.sin(e.theta)
    # coordinates in the ellipse frame, folded into the first quadrant
    u = np.abs(ct * x + st * y)
    v = np.abs(-st * x + ct * y)
    a, b = e.r_major, e.r_minor
    if a - b <= 1e-12 * a:
        return np.abs(np.hypot(u, v) - a)
    # root of F(t) = (a u / (t + a^2))^2 + (b v / (t + b^2))^2 - 1 on t > -b^2
    lo = -b * b + b * v
    hi = -b * b + np.sqrt(a * a * u * u + b * b * v * v)
    lo = np.minimum(lo, hi)
    for _ in range(iterations):
        t = 0.5 * (lo + hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            f = (a * u / (t + a * a)) ** 2 + (b * v / (t + b * b)) ** 2 - 1.0
        pos = f > 0
        lo = np.where(pos, t, lo)
        hi = np.where(pos, hi, t)
    t = 0.5 * (lo + hi)
    with np.errstate(divide="ignore", invalid="ignore"):
        px = a * a * u / (t + a * a)
        py = b * b * v / (t + b * b)
    dist = np.hypot(u - px, v - py)
    # points on the minor axis inside the ellipse fall back to the axis distance
    degenerate = ~np.isfinite(dist)
    if np.any(degenerate):
        dist = np.where(degenerate, np.abs(b - v), dist)
    # interior points near the major axis: the nearest point may be off-axis
    inner = (v == 0) & (u < (a * a - b * b) / a)
    if np.any(inner):
        ux = a * a * u / (a * a - b * b)
        uy = b * np.sqrt(np.clip(1.0 - (ux / a) ** 2, 0.0, None))
        dist = np.where(inner, np.hypot(u - ux, uy), dist)
    return dist


def point_error(e: GeometricEllipse2D, x: float, y: float) -> float:
    return float(point_errors(e, np.array([x]), np.array([y]))[0])
