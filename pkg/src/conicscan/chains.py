"""Grouping of row ellipses into vertically ordered chains.

Ellipses are linked top to bottom: an ellipse in row ``r`` links to the
closest-center ellipse within ``phi`` among the next ``k`` rows. Skipping
rows lets a chain bridge isolated bad fits. Each chain then gets a center
model, a 3D line (cylinders, cones) or a circle (spheres), fitted from
running moments.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, replace

import numpy as np

from .ellipse_fit import FitError, ScatterAccumulator, fit_circle
from .geometry import Ellipse

__all__ = [
    "ChainConfig",
    "Line3D",
    "Circle3D",
    "EllipseChain",
    "MomentAccumulator3D",
    "build_components",
    "fit_center_line",
    "fit_center_circle",
]


@dataclass(frozen=True)
class ChainConfig:
    """``phi`` in meters (3D center distance), ``k_neighbors`` rows of look-ahead."""

    phi: float = 0.05
    k_neighbors: int = 3
    min_chain: int = 3

    def __post_init__(self):
        if not self.phi > 0:
            raise ValueError("phi must be positive")
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be at least 1")
        if self.min_chain < 3:
            raise ValueError("min_chain must be at least 3")


@dataclass(frozen=True)
class Line3D:
    anchor: tuple[float, float, float]
    direction: tuple[float, float, float]

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        n = float(np.linalg.norm(d))
        if not n > 0:
            raise ValueError("line direction must be nonzero")
        object.__setattr__(self, "direction", tuple(float(v) for v in d / n))
        object.__setattr__(self, "anchor", tuple(float(v) for v in self.anchor))

    def point_at(self, s) -> np.ndarray:
        """Point(s) at signed arc length ``s`` from the anchor."""
        s = np.asarray(s, dtype=float)
        return np.asarray(self.anchor) + s[..., None] * np.asarray(self.direction)

    def project(self, points) -> np.ndarray:
        """Signed arc length of the orthogonal projection of ``points``."""
        p = np.asarray(points, dtype=float) - np.asarray(self.anchor)
        return p @ np.asarray(self.direction)

    def distance(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float) - np.asarray(self.anchor)
        along = p @ np.asarray(self.direction)
        return np.linalg.norm(p - along[..., None] * np.asarray(self.direction), axis=-1)


@dataclass(frozen=True)
class Circle3D:
    center: tuple[float, float, float]
    normal: tuple[float, float, float]
    radius: float


@dataclass(frozen=True)
class EllipseChain:
    """Ellipses of one connected component, ordered by row."""

    ellipses: tuple[Ellipse, ...]
    center_model: Line3D | Circle3D | None = None
    residual: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "ellipses", tuple(self.ellipses))
        rows = [e.row for e in self.ellipses]
        if any(b <= a for a, b in zip(rows, rows[1:])):
            raise ValueError("chain rows must be strictly increasing")

    def __len__(self):
        return len(self.ellipses)

    @property
    def rows(self) -> np.ndarray:
        return np.array([e.row for e in self.ellipses])

    @property
    def centers(self) -> np.ndarray:
        return np.array([e.center for e in self.ellipses], dtype=float).reshape(-1, 3)

    @property
    def radii(self) -> np.ndarray:
        return np.array([e.r2 for e in self.ellipses], dtype=float)

    def with_model(self, model, residual: float) -> "EllipseChain":
        return replace(self, center_model=model, residual=float(residual))


class MomentAccumulator3D:
    """Running first and second moments of 3D points, offset by the first point."""

    __slots__ = ("n", "origin", "s1", "s2")

    def __init__(self):
        self.n = 0
        self.origin = np.zeros(3)
        self.s1 = np.zeros(3)
        self.s2 = np.zeros((3, 3))

    def add(self, p) -> "MomentAccumulator3D":
        p = np.asarray(p, dtype=float)
        if self.n == 0:
            self.origin = p.copy()
        q = p - self.origin
        self.n += 1
        self.s1 += q
        self.s2 += np.outer(q, q)
        return self

    def extend(self, points) -> "MomentAccumulator3D":
        """Add many points at once (same sums as repeated :meth:`add`)."""
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        if len(pts) == 0:
            return self
        if self.n == 0:
            self.origin = pts[0].copy()
        q = pts - self.origin
        self.n += len(pts)
        self.s1 += q.sum(axis=0)
        self.s2 += q.T @ q
        return self

    @property
    def mean(self) -> np.ndarray:
        return self.origin + self.s1 / self.n

    def scatter(self) -> np.ndarray:
        """Sum of outer products of centered points."""
        m = self.s1 / self.n
        return self.s2 - self.n * np.outer(m, m)


def _line_from_moments(acc: MomentAccumulator3D) -> tuple[Line3D, float]:
    if acc.n < 2:
        raise FitError("need at least two centers for a line")
    w, v = np.linalg.eigh(acc.scatter())
    if not w[2] > 1e-12 * max(1.0, float(np.abs(acc.s2).max())):
        raise FitError("coincident centers: line direction undefined")
    d = v[:, 2]
    # orient along the chain (first to last point)
    if d @ acc.s1 < 0:
        d = -d
    rms = float(np.sqrt(max(w[0] + w[1], 0.0) / acc.n))
    return Line3D(tuple(acc.mean), tuple(d)), rms


def fit_center_line(chain) -> tuple[Line3D, float]:
    """Total least-squares 3D line through the chain's centers.

    ``chain`` is an :class:`EllipseChain` or an ``(n, 3)`` array of points.
    The direction points from the first center toward the last; the
    residual is the RMS orthogonal distance.
    """
    pts = chain.centers if isinstance(chain, EllipseChain) else np.asarray(chain, float)
    if len(pts) < 3:
        raise FitError("need at least three centers")
    return _line_from_moments(MomentAccumulator3D().extend(pts))


def fit_center_circle(chain) -> tuple[Circle3D, float]:
    """Circle through the chain's centers, fitted in their best-fit plane.

    Raises
    ------
    FitError
        Collinear centers (no finite circle).
    """
    pts = chain.centers if isinstance(chain, EllipseChain) else np.asarray(chain, float)
    if len(pts) < 3:
        raise FitError("need at least three centers")
    acc = MomentAccumulator3D().extend(pts)
    w, v = np.linalg.eigh(acc.scatter())
    e1, e2, normal = v[:, 2], v[:, 1], v[:, 0]
    mean = acc.mean
    if not w[1] > 1e-12 * max(1.0, w[2]):
        raise FitError("collinear centers: no circle")
    q = pts - mean
    u, t = q @ e1, q @ e2
    cu, ct, radius, _ = fit_circle(ScatterAccumulator().extend(u, t))
    dist = np.hypot(u - cu, t - ct) - radius
    off = q @ normal
    rms = float(np.sqrt(np.mean(dist ** 2 + off ** 2)))
    center = mean + cu * e1 + ct * e2
    return Circle3D(tuple(center), tuple(normal), float(radius)), rms


@dataclass
class _Node:
    ellipse: Ellipse
    next: int = -1
    has_prev: bool = False


def build_components(ellipses, cfg: ChainConfig = ChainConfig()) -> list[EllipseChain]:
    """Greedy vertical linking of ellipses into chains.

    Ellipses are visited by row, then column. Each links to the closest
    not-yet-claimed ellipse whose center lies within ``phi`` in one of the
    next ``k_neighbors`` rows; ties go to the smaller row gap, then the
    smaller distance. Chains shorter than ``min_chain`` are dropped.
    """
    order = sorted(ellipses, key=lambda e: (e.row, e.u_start, e.center[0]))
    nodes = [_Node(e) for e in order]
    by_row: dict[int, list[int]] = defaultdict(list)
    for i, nd in enumerate(nodes):
        by_row[nd.ellipse.row].append(i)
    centers = [e.center for e in order]
    for i, nd in enumerate(nodes):
        row = nd.ellipse.row
        best = None
        for gap in range(1, cfg.k_neighbors + 1):
            for j in by_row.get(row + gap, ()):
                if nodes[j].has_prev:
                    continue
                dist = math.dist(centers[j], centers[i])
                if dist <= cfg.phi and (best is None or dist < best[0]):
                    best = (dist, j)
            # nearest row gap wins before distance
            if best is not None:
                break
        if best is not None:
            nd.next = best[1]
            nodes[best[1]].has_prev = True
    chains = []
    for i, nd in enumerate(nodes):
        if nd.has_prev:
            continue
        members = []
        j = i
        while j >= 0:
            members.append(nodes[j].ellipse)
            j = nodes[j].next
        if len(members) >= cfg.min_chain:
            chains.append(EllipseChain(tuple(members)))
    return chains
