"""Synthetic range scenes rendered by per-pixel ray casting.

Camera frame: X right, Y down, Z forward (meters). Scenes are plain
dataclasses and serialize to/from YAML (see :func:`scene_to_dict`).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import yaml

from .geometry import CameraIntrinsics, DepthFrame, default_intrinsics

__all__ = [
    "Sphere",
    "Cylinder",
    "Cone",
    "Plane",
    "Occluder",
    "SceneSpec",
    "render",
    "sample_ellipse_2d",
    "cylinder_wall_slice",
    "rotation",
    "trash_can",
    "parking_cone",
    "exercise_ball",
    "floor_plane",
    "back_wall",
    "paper_scene",
    "sphere_on_cylinder_scene",
    "scene_to_dict",
    "scene_from_dict",
    "load_scene",
    "dump_scene",
]

UP = (0.0, -1.0, 0.0)
FLOOR_Y = 0.7


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


def rotation(tilt_toward_camera: float = 0.0, tilt_in_image: float = 0.0) -> np.ndarray:
    """Rotation applied to an upright axis; angles in degrees.

    ``tilt_toward_camera`` turns the top toward the camera (about X);
    ``tilt_in_image`` turns it about the optical axis, clockwise in the image.
    """
    a = math.radians(tilt_toward_camera)
    b = math.radians(tilt_in_image)
    rx = np.array([[1, 0, 0], [0, math.cos(a), -math.sin(a)], [0, math.sin(a), math.cos(a)]])
    rz = np.array([[math.cos(b), -math.sin(b), 0], [math.sin(b), math.cos(b), 0], [0, 0, 1]])
    return rz @ rx


@dataclass
class Sphere:
    center: tuple[float, float, float]
    radius: float
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    kind: str = "sphere"


@dataclass
class Cylinder:
    """Closed cylinder from ``base`` along unit ``axis`` for ``height``."""

    base: tuple[float, float, float]
    axis: tuple[float, float, float]
    radius: float
    height: float
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    kind: str = "cylinder"


@dataclass
class Cone:
    """Closed (optionally truncated) cone.

    ``base`` is the center of the wide end; ``axis`` points from the base
    toward the apex. The surface spans ``height`` along the axis and the
    radius shrinks linearly from ``base_radius`` to ``top_radius``.
    """

    base: tuple[float, float, float]
    axis: tuple[float, float, float]
    base_radius: float
    height: float
    top_radius: float = 0.0
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    kind: str = "cone"

    @property
    def half_angle(self) -> float:
        return math.atan((self.base_radius - self.top_radius) / self.height)

    @property
    def apex(self) -> np.ndarray:
        full = self.base_radius / math.tan(self.half_angle)
        return np.asarray(self.base) + full * _unit(self.axis)


@dataclass
class Plane:
    point: tuple[float, float, float]
    normal: tuple[float, float, float]
    kind: str = "plane"


@dataclass
class Occluder:
    """Hide ``fraction`` of object ``target``'s angular width behind a panel.

    The panel is vertical, ``gap`` meters in front of the object's nearest
    surface, and covers the object from the given ``side`` ("left" or
    "right" in the image).
    """

    target: int
    fraction: float
    side: str = "left"
    gap: float = 0.15


@dataclass
class SceneSpec:
    objects: list = field(default_factory=list)
    planes: list = field(default_factory=list)
    noise_sigma: float = 0.0
    noise_slope: float = 0.0
    occluders: list = field(default_factory=list)
    max_range: float = 8.0
    seed: int = 0

    def __post_init__(self):
        if self.noise_sigma < 0 or self.noise_slope < 0:
            raise ValueError("noise must be non-negative")
        for occ in self.occluders:
            if not 0 <= occ.fraction < 1:
                raise ValueError("occlusion fraction must lie in [0, 1)")

    def scaled(self, s: float) -> "SceneSpec":
        """The same scene with every length multiplied by ``s``."""
        def sc(o):
            d = asdict(o)
            for k in ("center", "base", "point", "velocity"):
                if k in d:
                    d[k] = tuple(s * np.asarray(d[k]))
            for k in ("radius", "height", "base_radius", "top_radius"):
                if k in d:
                    d[k] = s * d[k]
            return type(o)(**d)

        return SceneSpec(
            [sc(o) for o in self.objects], [sc(p) for p in self.planes],
            self.noise_sigma * s, self.noise_slope, list(self.occluders),
            self.max_range * s, self.seed,
        )


# ------------------------------------------------------------ ray casting


def _rays(k: CameraIntrinsics) -> np.ndarray:
    u = (np.arange(k.width) - k.cx) / k.fx
    v = (np.arange(k.height) - k.cy) / k.fy
    d = np.empty((k.height, k.width, 3))
    d[..., 0] = u[None, :]
    d[..., 1] = v[:, None]
    d[..., 2] = 1.0
    return d


def _closest(best, t):
    ok = np.isfinite(t) & (t > 1e-9)
    return np.where(ok & (t < best), t, best)


def _quadratic_roots(qa, qb, qc):
    """Roots of ``qa t^2 + 2 qb t + qc``; NaN when complex."""
    disc = qb * qb - qa * qc
    with np.errstate(invalid="ignore", divide="ignore"):
        sq = np.sqrt(np.where(disc >= 0, disc, np.nan))
        # numerically stable pair
        q = -(qb + np.copysign(sq, qb))
        t1 = q / qa
        t2 = qc / q
    return np.minimum(t1, t2), np.maximum(t1, t2)


def _disk(d, center, normal, radius):
    dn = d @ normal
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (center @ normal) / dn
    p = d * t[..., None] - center
    inside = np.einsum("...i,...i->...", p, p) <= radius * radius
    return np.where(inside, t, np.inf)


def _hit_sphere(d, obj, offset):
    c = np.asarray(obj.center) + offset
    qa = np.einsum("...i,...i->...", d, d)
    qb = -(d @ c)
    qc = c @ c - obj.radius ** 2
    t1, _ = _quadratic_roots(qa, qb, qc)
    return np.where(np.isnan(t1), np.inf, t1)


def _hit_cylinder(d, obj, offset):
    a = _unit(obj.axis)
    base = np.asarray(obj.base) + offset
    q = -base
    dpar = d @ a
    dperp = d - dpar[..., None] * a
    qperp = q - (q @ a) * a
    qa = np.einsum("...i,...i->...", dperp, dperp)
    qb = dperp @ qperp
    qc = qperp @ qperp - obj.radius ** 2
    t1, t2 = _quadratic_roots(qa, qb, qc)
    best = np.full(d.shape[:-1], np.inf)
    for t in (t1, t2):
        s = t * dpar + q @ a
        best = _closest(best, np.where((s >= 0) & (s <= obj.height), t, np.inf))
    best = _closest(best, _disk(d, base, a, obj.radius))
    best = _closest(best, _disk(d, base + obj.height * a, a, obj.radius))
    return best


def _hit_cone(d, obj, offset):
    up = _unit(obj.axis)
    apex = obj.apex + offset
    a = -up  # apex toward base
    full = np.linalg.norm(np.asarray(obj.base) + offset - apex)
    s_top = full - obj.height
    cos2 = math.cos(obj.half_angle) ** 2
    q = -apex
    da = d @ a
    qa_ = q @ a
    qa = da * da - cos2 * np.einsum("...i,...i->...", d, d)
    qb = da * qa_ - cos2 * (d @ q)
    qc = qa_ * qa_ - cos2 * (q @ q)
    t1, t2 = _quadratic_roots(qa, qb, qc)
    best = np.full(d.shape[:-1], np.inf)
    for t in (t1, t2):
        s = t * da + qa_
        best = _closest(best, np.where((s >= s_top) & (s <= full), t, np.inf))
    base = np.asarray(obj.base) + offset
    best = _closest(best, _disk(d, base, a, obj.base_radius))
    if obj.top_radius > 0:
        best = _closest(best, _disk(d, apex + s_top * a, a, obj.top_radius))
    return best


def _hit_plane(d, obj):
    n = _unit(obj.normal)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (np.asarray(obj.point) @ n) / (d @ n)
    return np.where(np.isfinite(t) & (t > 0), t, np.inf)


_HIT = {"sphere": _hit_sphere, "cylinder": _hit_cylinder, "cone": _hit_cone}


def object_bearing(obj, offset=np.zeros(3)) -> tuple[float, float, float]:
    """Horizontal bearing interval ``(left, right)`` of an upright object and its depth."""
    if obj.kind == "sphere":
        c = np.asarray(obj.center) + offset
        r = obj.radius
    elif obj.kind == "cylinder":
        c = np.asarray(obj.base) + offset
        r = obj.radius
    else:
        c = np.asarray(obj.base) + offset
        r = obj.base_radius
    rho = math.hypot(c[0], c[2])
    mid = math.atan2(c[0], c[2])
    half = math.asin(min(1.0, r / rho))
    return mid - half, mid + half, c[2] - r


def _hit_occluder(d, occ: Occluder, scene: SceneSpec, offsets):
    obj = scene.objects[occ.target]
    left, right, near = object_bearing(obj, offsets[occ.target])
    z = near - occ.gap
    if occ.side == "left":
        edge = math.tan(left + occ.fraction * (right - left))
        covered = d[..., 0] <= edge * d[..., 2]
    else:
        edge = math.tan(right - occ.fraction * (right - left))
        covered = d[..., 0] >= edge * d[..., 2]
    return np.where(covered & (occ.fraction > 0), z / d[..., 2], np.inf)


def render(scene: SceneSpec, intrinsics: CameraIntrinsics | None = None, t: float = 0.0) -> DepthFrame:
    """Depth frame of ``scene`` at time ``t`` (objects move with their velocity)."""
    k = intrinsics or default_intrinsics()
    d = _rays(k)
    best = np.full((k.height, k.width), np.inf)
    offsets = [np.asarray(getattr(o, "velocity", (0, 0, 0)), float) * t for o in scene.objects]
    for obj, off in zip(scene.objects, offsets):
        best = np.minimum(best, _HIT[obj.kind](d, obj, off))
    for pl in scene.planes:
        best = np.minimum(best, _hit_plane(d, pl))
    for occ in scene.occluders:
        best = np.minimum(best, _hit_occluder(d, occ, scene, offsets))
    norm = np.sqrt(np.einsum("...i,...i->...", d, d))
    rng_m = best * norm
    valid = np.isfinite(best) & (rng_m <= scene.max_range)
    if scene.noise_sigma > 0 or scene.noise_slope > 0:
        rng = np.random.default_rng([scene.seed, int(round(t * 1e6))])
        sigma = scene.noise_sigma + scene.noise_slope * np.where(valid, rng_m, 0.0)
        noisy = rng_m + rng.standard_normal(rng_m.shape) * sigma
        best = np.where(valid, best * noisy / np.where(valid, rng_m, 1.0), best)
        valid &= best > 0
    depth = np.where(valid, best, np.nan)
    return DepthFrame(k, depth, t)


# --------------------------------------------------------------- presets


def _on_floor(x, z, rot):
    return (x, FLOOR_Y, z), tuple(rot @ np.asarray(UP))


def trash_can(x=0.0, z=1.5, radius=0.2, height=0.6, tilt_toward_camera=0.0, tilt_in_image=0.0,
              velocity=(0.0, 0.0, 0.0)) -> Cylinder:
    base, axis = _on_floor(x, z, rotation(tilt_toward_camera, tilt_in_image))
    return Cylinder(base, axis, radius, height, tuple(velocity))


def parking_cone(x=0.0, z=1.5, base_radius=0.2, height=0.7, top_radius=0.03,
                 tilt_toward_camera=0.0, tilt_in_image=0.0) -> Cone:
    base, axis = _on_floor(x, z, rotation(tilt_toward_camera, tilt_in_image))
    return Cone(base, axis, base_radius, height, top_radius)


def exercise_ball(x=0.0, z=2.0, radius=0.36, velocity=(0.0, 0.0, 0.0)) -> Sphere:
    return Sphere((x, FLOOR_Y - radius, z), radius, tuple(velocity))


def floor_plane() -> Plane:
    return Plane((0.0, FLOOR_Y, 0.0), (0.0, 1.0, 0.0))


def back_wall(z=4.0) -> Plane:
    return Plane((0.0, 0.0, z), (0.0, 0.0, 1.0))


def paper_scene(noise_sigma=0.005, seed=0) -> SceneSpec:
    """Trash can, parking cone and exercise ball standing on a floor."""
    return SceneSpec(
        objects=[trash_can(-0.8, 2.2), parking_cone(0.05, 2.0), exercise_ball(0.85, 2.4)],
        planes=[floor_plane(), back_wall(4.0)],
        noise_sigma=noise_sigma,
        seed=seed,
    )


def sphere_on_cylinder_scene(noise_sigma=0.005, seed=0) -> SceneSpec:
    """A ball resting on top of a trash can."""
    can = trash_can(0.0, 1.8, radius=0.2, height=0.5)
    top = FLOOR_Y - 0.5
    ball = Sphere((0.0, top - 0.15, 1.8), 0.15)
    return SceneSpec([can, ball], [floor_plane(), back_wall(4.0)], noise_sigma, seed=seed)


# ------------------------------------------------------------ 2D slices


def sample_ellipse_2d(r_major, r_minor, arc=360.0, sigma=0.0, count=100, seed=0,
                      center=(0.0, 0.0), theta=0.0, start=0.0, background=None):
    """Ordered points on an elliptic arc with Gaussian noise.

    ``arc`` and ``start`` are in degrees of the parametric angle.
    ``background`` is an optional list of ``((x0, y0), (x1, y1), count)``
    line segments appended after the arc. Returns ``(xs, ys, labels)``
    with label 1 for arc points and 0 for background.
    """
    if count < 6:
        raise ValueError("count must be at least 6")
    rng = np.random.default_rng(seed)
    closed = abs(arc - 360.0) < 1e-12
    phi = np.radians(start) + np.radians(arc) * (
        np.arange(count) / count if closed else np.linspace(0.0, 1.0, count)
    )
    ex, ey = r_major * np.cos(phi), r_minor * np.sin(phi)
    ct, st = math.cos(theta), math.sin(theta)
    xs = center[0] + ct * ex - st * ey
    ys = center[1] + st * ex + ct * ey
    labels = np.ones(count, dtype=int)
    if background:
        bx, by = [xs], [ys]
        for (x0, y0), (x1, y1), n in background:
            s = np.linspace(0.0, 1.0, n)
            bx.append(x0 + s * (x1 - x0))
            by.append(y0 + s * (y1 - y0))
        xs = np.concatenate(bx)
        ys = np.concatenate(by)
        labels = np.concatenate([labels, np.zeros(len(xs) - count, dtype=int)])
    if sigma > 0:
        xs = xs + rng.normal(0.0, sigma, xs.shape)
        ys = ys + rng.normal(0.0, sigma, ys.shape)
    return xs, ys, labels


def cylinder_wall_slice(sigma=0.005, seed=0, inlier_ratio=0.3, count=200,
                        r_lateral=0.3, r_depth=0.15, center_depth=1.5, wall_depth=2.0,
                        wall_half_width=1.2):
    """Scan-ordered 2D slice of a stretched cylinder in front of a wall.

    The sensor sits at the origin looking along +y. The cylinder's visible
    front arc carries ``inlier_ratio`` of the points; the wall behind it
    supplies the rest. Points are sorted by bearing, as a range scanner
    would deliver them. Returns ``(xs, ys, labels)``.
    """
    rng = np.random.default_rng(seed)
    n_arc = int(round(inlier_ratio * count))
    n_wall = count - n_arc
    # front arc: parametric angles facing the sensor
    phi = np.linspace(math.pi * 1.08, math.pi * 1.92, n_arc)
    ax = r_lateral * np.cos(phi)
    ay = center_depth + r_depth * np.sin(phi)
    # wall points outside the cylinder's shadow
    left_edge = math.atan2(-r_lateral, center_depth)
    right_edge = math.atan2(r_lateral, center_depth)
    ang = np.linspace(math.atan2(-wall_half_width, wall_depth), math.atan2(wall_half_width, wall_depth), 4 * n_wall)
    ang = ang[(ang < left_edge) | (ang > right_edge)]
    ang = ang[np.linspace(0, len(ang) - 1, n_wall).astype(int)]
    wx = wall_depth * np.tan(ang)
    wy = np.full_like(wx, wall_depth)
    xs = np.concatenate([ax, wx])
    ys = np.concatenate([ay, wy])
    labels = np.concatenate([np.ones(n_arc, int), np.zeros(n_wall, int)])
    rngn = rng.normal(0.0, sigma, (2, xs.size)) if sigma > 0 else np.zeros((2, xs.size))
    xs = xs + rngn[0]
    ys = ys + rngn[1]
    order = np.argsort(np.arctan2(xs, ys), kind="stable")
    return xs[order], ys[order], labels[order]


# ---------------------------------------------------------- serialization

_KINDS = {"sphere": Sphere, "cylinder": Cylinder, "cone": Cone, "plane": Plane}


def scene_to_dict(scene: SceneSpec) -> dict:
    def plain(v):
        # numpy scalars and tuples are not safe YAML
        if isinstance(v, (tuple, list, np.ndarray)):
            return [plain(x) for x in v]
        if isinstance(v, np.generic):
            return v.item()
        return v

    def clean(o):
        return {k: plain(v) for k, v in asdict(o).items()}

    return {
        "objects": [clean(o) for o in scene.objects],
        "planes": [clean(p) for p in scene.planes],
        "occluders": [clean(o) for o in scene.occluders],
        "noise_sigma": float(scene.noise_sigma),
        "noise_slope": float(scene.noise_slope),
        "max_range": float(scene.max_range),
        "seed": scene.seed,
    }


def scene_from_dict(data: dict) -> SceneSpec:
    if not isinstance(data, dict):
        raise ValueError("a scene must be a mapping")
    def build(d):
        d = dict(d)
        cls = _KINDS[d.get("kind", "plane")]
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
        return cls(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items()})

    return SceneSpec(
        objects=[build(o) for o in data.get("objects", [])],
        planes=[build(p) for p in data.get("planes", [])],
        noise_sigma=float(data.get("noise_sigma", 0.0)),
        noise_slope=float(data.get("noise_slope", 0.0)),
        occluders=[Occluder(**o) for o in data.get("occluders", [])],
        max_range=float(data.get("max_range", 8.0)),
        seed=int(data.get("seed", 0)),
    )


def load_scene(path) -> SceneSpec:
    with open(path) as fh:
        return scene_from_dict(yaml.safe_load(fh))


def dump_scene(scene: SceneSpec, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(scene_to_dict(scene), fh, sort_keys=False)
