"""Cylinder / cone / sphere recognition in (z, r) space.

Each chain is mapped to points ``(z, r)``: ``z`` is the arc length of the
ellipse center along the chain's center line and ``r`` the ellipse's
depth radius ``r2``. A cylinder is a flat line there, a cone a sloped line
and a sphere a half circle centered on the z axis. Chains that stack two
objects (a ball on a can) are first cut where neither template can absorb
the next radii.

The kind is decided from the ellipses alone. The reported geometry is then
polished by a least-squares fit of the 3D surface to the chain's
supporting points (``ClassifierConfig.refine``); ``zr_radius`` keeps the
ellipse-only estimate.
"""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, replace

import numpy as np

from .chains import ChainConfig, EllipseChain, Line3D, build_components, fit_center_line
from .ellipse_fit import FitError
from .geometry import DepthFrame, row_slope, transpose_frame
from .segmenter import SegmenterConfig, frame_records, keep_mask, lift_records

__all__ = [
    "ClassifierConfig",
    "ZRPoint",
    "ZRFit",
    "Primitive",
    "zr_points",
    "fit_zr_line",
    "fit_zr_circle",
    "fit_zr",
    "split_chain",
    "classify",
    "detect_frame",
    "KINDS",
]

KINDS = ("cylinder", "cone", "sphere")


@dataclass(frozen=True)
class ClassifierConfig:
    """Classification tolerances (angles in radians, lengths in meters).

    ``max_image_tilt`` bounds the axis angle from the image's vertical as
    seen by the camera; steeper objects are left to the transposed pass.
    ``max_axis_tilt`` bounds the angle between the axis and the camera's
    vertical; chains running along the line of sight are not objects.
    ``min_side_fraction`` is the share of refined supporting points needed
    on each side of the object's bearing: when the side facing the sensor
    is hidden the surface is no longer pinned down (0 disables).
    """

    cylinder_slope_tol: float = math.radians(5.0)
    cone_slope_min: float = math.radians(5.0)
    zr_residual_tol: float = 0.015
    split_factor: float = 3.0
    min_segment: int = 5
    max_image_tilt: float = math.radians(50.0)
    max_axis_tilt: float = math.radians(60.0)
    refine: bool = True
    refine_max_points: int = 1000
    min_side_fraction: float = 0.05

    def __post_init__(self):
        if not (0 < self.cylinder_slope_tol <= self.cone_slope_min < math.pi / 2):
            raise ValueError("need 0 < cylinder_slope_tol <= cone_slope_min < pi/2")
        if not (self.zr_residual_tol > 0 and self.split_factor > 0):
            raise ValueError("tolerances must be positive")
        if not 0 <= self.min_side_fraction < 0.5:
            raise ValueError("min_side_fraction must lie in [0, 0.5)")
        if self.min_segment < 3:
            raise ValueError("min_segment must be at least 3")


@dataclass(frozen=True)
class ZRPoint:
    z: float
    r: float

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError("r must be positive")


@dataclass(frozen=True)
class ZRFit:
    """Both (z, r) templates fitted to one point set.

    ``circle_offset`` is the r coordinate of the center of an unconstrained
    circle fit; it is near zero only for sphere-like data.
    """

    slope: float
    intercept: float
    line_residual: float
    z0: float
    radius: float
    circle_residual: float
    circle_offset: float

    @property
    def slope_angle(self) -> float:
        return math.atan(abs(self.slope))


@dataclass(frozen=True)
class Primitive:
    """A recognized object.

    ``center`` is the sphere center, or for cylinders and cones the point
    of the axis closest to the camera; ``distance`` is its range. ``extent``
    is the ``(z_min, z_max)`` interval of support along ``axis`` measured
    from ``center``. A cone's ``radius`` is its largest supported radius.
    """

    kind: str
    radius: float
    center: tuple[float, float, float]
    support: int
    residual: float
    axis: Line3D | None = None
    extent: tuple[float, float] | None = None
    apex: tuple[float, float, float] | None = None
    apex_reliable: bool = False
    half_angle: float | None = None
    zr_radius: float = float("nan")
    point_rms: float = float("nan")
    rows: tuple[int, int] = (0, 0)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown primitive kind {self.kind!r}")
        if not self.radius > 0:
            raise ValueError("radius must be positive")

    @property
    def distance(self) -> float:
        return float(np.linalg.norm(self.center))

    def as_dict(self) -> dict:
        out = asdict(self)
        out["distance"] = self.distance
        if self.axis is not None:
            out["axis"] = {"anchor": list(self.axis.anchor), "direction": list(self.axis.direction)}
        for key in ("center", "apex", "extent", "rows"):
            if out[key] is not None:
                out[key] = [float(v) for v in out[key]]
        return out


# ----------------------------------------------------------- (z, r) fits


def zr_points(chain: EllipseChain, line: Line3D | None = None) -> list[ZRPoint]:
    line = line or _chain_line(chain)
    z = line.project(chain.centers)
    return [ZRPoint(float(a), float(b)) for a, b in zip(z, chain.radii)]


def _chain_line(chain: EllipseChain) -> Line3D:
    if isinstance(chain.center_model, Line3D):
        return chain.center_model
    return fit_center_line(chain)[0]


def fit_zr_line(z, r) -> tuple[float, float, float]:
    """Least-squares ``r = slope * z + intercept``; returns the RMS residual too."""
    z = np.asarray(z, float)
    r = np.asarray(r, float)
    zc = z - z.mean()
    szz = float(zc @ zc)
    slope = float(zc @ (r - r.mean()) / szz) if szz > 0 else 0.0
    intercept = float(r.mean() - slope * z.mean())
    rms = float(np.sqrt(np.mean((r - slope * z - intercept) ** 2)))
    return slope, intercept, rms


def fit_zr_circle(z, r) -> tuple[float, float, float]:
    """Half circle ``r = sqrt(R^2 - (z - z0)^2)`` with its center on the z axis.

    Solved linearly as ``r^2 + z^2 = A z + B``. Returns ``(z0, R, rms)``
    with the RMS radial distance to the circle.
    """
    z = np.asarray(z, float)
    r = np.asarray(r, float)
    zm = z.mean()
    zc = z - zm
    w = r * r + zc * zc
    szz = float(zc @ zc)
    a = float(zc @ (w - w.mean()) / szz) if szz > 0 else 0.0
    b = float(w.mean())
    z0 = 0.5 * a
    rr = b + z0 * z0
    radius = math.sqrt(rr) if rr > 0 else 0.0
    rms = float(np.sqrt(np.mean((np.hypot(zc - z0, r) - radius) ** 2)))
    return z0 + zm, radius, rms


def _circle_offset(z, r) -> float:
    # unconstrained algebraic circle; r coordinate of its center
    z = np.asarray(z, float)
    r = np.asarray(r, float)
    zc, rc = z - z.mean(), r - r.mean()
    a = np.column_stack([zc, rc, np.ones_like(zc)])
    rhs = zc * zc + rc * rc
    sol, *_ = np.linalg.lstsq(a, rhs, rcond=None)
    return float(0.5 * sol[1] + r.mean())


def fit_zr(z, r) -> ZRFit:
    slope, intercept, lres = fit_zr_line(z, r)
    z0, radius, cres = fit_zr_circle(z, r)
    offset = _circle_offset(z, r) if len(z) >= 3 else float("nan")
    return ZRFit(slope, intercept, lres, z0, radius, cres, offset)


def _zr_misses(sums, z, r):
    """Distance of ``(z, r)`` to the nearer of the line and the axis-centered
    circle fitted to prefix sums ``(n, z, zz, r, zr, w, zw)``, elementwise."""
    n, sz, szz, sr, szr, sw, szw = sums
    den = n * szz - sz * sz
    ok = den > 0
    den = np.where(ok, den, 1.0)
    slope = (n * szr - sz * sr) / den
    line = slope * z + (sr - slope * sz) / n
    a = (n * szw - sz * sw) / den
    b = (sw - a * sz) / n
    z0 = 0.5 * a
    rr = b + z0 * z0 - (z - z0) ** 2
    circle = np.sqrt(np.maximum(rr, 0.0))
    err = np.minimum(np.abs(r - line), np.abs(r - circle))
    # a vertical stack of points predicts only its mean radius
    return np.where(ok, err, np.abs(r - sr / n))


def _split_indices(z, r, cfg: ClassifierConfig) -> list[tuple[int, int]]:
    jump = cfg.split_factor * cfg.zr_residual_tol
    z = np.asarray(z, float)
    r = np.asarray(r, float)
    n = len(z)
    pieces = []
    start = 0
    while n - start >= 6:
        zs, rs = z[start:], r[start:]
        terms = np.stack([np.ones_like(zs), zs, zs * zs, rs, zs * rs, rs * rs + zs * zs,
                          zs * (rs * rs + zs * zs)])
        # sums over the piece so far, before index k: running (z, r) fits
        prefix = np.cumsum(terms, axis=1)[:, 3:-2]
        here = _zr_misses(prefix, zs[4:-1], rs[4:-1])
        ahead = _zr_misses(prefix, zs[5:], rs[5:])
        # two consecutive misses: a different object starts here
        hits = np.flatnonzero((here > jump) & (ahead > jump))
        if not len(hits):
            break
        cut = start + 4 + int(hits[0])
        pieces.append((start, cut))
        start = cut
    pieces.append((start, n))
    return pieces


def split_chain(chain: EllipseChain, cfg: ClassifierConfig = ClassifierConfig()) -> list[EllipseChain]:
    """Cut a chain where its radii stop following any single (z, r) template.

    Pieces shorter than ``cfg.min_segment`` are dropped.
    """
    if len(chain) < 2:
        return []
    line = _chain_line(chain)
    z = line.project(chain.centers)
    r = chain.radii
    out = []
    for a, b in _split_indices(z, r, cfg):
        if b - a >= cfg.min_segment:
            out.append(EllipseChain(chain.ellipses[a:b]))
    return out


# --------------------------------------------------------- 3D refinement


def _frame_axes(d):
    # two unit vectors completing d to an orthonormal frame
    x, y, z = (float(v) for v in d)
    e1 = np.array([0.0, z, -y]) if abs(x) < 0.9 else np.array([-z, 0.0, x])
    e1 /= math.sqrt(float(e1 @ e1))
    e2 = np.array([y * e1[2] - z * e1[1], z * e1[0] - x * e1[2], x * e1[1] - y * e1[0]])
    return e1, e2


def _levenberg_marquardt(model, update, state, iterations=30):
    """Minimize ``|res|^2`` where ``model(state) -> (res, jac)``.

    ``update(state, delta)`` applies a parameter step; the Jacobian is taken
    at the current state, so manifold parameters (axis directions) can be
    re-linearized every iteration.
    """
    res, jac = model(state)
    cost = float(res @ res)
    lam = 1e-3
    for _ in range(iterations):
        if cost <= 1e-24 * len(res):
            break
        a = jac.T @ jac
        g = jac.T @ res
        try:
            delta = np.linalg.solve(a + lam * np.diag(np.diag(a) + 1e-12), -g)
        except np.linalg.LinAlgError:
            break
        trial = update(state, delta)
        res2, jac2 = model(trial)
        cost2 = float(res2 @ res2)
        if cost2 < cost:
            done = cost - cost2 <= 1e-6 * cost or float(np.abs(delta).max()) < 1e-12
            state, res, jac, cost = trial, res2, jac2, cost2
            lam = max(lam * 0.3, 1e-12)
            if done:
                break
        else:
            lam *= 10.0
            if lam > 1e8:
                break
    return state, res


def _axial_model(points, cone: bool):
    """Residuals and Jacobian of the distance to a cylinder or cone surface.

    State ``(p, d, r0, s)``: axis point, unit direction, radius at ``p`` and
    radius slope along ``d`` (0 for cylinders). The Jacobian columns are
    two direction tilts, two axis shifts orthogonal to ``d``, ``r0`` and,
    for cones, ``s``.
    """

    ncol = 6 if cone else 5

    def model(state):
        p, d, r0, s = state
        e1, e2 = _frame_axes(d)
        # coordinates along the axis and in its normal plane
        h, a1, a2 = ((points - p) @ np.stack([d, e1, e2], axis=1)).T
        rho = np.maximum(np.hypot(a1, a2), 1e-15)
        c = math.sqrt(1.0 + s * s)
        res = (rho - r0 - s * h) / c
        ne1, ne2 = a1 / rho, a2 / rho
        jac = np.empty((len(res), ncol))
        jac[:, 0] = (-h * ne1 - s * a1) / c
        jac[:, 1] = (-h * ne2 - s * a2) / c
        jac[:, 2] = -ne1 / c
        jac[:, 3] = -ne2 / c
        jac[:, 4] = -1.0 / c
        if cone:
            jac[:, 5] = -h / c - res * s / (c * c)
        return res, jac

    def update(state, delta):
        p, d, r0, s = state
        e1, e2 = _frame_axes(d)
        nd = d + delta[0] * e1 + delta[1] * e2
        nd = nd / np.linalg.norm(nd)
        np_ = p + delta[2] * e1 + delta[3] * e2
        return np_, nd, r0 + delta[4], (s + delta[5]) if cone else 0.0

    return model, update


def _sphere_model(points):
    def model(state):
        c, radius = state
        v = points - c
        dist = np.maximum(np.sqrt(np.einsum("ij,ij->i", v, v)), 1e-15)
        jac = np.empty((len(dist), 4))
        jac[:, :3] = v / -dist[:, None]
        jac[:, 3] = -1.0
        return dist - radius, jac

    def update(state, delta):
        return state[0] + delta[:3], state[1] + delta[3]

    return model, update


def _robust_refine(make, points, state, rounds: int = 3):
    # fit, drop gross outliers (3 robust sigmas of all residuals), refit;
    # repeated while the inlier set changes
    model = make(points)
    state, res = _levenberg_marquardt(*model, state)
    keep = np.ones(len(points), bool)
    for _ in range(rounds):
        full, _ = model[0](state)
        scale = 1.4826 * float(np.median(np.abs(full)))
        nk = np.abs(full) <= max(3.0 * scale, 1e-4)
        if nk.sum() < 10 or np.array_equal(nk, keep):
            break
        keep = nk
        state, res = _levenberg_marquardt(*make(points[keep]), state)
    return state, keep, float(np.sqrt(np.mean(res ** 2)))


def _refine_axial(points, line: Line3D, r0: float, slope: float, cone: bool):
    d0 = np.asarray(line.direction)
    h = (points - np.asarray(line.anchor)) @ d0
    p0 = np.asarray(line.anchor) + float(np.mean(h)) * d0
    state = (p0, d0, float(r0), float(slope) if cone else 0.0)
    (p, d, r0, s), keep, rms = _robust_refine(lambda pts: _axial_model(pts, cone), points, state)
    if d @ d0 < 0:
        d, s = -d, -s
    return p, d, float(r0), float(s), points[keep], rms


def _refine_sphere(points, center, radius):
    state = (np.asarray(center, float), float(radius))
    (c, r), _, rms = _robust_refine(_sphere_model, points, state)
    return c, float(r), rms


# --------------------------------------------------------- classification


def _tilts(d) -> tuple[float, float]:
    dx, dy, _ = (abs(float(v)) for v in d)
    image = math.atan2(dx, dy)
    axis = math.acos(min(1.0, dy))
    return image, axis


def _decide(fit: ZRFit, cfg: ClassifierConfig) -> str | None:
    tol = cfg.zr_residual_tol
    if fit.line_residual <= fit.circle_residual:
        if fit.line_residual > tol:
            return None
        if fit.slope_angle <= cfg.cylinder_slope_tol:
            return "cylinder"
        if fit.slope_angle > cfg.cone_slope_min:
            return "cone"
        return None
    if fit.circle_residual <= tol and abs(fit.circle_offset) <= tol:
        return "sphere"
    return None


def _trimmed_fit(z, r, cfg: ClassifierConfig):
    fit = fit_zr(z, r)
    lim = cfg.split_factor * cfg.zr_residual_tol
    if fit.line_residual <= fit.circle_residual:
        res = np.abs(r - fit.slope * z - fit.intercept)
    else:
        res = np.abs(np.hypot(z - fit.z0, r) - fit.radius)
    keep = res <= lim
    # outliers may be dropped, but not most of the chain
    if keep.all() or keep.sum() < max(cfg.min_segment, 0.5 * len(z)):
        return fit, np.ones(len(z), bool)
    return fit_zr(z[keep], r[keep]), keep


def _robust_line_fit(z, r, cfg: ClassifierConfig, max_pairs: int = 4000):
    """Least-median line through the (z, r) points, refitted to its inliers.

    Used when no template fits the whole chain, typically because rows
    near an object's end cut its surface short and report small radii.
    Only the line templates are offered; the circle is disabled.
    """
    n = len(z)
    if n < 2 * cfg.min_segment:
        return None, None
    i, j = np.triu_indices(n, 1)
    if len(i) > max_pairs:
        pick = np.linspace(0, len(i) - 1, max_pairs).astype(int)
        i, j = i[pick], j[pick]
    dz = z[j] - z[i]
    ok = np.abs(dz) > 1e-9
    i, j, dz = i[ok], j[ok], dz[ok]
    if len(i) == 0:
        return None, None
    slope = (r[j] - r[i]) / dz
    icpt = r[i] - slope * z[i]
    res = np.abs(r[None, :] - slope[:, None] * z[None, :] - icpt[:, None])
    med = np.median(res, axis=1)
    best = int(np.argmin(med))
    lim = min(max(2.5 * 1.4826 * med[best], 0.5 * cfg.zr_residual_tol), cfg.split_factor * cfg.zr_residual_tol)
    keep = res[best] <= lim
    if keep.sum() < max(cfg.min_segment, 0.5 * n):
        return None, None
    fit = fit_zr(z[keep], r[keep])
    return replace(fit, circle_residual=math.inf), keep


def _side_fraction(points, centers) -> float:
    # share of points on the less populated side of the bearing to their center
    side = points[:, 0] * centers[:, 2] - points[:, 2] * centers[:, 0]
    if len(side) == 0:
        return 0.0
    return min(int((side < 0).sum()), int((side > 0).sum())) / len(side)


def _foot(line_p, d):
    p = np.asarray(line_p, float)
    return p - (p @ d) * d


def classify(chain: EllipseChain, cfg: ClassifierConfig = ClassifierConfig(), points=None):
    """Primitive for one chain, or ``None``.

    ``points`` optionally holds the chain's supporting 3D points as an
    ``(n, 3)`` array; with ``cfg.refine`` they are used to polish the
    geometry after the kind has been decided.
    """
    if len(chain) < 3:
        return None
    try:
        line = _chain_line(chain)
    except FitError:
        return None
    image_tilt, axis_tilt = _tilts(line.direction)
    if image_tilt > cfg.max_image_tilt or axis_tilt > cfg.max_axis_tilt:
        return None
    z = line.project(chain.centers)
    r = chain.radii
    fit, keep = _trimmed_fit(z, r, cfg)
    kind = _decide(fit, cfg)
    if kind is None:
        fit, keep = _robust_line_fit(z, r, cfg)
        kind = _decide(fit, cfg) if fit is not None else None
    if kind is None:
        return None
    z, r = z[keep], r[keep]
    rows = (int(chain.rows[0]), int(chain.rows[-1]))
    support = int(keep.sum())
    d = np.asarray(line.direction)
    refine = cfg.refine and points is not None and len(points) >= 20
    rms = float("nan")

    if kind == "sphere":
        zr_radius = fit.radius
        order = np.argsort(z)
        centers = chain.centers[keep][order]
        center = np.array([np.interp(fit.z0, z[order], centers[:, i]) for i in range(3)])
        radius = zr_radius
        if refine:
            center, radius, rms = _refine_sphere(points, center, radius)
            c = np.broadcast_to(center, points.shape)
            if _side_fraction(points, c) < cfg.min_side_fraction:
                return None
        if not radius > 0:
            return None
        return Primitive("sphere", float(radius), tuple(float(v) for v in center), support,
                         fit.circle_residual, zr_radius=float(zr_radius), point_rms=rms, rows=rows)

    if kind == "cylinder":
        zr_radius = float(np.mean(r))
        p, r0, slope = np.asarray(line.anchor), zr_radius, 0.0
        zr_extent = (float(z.min()), float(z.max()))
    else:
        zr_radius = float(max(fit.slope * z.min() + fit.intercept, fit.slope * z.max() + fit.intercept))
        # anchor at the mean z so that r0 is the mid-chain radius
        zm = float(np.mean(z))
        p, r0, slope = line.point_at(zm), fit.slope * zm + fit.intercept, fit.slope
        zr_extent = (float(z.min() - zm), float(z.max() - zm))
    if refine:
        start = Line3D(tuple(p), tuple(d))
        p, d, r0, slope, used, rms = _refine_axial(points, start, r0, slope, kind == "cone")
        if kind == "cone" and math.atan(abs(slope)) <= cfg.cylinder_slope_tol:
            # the surface fit finds no taper: report the cylinder it is
            kind = "cylinder"
            zr_radius = float(np.mean(r))
            p, d, r0, slope, used, rms = _refine_axial(points, start, zr_radius, 0.0, False)
        image_tilt, axis_tilt = _tilts(d)
        if image_tilt > cfg.max_image_tilt or axis_tilt > cfg.max_axis_tilt:
            return None
        h = (used - p) @ d
        if _side_fraction(used, p + h[:, None] * d) < cfg.min_side_fraction:
            return None
        extent = (float(h.min()), float(h.max()))
    else:
        extent = zr_extent
    foot = _foot(p, d)
    shift = float((p - foot) @ d)
    extent = (extent[0] + shift, extent[1] + shift)
    axis = Line3D(tuple(foot), tuple(d))
    if kind == "cylinder":
        if not r0 > 0:
            return None
        return Primitive("cylinder", float(r0), tuple(float(v) for v in foot), support,
                         fit.line_residual, axis=axis, extent=extent, zr_radius=zr_radius,
                         point_rms=rms, rows=rows)
    if slope == 0:
        return None
    # radius along the axis measured from the foot point: r(h) = r0 + slope * (h - shift)
    r_ends = [r0 + slope * (e - shift) for e in extent]
    apex_h = shift - r0 / slope
    length = extent[1] - extent[0]
    beyond = max(extent[0] - apex_h, apex_h - extent[1], 0.0)
    radius = max(r_ends)
    if not radius > 0:
        return None
    return Primitive(
        "cone", float(radius), tuple(float(v) for v in foot), support, fit.line_residual,
        axis=axis, extent=extent, apex=tuple(float(v) for v in axis.point_at(apex_h)),
        apex_reliable=bool(beyond <= 3.0 * length), half_angle=float(math.atan(abs(slope))),
        zr_radius=zr_radius, point_rms=rms, rows=rows,
    )


# ----------------------------------------------------------- full frame


def _chain_points(chain: EllipseChain, xd, slopes, max_points: int) -> np.ndarray:
    x, d = xd
    spans = [(e.row, e.u_start, e.u_end) for e in chain.ellipses]
    total = sum(u1 - u0 + 1 for _, u0, u1 in spans)
    step = max(1, math.ceil(total / max_points))
    parts = []
    for v, u0, u1 in spans[::step]:
        xs = x[v, u0 : u1 + 1]
        ds = d[v, u0 : u1 + 1]
        ok = ~np.isnan(ds)
        parts.append(np.column_stack([xs[ok], slopes[v] * ds[ok], ds[ok]]))
    return np.concatenate(parts) if parts else np.zeros((0, 3))


def _swap_xy(v):
    return None if v is None else (v[1], v[0], v[2])


def _untranspose(p: Primitive) -> Primitive:
    axis = None
    if p.axis is not None:
        axis = Line3D(_swap_xy(p.axis.anchor), _swap_xy(p.axis.direction))
    return replace(p, center=_swap_xy(p.center), apex=_swap_xy(p.apex), axis=axis)


def _same_object(a: Primitive, b: Primitive) -> bool:
    if {a.kind, b.kind} == {"cylinder", "cone"}:
        # a weakly tapered piece sharing a cylinder's axis and radius
        cone = a if a.kind == "cone" else b
        if cone.half_angle > math.radians(10.0):
            return False
    elif a.kind != b.kind:
        return False
    elif a.kind == "cone":
        # cone radii depend on the visible extent; compare the taper instead
        if abs(a.half_angle - b.half_angle) > math.radians(5.0):
            return False
    if a.kind != "cone" or b.kind != "cone":
        if abs(a.radius - b.radius) > 0.25 * max(a.radius, b.radius):
            return False
    if a.kind == "sphere":
        return np.linalg.norm(np.subtract(a.center, b.center)) < max(a.radius, b.radius)
    return float(b.axis.distance(np.asarray(a.center)[None])[0]) < max(a.radius, b.radius)


def _inside(a: Primitive, b: Primitive) -> bool:
    # middle of a's support lies within b's volume
    c = np.asarray(a.center, float)
    if a.kind != "sphere":
        c = c + np.asarray(a.axis.direction) * 0.5 * (a.extent[0] + a.extent[1])
    if b.kind == "sphere":
        return float(np.linalg.norm(c - b.center)) < b.radius
    base = b.axis.project(np.asarray(b.center)[None])[0]
    h = float(b.axis.project(c[None])[0] - base)
    # end caps and ramps leave short pieces just past the support
    margin = 0.25 * b.radius
    if not b.extent[0] - margin <= h <= b.extent[1] + margin:
        return False
    radius = b.radius
    if b.kind == "cone":
        apex_h = float(b.axis.project(np.asarray(b.apex)[None])[0] - base)
        radius = max(math.tan(b.half_angle) * abs(h - apex_h), 0.25 * b.radius)
    return float(b.axis.distance(c[None])[0]) < radius


def _drop_contained(found: list[Primitive], others: list[Primitive]) -> list[Primitive]:
    # solids cannot nest: a piece inside a better supported primitive is a fragment of it
    return [p for p in found
            if not any(q is not p and q.support > p.support and _inside(p, q) for q in others)]


def _overlapping(a, b) -> bool:
    # (primitive, piece centroid) pairs covering common rows at one place
    (pa, ca), (pb, cb) = a, b
    if pa.rows[1] < pb.rows[0] or pb.rows[1] < pa.rows[0]:
        return False
    return math.dist(ca, cb) < max(pa.radius, pb.radius)


def _merge(found: list[Primitive], extra) -> list[Primitive]:
    # add each extra primitive unless a better supported copy is already known
    found = list(found)
    for p in extra:
        dup = [i for i, q in enumerate(found) if _same_object(p, q)]
        if not dup:
            found.append(p)
        elif all(p.support > found[i].support for i in dup):
            found = [q for i, q in enumerate(found) if i not in dup] + [p]
    return found


def _detect_pass(frame, seg_cfg, chain_cfg, cls_cfg, timings):
    t0 = time.perf_counter()
    rows, recs, xd, _ = frame_records(frame, seg_cfg)
    mask = keep_mask(recs, seg_cfg)
    ellipses = lift_records(frame, rows[mask], recs[mask])
    t1 = time.perf_counter()
    chains = build_components(ellipses, chain_cfg)
    pieces = [p for c in chains for p in split_chain(c, cls_cfg)]
    t2 = time.perf_counter()
    slopes = row_slope(frame.intrinsics, np.arange(frame.intrinsics.height))
    found = []
    for piece in pieces:
        pts = _chain_points(piece, xd, slopes, cls_cfg.refine_max_points) if cls_cfg.refine else None
        prim = classify(piece, cls_cfg, pts)
        if prim is not None:
            found.append((prim, piece.centers.mean(axis=0)))
    # of two chains over the same rows and place, the better supported wins
    found = [a for a in found
             if not any(b is not a and _overlapping(a, b) and b[0].support > a[0].support for b in found)]
    found = _merge([], [p for p, _ in found])
    found = _drop_contained(found, found)
    t3 = time.perf_counter()
    if timings is not None:
        for key, dt in (("segment", t1 - t0), ("chain", t2 - t1), ("classify", t3 - t2)):
            timings[key] = timings.get(key, 0.0) + dt * 1e6
        timings["ellipses"] = timings.get("ellipses", 0) + len(ellipses)
    return found


def detect_frame(
    frame: DepthFrame,
    seg_cfg: SegmenterConfig = SegmenterConfig(),
    chain_cfg: ChainConfig = ChainConfig(),
    cls_cfg: ClassifierConfig = ClassifierConfig(),
    transpose: bool = False,
    timings: dict | None = None,
) -> list[Primitive]:
    """Full pipeline on one frame.

    With ``transpose`` the frame is also scanned column-wise (rows and
    columns swapped), which recovers objects tilted more than
    ``cls_cfg.max_image_tilt`` in the image; duplicates found by both
    passes are merged, keeping the better supported one. ``timings``, if
    given, accumulates per-stage microseconds.
    """
    found = _detect_pass(frame, seg_cfg, chain_cfg, cls_cfg, timings)
    if transpose:
        extra = [_untranspose(p) for p in
                 _detect_pass(transpose_frame(frame), seg_cfg, chain_cfg, cls_cfg, timings)]
        # fragments of an object the other pass saw whole
        extra, found = _drop_contained(extra, found), _drop_contained(found, extra)
        found = _merge(found, extra)
    found.sort(key=lambda p: (p.rows[0], p.center[0]))
    return found
