"""Depth frames, camera intrinsics and scan-row projection.

Depths live in meters in memory and in millimeters on disk. Invalid pixels
are stored as NaN; on disk the sentinel is 0.

A scan row ``v`` is the set of pixels whose viewing rays span the plane
``Y = t_v * Z`` with ``t_v = (v - cy) / fy``. Row points are expressed in
the row coordinates ``(x, d) = (X, Z)``. Because that map is an affine
image of the true in-plane coordinates, conic sections stay conics and
ellipse centers lift back to 3D exactly via ``Y = t_v * d``.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "CameraIntrinsics",
    "DepthFrame",
    "ScanRowPoint",
    "Ellipse",
    "FrameError",
    "EmptyFrameError",
    "default_intrinsics",
    "load_frame",
    "save_frame",
    "read_intrinsics",
    "project_row",
    "project_frame",
    "reproject",
    "transpose_frame",
]


class FrameError(ValueError):
    """Raised for unreadable or inconsistent depth frames."""


class EmptyFrameError(FrameError):
    """A readable frame without a single valid pixel."""


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("frame dimensions must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside the frame")

    def transposed(self) -> "CameraIntrinsics":
        return CameraIntrinsics(self.fy, self.fx, self.cy, self.cx, self.height, self.width)

    def scaled(self, factor: float) -> "CameraIntrinsics":
        """Intrinsics for the same field of view at ``factor`` times the resolution."""
        w = int(round(self.width * factor))
        h = int(round(self.height * factor))
        return CameraIntrinsics(
            self.fx * factor, self.fy * factor, (w - 1) / 2.0, (h - 1) / 2.0, w, h
        )


def default_intrinsics(width: int = 320, height: int = 240) -> CameraIntrinsics:
    """Kinect-like pinhole model: 525 px focal length at 640 px width."""
    f = 525.0 * width / 640.0
    return CameraIntrinsics(f, f, (width - 1) / 2.0, (height - 1) / 2.0, width, height)


@dataclass(frozen=True, eq=False)
class DepthFrame:
    """Organized range image, row-major ``(height, width)``, meters, NaN = invalid."""

    intrinsics: CameraIntrinsics
    depths: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self):
        d = np.asarray(self.depths, dtype=np.float64)
        k = self.intrinsics
        if d.shape != (k.height, k.width):
            raise FrameError(
                f"depth grid {d.shape} does not match intrinsics {(k.height, k.width)}"
            )
        d = np.where(np.isfinite(d) & (d > 0), d, np.nan)
        d.setflags(write=False)
        object.__setattr__(self, "depths", d)

    @property
    def shape(self) -> tuple[int, int]:
        return self.depths.shape

    @property
    def valid(self) -> np.ndarray:
        return ~np.isnan(self.depths)

    def __eq__(self, other):
        if not isinstance(other, DepthFrame):
            return NotImplemented
        return (
            self.intrinsics == other.intrinsics
            and self.timestamp == other.timestamp
            and np.array_equal(self.depths, other.depths, equal_nan=True)
        )


@dataclass(frozen=True)
class ScanRowPoint:
    u: int
    x: float
    d: float
    p3d: tuple[float, float, float]


@dataclass(frozen=True)
class Ellipse:
    """Ellipse found on one scan row (the mid-level element).

    ``r1`` is the half-extent of the fitted ellipse along the scan row and
    ``r2`` the half-extent orthogonal to it (depth direction); ``r2`` is
    the cross-section radius used by the (z, r) analysis. ``r_major`` and
    ``r_minor`` are the principal semi-axes.
    """

    center: tuple[float, float, float]
    r1: float
    r2: float
    theta: float
    row: int
    support: int
    residual: float
    r_major: float = 0.0
    r_minor: float = 0.0
    u_start: int = 0
    u_end: int = 0
    front_support: int = 0

    @property
    def ratio(self) -> float:
        return self.r_minor / self.r_major if self.r_major > 0 else 0.0


# --------------------------------------------------------------------- I/O


def _read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FrameError(f"{path}: truncated PGM header")
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise FrameError(f"{path}: not a binary PGM (P5) file")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise FrameError(f"{path}: malformed PGM header") from exc
    pos += 1  # single whitespace after maxval
    dtype = ">u2" if maxval > 255 else "u1"
    count = width * height
    raw = np.frombuffer(data, dtype=dtype, count=count, offset=pos) if (
        len(data) - pos >= count * np.dtype(dtype).itemsize
    ) else None
    if raw is None:
        raise FrameError(f"{path}: PGM payload shorter than {width}x{height}")
    return raw.reshape(height, width).astype(np.float64)


def _read_csv(path) -> np.ndarray:
    try:
        grid = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise FrameError(f"{path}: malformed CSV depth grid") from exc
    return grid


def load_frame(path, intrinsics: CameraIntrinsics | None = None, timestamp: float = 0.0) -> DepthFrame:
    """Read a depth frame stored as 16-bit PGM (P5) or CSV, millimeters, 0 = invalid.

    Without ``intrinsics`` the default camera model for the grid's size is used.
    """
    path = os.fspath(path)
    try:
        if path.lower().endswith(".csv"):
            mm = _read_csv(path)
        else:
            mm = _read_pgm(path)
    except OSError as exc:
        raise FrameError(f"cannot read {path}: {exc}") from exc
    if intrinsics is None:
        intrinsics = default_intrinsics(mm.shape[1], mm.shape[0])
    if mm.shape != (intrinsics.height, intrinsics.width):
        raise FrameError(
            f"{path}: grid {mm.shape[1]}x{mm.shape[0]} does not match intrinsics "
            f"{intrinsics.width}x{intrinsics.height}"
        )
    if not np.any(mm > 0):
        raise EmptyFrameError(f"{path}: frame has no valid pixels")
    return DepthFrame(intrinsics, mm / 1000.0, timestamp)


def save_frame(frame: DepthFrame, path) -> None:
    """Write ``frame`` as 16-bit PGM (default) or CSV, depths rounded to millimeters."""
    path = os.fspath(path)
    mm = np.nan_to_num(frame.depths, nan=0.0) * 1000.0
    mm = np.clip(np.rint(mm), 0, 65535).astype(np.uint16)
    if path.lower().endswith(".csv"):
        np.savetxt(path, mm, fmt="%d", delimiter=",")
        return
    h, w = mm.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(mm.astype(">u2").tobytes())


def read_intrinsics(path, width: int | None = None, height: int | None = None) -> CameraIntrinsics:
    """Parse a ``key = value`` (or ``key: value``) sidecar with fx, fy, cx, cy.

    ``width`` and ``height`` may come from the sidecar or the arguments.
    """
    values: dict[str, float] = {}
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            for sep in ("=", ":"):
                if sep in line:
                    key, val = line.split(sep, 1)
                    values[key.strip().lower()] = float(val)
                    break
            else:
                key, val = line.split(None, 1)
                values[key.strip().lower()] = float(val)
    missing = {"fx", "fy", "cx", "cy"} - set(values)
    if missing:
        raise FrameError(f"{path}: missing intrinsics keys {sorted(missing)}")
    w = int(values.get("width", width or 0))
    h = int(values.get("height", height or 0))
    if w <= 0 or h <= 0:
        raise FrameError(f"{path}: frame width/height not given")
    return CameraIntrinsics(values["fx"], values["fy"], values["cx"], values["cy"], w, h)


# -------------------------------------------------------------- projection


def row_slope(intrinsics: CameraIntrinsics, row) -> np.ndarray | float:
    """``t_v`` such that the scan plane of ``row`` is ``Y = t_v * Z``."""
    return (np.asarray(row, dtype=np.float64) - intrinsics.cy) / intrinsics.fy


def project_frame(frame: DepthFrame) -> tuple[np.ndarray, np.ndarray]:
    """Row coordinates ``(x, d)`` for every pixel; NaN where invalid."""
    k = frame.intrinsics
    u = np.arange(k.width, dtype=np.float64)
    d = frame.depths
    x = (u - k.cx)[None, :] * d / k.fx
    return x, d


def project_row(frame: DepthFrame, row: int) -> list[ScanRowPoint]:
    k = frame.intrinsics
    if not 0 <= row < k.height:
        raise IndexError(f"row {row} outside 0..{k.height - 1}")
    d = frame.depths[row]
    cols = np.flatnonzero(~np.isnan(d))
    t = (row - k.cy) / k.fy
    out = []
    for u in cols:
        z = float(d[u])
        x = (u - k.cx) * z / k.fx
        out.append(ScanRowPoint(int(u), x, z, (x, t * z, z)))
    return out


def reproject(intrinsics: CameraIntrinsics, p3d) -> tuple[float, float]:
    """Pixel coordinates ``(u, v)`` of a camera-frame point."""
    x, y, z = p3d
    return intrinsics.fx * x / z + intrinsics.cx, intrinsics.fy * y / z + intrinsics.cy


def transpose_frame(frame: DepthFrame) -> DepthFrame:
    """Swap image rows and columns; the camera X and Y axes swap with them."""
    return DepthFrame(frame.intrinsics.transposed(), frame.depths.T.copy(), frame.timestamp)


def with_timestamp(frame: DepthFrame, timestamp: float) -> DepthFrame:
    return replace(frame, timestamp=timestamp)
