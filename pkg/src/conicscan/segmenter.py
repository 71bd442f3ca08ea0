"""Single-pass ellipse extraction along scan rows.

Each row is traversed once in column order. Points are added to an
incremental ellipse model; once the model's residual exceeds the error
threshold the offending point is removed, the model is saved and a new
model starts at that point. All numeric work happens in
:mod:`conicscan._kernels`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .ellipse_fit import GeometricEllipse2D
from .geometry import DepthFrame, Ellipse, ScanRowPoint, project_frame, row_slope

__all__ = [
    "SegmenterConfig",
    "RowModel",
    "segment_2d",
    "extract_ellipses",
    "extract_frame_ellipses",
    "prefilter",
    "keep_mask",
    "frame_records",
    "lift_records",
]


@dataclass(frozen=True)
class SegmenterConfig:
    """Row segmentation settings.

    ``error_threshold`` is compared with the segment's RMS Sampson
    residual (meters). Row points are connected unless more than
    ``max_gap`` pixels are missing between them or they are further apart
    than ``max_jump`` times their depth (0 disables the jump rule).
    ``min_front_support`` is the number of supporting points required on
    each side of the ellipse center's bearing; it rejects arcs that do not
    contain the surface point nearest to the sensor (0 disables it).
    """

    error_threshold: float = 0.01
    min_support: int = 8
    radius_min: float = 0.03
    radius_max: float = 1.0
    elongation_min: float = 0.2
    max_gap: int = 2
    max_jump: float = 0.1
    min_front_support: int = 3

    def __post_init__(self):
        if not self.error_threshold > 0:
            raise ValueError("error_threshold must be positive")
        if self.min_support < 6:
            raise ValueError("min_support must be at least 6")
        if not 0 < self.radius_min < self.radius_max:
            raise ValueError("need 0 < radius_min < radius_max")
        if not 0 < self.elongation_min <= 1:
            raise ValueError("elongation_min must lie in (0, 1]")
        if self.max_gap < 0 or self.min_front_support < 0 or self.max_jump < 0:
            raise ValueError("max_gap, max_jump and min_front_support must be non-negative")


@dataclass(frozen=True)
class RowModel:
    """One saved model of a 1D point sequence, in the sequence's 2D coordinates."""

    ellipse: GeometricEllipse2D
    support: int
    residual: float
    start: int
    stop: int
    front_support: int

    @property
    def r1(self) -> float:
        return self.ellipse.half_x

    @property
    def r2(self) -> float:
        return self.ellipse.half_y


def _max_models(npoints: int) -> int:
    return max(1, npoints // 5 + 1)


def _run_points(xs, ys, us, cfg: SegmenterConfig):
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    ys = np.ascontiguousarray(ys, dtype=np.float64)
    us = np.ascontiguousarray(us, dtype=np.int64)
    out = np.zeros((_max_models(len(xs)), K.NFIELDS))
    ops = np.zeros(3, dtype=np.int64)
    count = K.segment_points(
        xs, ys, us, cfg.error_threshold, cfg.min_support, cfg.max_gap, cfg.max_jump, out, ops
    )
    return out[:count], ops


def _row_model(rec, us) -> RowModel:
    ell = GeometricEllipse2D(
        rec[K.E_CX], rec[K.E_CY], rec[K.E_RMAJ], rec[K.E_RMIN], rec[K.E_THETA],
        rec[K.E_R1], rec[K.E_R2],
    )
    start = int(np.searchsorted(us, rec[K.E_U0]))
    stop = int(np.searchsorted(us, rec[K.E_U1])) + 1
    return RowModel(ell, int(rec[K.E_SUP]), float(rec[K.E_RES]), start, stop, int(rec[K.E_FRONT]))


def segment_2d(xs, ys, cfg: SegmenterConfig, return_ops: bool = False):
    """Extract ellipses from an ordered 2D point sequence.

    Points are treated as consecutive samples (no gaps). Returns a list of
    :class:`RowModel` whose ``start:stop`` index the input; with
    ``return_ops`` also the ``(adds, removes, fits)`` operation counts.
    """
    us = np.arange(len(xs), dtype=np.int64)
    recs, ops = _run_points(xs, ys, us, cfg)
    models = [_row_model(r, us) for r in recs]
    return (models, tuple(int(v) for v in ops)) if return_ops else models


def _lift(rec, row: int, t: float) -> Ellipse:
    cx, cz = float(rec[K.E_CX]), float(rec[K.E_CY])
    return Ellipse(
        center=(cx, t * cz, cz),
        r1=float(rec[K.E_R1]),
        r2=float(rec[K.E_R2]),
        theta=float(rec[K.E_THETA]),
        row=int(row),
        support=int(rec[K.E_SUP]),
        residual=float(rec[K.E_RES]),
        r_major=float(rec[K.E_RMAJ]),
        r_minor=float(rec[K.E_RMIN]),
        u_start=int(rec[K.E_U0]),
        u_end=int(rec[K.E_U1]),
        front_support=int(rec[K.E_FRONT]),
    )


def extract_ellipses(points: list[ScanRowPoint], cfg: SegmenterConfig, row: int = 0) -> list[Ellipse]:
    """All ellipse models of one scan row, in column order (unfiltered)."""
    if not points:
        return []
    xs = [p.x for p in points]
    ds = [p.d for p in points]
    us = [p.u for p in points]
    ref = max(points, key=lambda p: p.d)
    t = ref.p3d[1] / ref.p3d[2]
    recs, _ = _run_points(xs, ds, us, cfg)
    return [_lift(r, row, t) for r in recs]


def frame_records(frame: DepthFrame, cfg: SegmenterConfig):
    """Raw kernel output for a whole frame.

    Returns ``(rows, records, (x, d), ops)``: the source row of every
    record, the ``(m, NFIELDS)`` record array in row-then-column order, the
    row coordinates of all pixels and the ``(adds, removes, fits)`` counts.
    """
    x, d = project_frame(frame)
    x = np.ascontiguousarray(x)
    d = np.ascontiguousarray(d)
    h, w = d.shape
    per_row = _max_models(w)
    out = np.zeros((h, per_row, K.NFIELDS))
    counts = np.zeros(h, dtype=np.int64)
    ops = np.zeros(3, dtype=np.int64)
    K.segment_frame(
        x, d, cfg.error_threshold, cfg.min_support, cfg.max_gap, cfg.max_jump,
        per_row, out, counts, ops,
    )
    filled = np.arange(per_row)[None, :] < counts[:, None]
    rows = np.nonzero(filled)[0]
    return rows, out[filled], (x, d), tuple(int(v) for v in ops)


def lift_records(frame: DepthFrame, rows, records) -> list[Ellipse]:
    slopes = row_slope(frame.intrinsics, rows)
    return [_lift(rec, int(v), float(t)) for rec, v, t in zip(records, rows, slopes)]


def extract_frame_ellipses(frame: DepthFrame, cfg: SegmenterConfig, return_ops: bool = False):
    """Run the row pass over every row; results sorted by row, then column."""
    rows, recs, _, ops = frame_records(frame, cfg)
    ellipses = lift_records(frame, rows, recs)
    return (ellipses, ops) if return_ops else ellipses


def keep_mask(records: np.ndarray, cfg: SegmenterConfig) -> np.ndarray:
    """Vectorized :func:`prefilter` over raw kernel records."""
    ratio = records[:, K.E_RMIN] / records[:, K.E_RMAJ]
    r2 = records[:, K.E_R2]
    return (
        (ratio >= cfg.elongation_min)
        & (r2 >= cfg.radius_min)
        & (r2 <= cfg.radius_max)
        & (records[:, K.E_FRONT] >= cfg.min_front_support)
    )


def prefilter(ellipses: list[Ellipse], cfg: SegmenterConfig) -> list[Ellipse]:
    """Drop elongated ellipses, out-of-range radii and arcs missing their near side."""
    return [
        e
        for e in ellipses
        if e.ratio >= cfg.elongation_min
        and cfg.radius_min <= e.r2 <= cfg.radius_max
        and e.front_support >= cfg.min_front_support
    ]
