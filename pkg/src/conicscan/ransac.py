"""RANSAC ellipse fitting on 2D point sets, the baseline for the row segmenter.

Minimal samples are fitted with the same direct solver as the main
pipeline. Two sample models exist: the general five-point conic and a
four-point axis-aligned conic (no ``xy`` term), the reading that matches a
four-point minimal sample.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .ellipse_fit import ConicCoefficients, FitError, GeometricEllipse2D, batch_sums, to_geometric

__all__ = ["RansacConfig", "RansacResult", "RansacError", "iteration_count", "ransac_ellipse", "sampson_distances"]


class RansacError(FitError):
    """No admissible ellipse was found."""


@dataclass(frozen=True)
class RansacConfig:
    """Stopping rule and model constraints.

    ``iterations`` overrides the count derived from ``confidence``,
    ``inlier_ratio`` and ``samples_per_model``.
    """

    confidence: float = 0.95
    inlier_ratio: float = 0.3
    samples_per_model: int = 5
    inlier_tol: float = 0.01
    ratio_min: float = 0.2
    iterations: int | None = None

    def __post_init__(self):
        if not 0 < self.confidence < 1:
            raise ValueError("confidence must lie in (0, 1)")
        if not 0 < self.inlier_ratio <= 1:
            raise ValueError("inlier_ratio must lie in (0, 1]")
        if self.samples_per_model < 4:
            raise ValueError("samples_per_model must be 4 (axis-aligned) or at least 5")
        if not self.inlier_tol > 0:
            raise ValueError("inlier_tol must be positive")
        if not 0 <= self.ratio_min <= 1:
            raise ValueError("ratio_min must lie in [0, 1]")
        if self.iterations is not None and self.iterations < 1:
            raise ValueError("iterations must be at least 1")

    @property
    def k(self) -> int:
        if self.iterations is not None:
            return self.iterations
        return iteration_count(self.confidence, self.inlier_ratio, self.samples_per_model)


@dataclass(frozen=True)
class RansacResult:
    ellipse: GeometricEllipse2D
    conic: ConicCoefficients
    inliers: np.ndarray
    iterations: int

    @property
    def support(self) -> int:
        return int(self.inliers.sum())


def iteration_count(p: float, w: float, n: int) -> int:
    """Samples needed to draw one all-inlier set with probability ``p``.

    >>> iteration_count(0.95, 0.3, 4)
    369
    """
    if not 0 < p < 1 or not 0 < w <= 1 or n < 1:
        raise ValueError("need 0 < p < 1, 0 < w <= 1 and n >= 1")
    miss = 1.0 - w ** n
    if miss <= 0.0:
        return 1
    return max(1, math.ceil(math.log1p(-p) / math.log(miss)))


def sampson_distances(coef, xs, ys) -> np.ndarray:
    """First-order geometric distances ``|F| / |grad F|`` to a conic."""
    a, b, c, d, e, f = np.asarray(coef, dtype=float)
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    val = a * x * x + b * x * y + c * y * y + d * x + e * y + f
    gx = 2.0 * a * x + b * y + d
    gy = b * x + 2.0 * c * y + e
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.abs(val) / np.hypot(gx, gy)
    return np.where(np.isfinite(out), out, np.inf)


def _direct(xs, ys) -> np.ndarray | None:
    s = batch_sums(xs, ys)
    coef = np.zeros(6)
    if _kernels.solve_conic(s, coef) < 0:
        return None
    return ConicCoefficients(*coef).translated(xs[0], ys[0]).as_array()


def _axis_aligned(xs, ys) -> np.ndarray | None:
    # null vector of [x^2, y^2, x, y, 1] in coordinates centered on the sample
    ox, oy = float(np.mean(xs)), float(np.mean(ys))
    x, y = xs - ox, ys - oy
    design = np.column_stack([x * x, y * y, x, y, np.ones_like(x)])
    _, sv, vt = np.linalg.svd(design)
    if len(sv) >= 4 and not sv[3] > 1e-12 * sv[0]:
        return None
    a, c, d, e, f = vt[-1]
    if not a * c > 0:
        return None
    return ConicCoefficients(a, 0.0, c, d, e, f).translated(ox, oy).as_array()


def _geometric(coef) -> GeometricEllipse2D | None:
    try:
        return to_geometric(ConicCoefficients(*coef))
    except FitError:
        return None


def ransac_ellipse(xs, ys, cfg: RansacConfig = RansacConfig(), rng=None, seed: int = 0) -> RansacResult:
    """Best-supported admissible ellipse over ``cfg.k`` random minimal samples.

    A candidate is admissible when it is a real ellipse with
    ``r_minor / r_major >= cfg.ratio_min``. The winner is refitted to its
    inliers with the direct least-squares fit.

    Raises
    ------
    RansacError
        Too few points, or no admissible candidate in any iteration.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    n = cfg.samples_per_model
    if len(xs) < n:
        raise RansacError(f"need at least {n} points, have {len(xs)}")
    rng = rng if rng is not None else np.random.default_rng(seed)
    sample_fit = _axis_aligned if n == 4 else _direct
    best_count, best_mask, best_coef = -1, None, None
    k = cfg.k
    for _ in range(k):
        idx = rng.choice(len(xs), size=n, replace=False)
        coef = sample_fit(xs[idx], ys[idx])
        if coef is None:
            continue
        geo = _geometric(coef)
        if geo is None or geo.ratio < cfg.ratio_min:
            continue
        mask = sampson_distances(coef, xs, ys) <= cfg.inlier_tol
        count = int(mask.sum())
        if count > best_count:
            best_count, best_mask, best_coef = count, mask, coef
    if best_coef is None:
        raise RansacError("no admissible ellipse candidate")
    coef = best_coef
    if best_count >= 6:
        refit = _direct(xs[best_mask], ys[best_mask])
        if refit is not None:
            geo = _geometric(refit)
            if geo is not None and geo.ratio >= cfg.ratio_min:
                coef = refit
    return RansacResult(_geometric(coef), ConicCoefficients(*coef), best_mask, k)
