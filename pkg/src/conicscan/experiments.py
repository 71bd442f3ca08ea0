"""Synthetic re-runs of the evaluation: noise, accuracy, occlusion, velocity,
RANSAC comparison and throughput.

Every function returns a list of row dicts whose keys mirror the columns of
the corresponding table, so the CLI can write them straight to CSV.
"""
from __future__ import annotations

import math
import time
from dataclasses import replace

import numpy as np

from .classifier import ClassifierConfig, detect_frame
from .chains import ChainConfig
from .geometry import default_intrinsics
from .ransac import RansacConfig, RansacError, ransac_ellipse
from .segmenter import SegmenterConfig, segment_2d
from .synth import (
    SceneSpec,
    Occluder,
    back_wall,
    cylinder_wall_slice,
    floor_plane,
    paper_scene,
    render,
    sample_ellipse_2d,
    trash_can,
)
from .tracking import KalmanConfig, Tracker, estimate_velocity, raw_velocity

__all__ = [
    "FRAME_RATE",
    "WARMUP_FRAMES",
    "range_noise",
    "noise_experiment",
    "accuracy_experiment",
    "occlusion_experiment",
    "velocity_experiment",
    "ransac_experiment",
    "bench",
    "EXPERIMENTS",
]

FRAME_RATE = 30.0
# filtered statistics skip the first frames, while the track's velocity settles
WARMUP_FRAMES = 10
# depth noise grows with range, roughly like a structured-light sensor
NOISE_BASE = 0.002
NOISE_SLOPE = 0.002


def range_noise(depth: float) -> float:
    """Standard deviation of synthetic range noise at ``depth`` meters."""
    return NOISE_BASE + NOISE_SLOPE * depth


def _room(objects, seed, occluders=(), wall=4.5):
    return SceneSpec(list(objects), [floor_plane(), back_wall(wall)], NOISE_BASE,
                     noise_slope=NOISE_SLOPE, occluders=list(occluders), seed=seed)


# ------------------------------------------------------------------ noise


def noise_experiment(sigmas=(0.0, 1.0, 2.0), seeds=50, r_major=40.0, r_minor=20.0, count=100):
    """Detection rate and radius spread of one noisy ellipse (pixel-grid units).

    The error threshold follows the noise level, as in the original setup.
    A run counts as a detection when one model covers at least half the
    points with both radii within 25 % of the truth.
    """
    rows = []
    for sigma in sigmas:
        cfg = SegmenterConfig(error_threshold=0.05 + 2.0 * sigma, radius_min=1.0, radius_max=1e3,
                              max_jump=0.0, min_front_support=0)
        found = []
        for seed in range(seeds):
            xs, ys, _ = sample_ellipse_2d(r_major, r_minor, 360.0, sigma, count, seed, center=(100.0, 100.0))
            best = None
            for m in segment_2d(xs, ys, cfg):
                e = m.ellipse
                ok = (m.support >= count // 2 and abs(e.r_major - r_major) <= 0.25 * r_major
                      and abs(e.r_minor - r_minor) <= 0.25 * r_minor)
                if ok and (best is None or m.support > best.support):
                    best = m
            if best is not None:
                found.append((best.ellipse.r_major, best.ellipse.r_minor))
        arr = np.array(found).reshape(-1, 2)
        rows.append({
            "sigma": sigma,
            "detection_rate": len(found) / seeds,
            "r_major_mean": float(arr[:, 0].mean()) if len(arr) else math.nan,
            "r_major_std": float(arr[:, 0].std()) if len(arr) else math.nan,
            "r_minor_mean": float(arr[:, 1].mean()) if len(arr) else math.nan,
            "r_minor_std": float(arr[:, 1].std()) if len(arr) else math.nan,
            "N": seeds,
        })
    return rows


# ---------------------------------------------------------------- tracking


def _track_series(frames, kind: str, kcfg: KalmanConfig, cfgs, measure=None):
    """Raw detections and filtered tracks of a single object over ``frames``.

    ``measure`` maps a detection to what is fed to the filter (default: the
    detection itself). Frames without exactly one detection of ``kind``
    count as misses; with several, the one nearest the track is used.
    """
    tracker = Tracker(kcfg)
    raw, tracks, misses = [], [], 0
    for frame in frames:
        hits = [p for p in detect_frame(frame, *cfgs) if p.kind == kind]
        if len(hits) != 1:
            misses += 1
        if len(hits) > 1 and tracks:
            hits = [min(hits, key=lambda p: math.dist(p.center, tracks[-1].position))]
        hits = hits[:1]
        current = tracker.step([measure(p) for p in hits] if measure else hits, frame.timestamp)
        if hits:
            raw.append(hits[0])
            tracks.append(min(current, key=lambda tr: math.dist(tr.position, hits[0].center)))
    return raw, tracks, misses


def _stats(values):
    v = np.asarray(values, dtype=float)
    if len(v) == 0:
        return math.nan, math.nan
    return float(v.mean()), float(v.std())


def _default_cfgs():
    return SegmenterConfig(), ChainConfig(), ClassifierConfig()


def accuracy_experiment(distances=(1.0, 1.5, 2.0, 2.5, 3.0), frames=56, seed=0,
                        kcfg: KalmanConfig = KalmanConfig(), cfgs=None):
    """Static cylinder (R = 0.2 m) at several ranges, raw versus filtered."""
    cfgs = cfgs or _default_cfgs()
    rows = []
    for dist in distances:
        scene = _room([trash_can(0.0, dist)], seed)
        series = (render(scene, t=i / FRAME_RATE) for i in range(frames))
        raw, tracks, misses = _track_series(series, "cylinder", kcfg, cfgs)
        d_m, d_s = _stats([p.distance for p in raw])
        r_m, r_s = _stats([p.radius for p in raw])
        d_k, d_ks = _stats([tr.distance for tr in tracks[WARMUP_FRAMES:]])
        r_k, r_ks = _stats([tr.radius for tr in tracks[WARMUP_FRAMES:]])
        rows.append({"D_G": dist, "D_M": d_m, "D_sigma": d_s, "R_M": r_m, "R_sigma": r_s,
                     "D_K": d_k, "D_Ksigma": d_ks, "R_K": r_k, "R_Ksigma": r_ks,
                     "N": len(raw), "missed": misses})
    return rows


def occlusion_experiment(distances=(1.0, 1.5, 2.0), fractions=(0.1, 0.2, 0.3, 0.4, 0.5),
                         frames=30, seed=0, kcfg: KalmanConfig = KalmanConfig(), cfgs=None):
    """Cylinder (R = 0.2 m) hidden by a panel over a growing share of its width.

    ``R`` is the radius from the ellipses alone, which shrinks with the
    visible arc; ``R_fit`` is the surface-fitted radius. ``detected`` is
    the share of frames with a detection.
    """
    cfgs = cfgs or _default_cfgs()
    rows = []
    for dist in distances:
        for frac in fractions:
            scene = _room([trash_can(0.0, dist)], seed, [Occluder(0, frac)])
            series = (render(scene, t=i / FRAME_RATE) for i in range(frames))
            raw, tracks, _ = _track_series(series, "cylinder", kcfg, cfgs,
                                           lambda p: replace(p, radius=p.zr_radius))
            r, r_s = _stats([p.zr_radius for p in raw])
            r_fit, _ = _stats([p.radius for p in raw])
            r_k, r_ks = _stats([tr.radius for tr in tracks[WARMUP_FRAMES:]])
            rows.append({"D_G": dist, "O_pct": int(round(frac * 100)), "R": r, "R_sigma": r_s,
                         "R_K": r_k, "R_Ksigma": r_ks, "R_fit": r_fit, "N": len(raw),
                         "detected": len(raw) / frames})
    return rows


PAPER_SPEEDS = ((0.21, 97), (0.65, 63), (0.71, 27), (1.09, 22), (1.54, 13), (1.64, 6), (2.66, 6))


def velocity_experiment(speeds=PAPER_SPEEDS, start=1.0, seed=0,
                        kcfg: KalmanConfig = KalmanConfig(), cfgs=None):
    """Cylinder receding from the sensor at constant speed.

    ``V_M`` averages finite-difference range rates, ``V_K`` the filtered
    speed; ``speeds`` pairs each speed with its number of observations.
    """
    cfgs = cfgs or _default_cfgs()
    rows = []
    for speed, count in speeds:
        scene = _room([trash_can(0.0, start, velocity=(0.0, 0.0, speed))], seed, wall=start + 5.0)
        series = (render(scene, t=i / FRAME_RATE) for i in range(count))
        raw, tracks, misses = _track_series(series, "cylinder", kcfg, cfgs)
        if len(tracks) >= 2:
            v_m, v_s = _stats(raw_velocity(tracks[-1]))
            v_k, v_ks = _stats([estimate_velocity(tr) for tr in tracks if tr.updates >= 2])
        else:
            v_m = v_s = v_k = v_ks = math.nan
        rows.append({"V_G": speed, "V_M": v_m, "V_sigma": v_s, "V_K": v_k, "V_Ksigma": v_ks,
                     "N": len(raw), "missed": misses})
    return rows


# ------------------------------------------------------------------ RANSAC


def _wall_supported(labels) -> bool:
    return len(labels) > 0 and float(np.mean(labels == 0)) > 0.5


def ransac_experiment(trials=200, ratio_mins=(0.2, 0.4), samples=(4, 5), sigma=0.005, seed=0,
                      seg_cfg: SegmenterConfig | None = None):
    """Incremental segmenter versus RANSAC on a cylinder-before-wall slice.

    A fit is degenerate when most of its support comes from the wall.
    Times are mean milliseconds per slice.
    """
    seg_cfg = seg_cfg or SegmenterConfig()
    slices = [cylinder_wall_slice(sigma=sigma, seed=seed + i) for i in range(trials)]
    rows = []
    degenerate = found = 0
    segment_2d(*slices[0][:2], seg_cfg)  # compile outside the timed region
    t0 = time.perf_counter()
    results = [segment_2d(xs, ys, seg_cfg) for xs, ys, _ in slices]
    elapsed = time.perf_counter() - t0
    for (xs, ys, labels), models in zip(slices, results):
        kept = [m for m in models if m.ellipse.ratio >= seg_cfg.elongation_min
                and seg_cfg.radius_min <= m.r2 <= seg_cfg.radius_max
                and m.front_support >= seg_cfg.min_front_support]
        degenerate += any(_wall_supported(labels[m.start:m.stop]) for m in kept)
        found += any(not _wall_supported(labels[m.start:m.stop]) for m in kept)
    rows.append({"method": "incremental", "ratio_min": seg_cfg.elongation_min, "samples": "",
                 "k": 1, "time_ms": 1e3 * elapsed / trials, "degenerate_rate": degenerate / trials,
                 "found_rate": found / trials})
    for n in samples:
        for ratio_min in ratio_mins:
            cfg = RansacConfig(samples_per_model=n, ratio_min=ratio_min, inlier_tol=2.0 * sigma)
            degenerate = found = 0
            t0 = time.perf_counter()
            fits = []
            for i, (xs, ys, _) in enumerate(slices):
                try:
                    fits.append(ransac_ellipse(xs, ys, cfg, seed=seed + i))
                except RansacError:
                    fits.append(None)
            elapsed = time.perf_counter() - t0
            for (xs, ys, labels), fit in zip(slices, fits):
                if fit is None:
                    continue
                if _wall_supported(labels[fit.inliers]):
                    degenerate += 1
                else:
                    found += 1
            rows.append({"method": "ransac", "ratio_min": ratio_min, "samples": n, "k": cfg.k,
                         "time_ms": 1e3 * elapsed / trials, "degenerate_rate": degenerate / trials,
                         "found_rate": found / trials})
    return rows


# --------------------------------------------------------------- throughput


def bench(sizes=((160, 120), (320, 240), (640, 480)), frames=30, seed=0, noise=0.005,
          cfgs=None, transpose=False):
    """End-to-end frame rate and stage breakdown per resolution.

    Frames are rendered up front; only detection is timed. The last row
    holds the log-log slope of runtime against pixel count.
    """
    cfgs = cfgs or _default_cfgs()
    rows = []
    for width, height in sizes:
        k = default_intrinsics(width, height)
        scene = paper_scene(noise_sigma=noise, seed=seed)
        data = [render(scene, k, t=i / FRAME_RATE) for i in range(frames)]
        detect_frame(data[0], *cfgs, transpose=transpose)
        timings: dict = {}
        t0 = time.perf_counter()
        counts = [len(detect_frame(f, *cfgs, transpose=transpose, timings=timings)) for f in data]
        elapsed = time.perf_counter() - t0
        row = {"width": width, "height": height, "pixels": width * height,
               "ms_per_frame": 1e3 * elapsed / frames, "fps": frames / elapsed,
               "primitives": float(np.mean(counts))}
        for stage in ("segment", "chain", "classify"):
            row[f"{stage}_ms"] = timings.get(stage, 0.0) / frames / 1e3
        rows.append(row)
    if len(rows) >= 2:
        px = np.log([r["pixels"] for r in rows])
        tm = np.log([r["ms_per_frame"] for r in rows])
        slope = float(np.polyfit(px, tm, 1)[0])
        for r in rows:
            r["scaling_exponent"] = slope
    return rows


EXPERIMENTS = {
    "noise": noise_experiment,
    "accuracy": accuracy_experiment,
    "occlusion": occlusion_experiment,
    "velocity": velocity_experiment,
    "ransac": ransac_experiment,
}
