"""Kalman filtering and frame-to-frame association of detected primitives.

State ``[px, py, pz, vx, vy, vz, r]``: position of the primitive's center,
its velocity and its radius. Position follows a constant-velocity model
driven by white acceleration noise; the radius is a slow random walk.
Measurements are center and radius.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "KalmanConfig",
    "TrackState",
    "TrackError",
    "initiate",
    "predict",
    "update",
    "innovation",
    "associate_and_step",
    "estimate_velocity",
    "raw_velocity",
    "Tracker",
]

NSTATE = 7
H = np.zeros((4, NSTATE))
H[0, 0] = H[1, 1] = H[2, 2] = H[3, 6] = 1.0


class TrackError(ValueError):
    """Invalid measurement or a track without enough history."""


@dataclass(frozen=True)
class KalmanConfig:
    """Noise model and track bookkeeping.

    Parameters
    ----------
    process_noise : float
        Acceleration noise density per axis, m^2/s^3.
    radius_noise : float
        Random-walk density of the radius, m^2/s.
    measurement_noise : tuple of float
        Variances of the measured ``(px, py, pz, r)``, m^2.
    initial_velocity_std : float
        Prior standard deviation of a new track's velocity, m/s.
    gate_distance : float
        Largest predicted-to-detected center distance for a match, m.
    max_missed : int
        Frames without a match after which a track is dropped.
    """

    process_noise: float = 1e-3
    radius_noise: float = 1e-6
    measurement_noise: tuple[float, float, float, float] = (4e-6, 4e-6, 4e-6, 4e-6)
    initial_velocity_std: float = 2.0
    gate_distance: float = 0.3
    max_missed: int = 10

    def __post_init__(self):
        object.__setattr__(self, "measurement_noise", tuple(float(v) for v in self.measurement_noise))
        if len(self.measurement_noise) != 4:
            raise ValueError("measurement_noise needs four variances (px, py, pz, r)")
        values = (self.process_noise, self.radius_noise, self.initial_velocity_std,
                  self.gate_distance, *self.measurement_noise)
        if not all(v > 0 for v in values) or self.max_missed < 1:
            raise ValueError("Kalman settings must be positive")


@dataclass(frozen=True)
class TrackState:
    """One tracked object.

    ``t`` is the time the state refers to, ``last_seen`` the time of the
    last matched detection. ``history`` keeps ``(t, distance)`` of the raw
    measurements for finite-difference velocity estimates.
    """

    x: np.ndarray
    P: np.ndarray
    t: float
    last_seen: float
    kind: str
    id: int
    updates: int = 1
    missed: int = 0
    history: tuple[tuple[float, float], ...] = field(default_factory=tuple)

    @property
    def position(self) -> np.ndarray:
        return self.x[:3]

    @property
    def velocity(self) -> np.ndarray:
        return self.x[3:6]

    @property
    def radius(self) -> float:
        return float(self.x[6])

    @property
    def distance(self) -> float:
        return float(np.linalg.norm(self.x[:3]))


def _measurement(meas) -> np.ndarray:
    """``(px, py, pz, r)`` from a sequence or a detected primitive."""
    if hasattr(meas, "center") and hasattr(meas, "radius"):
        meas = (*meas.center, meas.radius)
    z = np.asarray(meas, dtype=float).reshape(-1)
    if z.shape != (4,) or not np.all(np.isfinite(z)):
        raise TrackError(f"measurement must be four finite numbers, got {meas!r}")
    return z


def initiate(meas, t: float, cfg: KalmanConfig = KalmanConfig(), kind: str = "cylinder",
             track_id: int = 0) -> TrackState:
    """New track at a first detection, velocity unknown."""
    z = _measurement(meas)
    x = np.zeros(NSTATE)
    x[:3] = z[:3]
    x[6] = z[3]
    r = cfg.measurement_noise
    P = np.diag([r[0], r[1], r[2], *(3 * [cfg.initial_velocity_std ** 2]), r[3]])
    return TrackState(x, P, float(t), float(t), kind, int(track_id),
                      history=((float(t), float(np.linalg.norm(z[:3]))),))


def _transition(dt: float, cfg: KalmanConfig):
    F = np.eye(NSTATE)
    F[0, 3] = F[1, 4] = F[2, 5] = dt
    q = cfg.process_noise
    Q = np.zeros((NSTATE, NSTATE))
    for i in range(3):
        Q[i, i] = q * dt ** 3 / 3.0
        Q[i, i + 3] = Q[i + 3, i] = q * dt ** 2 / 2.0
        Q[i + 3, i + 3] = q * dt
    Q[6, 6] = cfg.radius_noise * dt
    return F, Q


def predict(track: TrackState, dt: float, cfg: KalmanConfig = KalmanConfig()) -> TrackState:
    """Propagate the state ``dt`` seconds ahead."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    F, Q = _transition(dt, cfg)
    P = F @ track.P @ F.T + Q
    return replace(track, x=F @ track.x, P=0.5 * (P + P.T), t=track.t + dt)


def innovation(track: TrackState, meas, cfg: KalmanConfig = KalmanConfig()):
    """Innovation ``y``, its covariance ``S`` and the normalized squared innovation."""
    z = _measurement(meas)
    y = z - H @ track.x
    S = H @ track.P @ H.T + np.diag(cfg.measurement_noise)
    return y, S, float(y @ np.linalg.solve(S, y))


def update(track: TrackState, meas, cfg: KalmanConfig = KalmanConfig()) -> TrackState:
    """Standard Kalman correction with a center-and-radius measurement.

    The covariance uses the Joseph form, which keeps it symmetric positive
    semidefinite under rounding.
    """
    z = _measurement(meas)
    y, S, _ = innovation(track, z, cfg)
    K = np.linalg.solve(S, H @ track.P).T
    x = track.x + K @ y
    x[6] = max(x[6], 1e-9)
    IKH = np.eye(NSTATE) - K @ H
    P = IKH @ track.P @ IKH.T + K @ np.diag(cfg.measurement_noise) @ K.T
    return replace(
        track, x=x, P=0.5 * (P + P.T), last_seen=track.t, updates=track.updates + 1, missed=0,
        history=track.history + ((track.t, float(np.linalg.norm(z[:3]))),),
    )


def _advance(track: TrackState, t: float, cfg: KalmanConfig) -> TrackState:
    return predict(track, t - track.t, cfg) if t > track.t else track


def associate_and_step(tracks, detections, t: float, cfg: KalmanConfig = KalmanConfig(),
                       ids=None) -> list[TrackState]:
    """Advance all tracks to time ``t`` and fold in one frame's detections.

    Pairs are matched greedily by predicted-center distance, closest first,
    within ``gate_distance`` and only between equal kinds. Unmatched
    detections start new tracks with ids drawn from ``ids`` (default: one
    past the largest current id); tracks missed ``max_missed`` times in a
    row are dropped.
    """
    predicted = [_advance(tr, t, cfg) for tr in tracks]
    if ids is None:
        ids = itertools.count(max((tr.id for tr in tracks), default=-1) + 1)
    pairs = []
    for i, tr in enumerate(predicted):
        for j, det in enumerate(detections):
            if det.kind != tr.kind:
                continue
            dist = math.dist(tr.position, det.center)
            if dist <= cfg.gate_distance:
                pairs.append((dist, i, j))
    pairs.sort()
    matched_t, matched_d = {}, set()
    for _, i, j in pairs:
        if i in matched_t or j in matched_d:
            continue
        matched_t[i] = j
        matched_d.add(j)
    out = []
    for i, tr in enumerate(predicted):
        if i in matched_t:
            out.append(update(tr, detections[matched_t[i]], cfg))
        elif tr.missed + 1 < cfg.max_missed:
            out.append(replace(tr, missed=tr.missed + 1))
    for j, det in enumerate(detections):
        if j not in matched_d:
            out.append(initiate(det, t, cfg, det.kind, next(ids)))
    return out


def estimate_velocity(track: TrackState) -> float:
    """Speed from the filtered velocity, m/s.

    Raises
    ------
    TrackError
        The track has fewer than two measurements.
    """
    if track.updates < 2:
        raise TrackError("velocity needs at least two measurements")
    return float(np.linalg.norm(track.velocity))


def raw_velocity(track: TrackState) -> np.ndarray:
    """Finite-difference range rates between consecutive raw measurements, m/s."""
    if len(track.history) < 2:
        raise TrackError("velocity needs at least two measurements")
    t, d = np.asarray(track.history, dtype=float).T
    return np.diff(d) / np.diff(t)


class Tracker:
    """Track store for one detection stream."""

    def __init__(self, cfg: KalmanConfig = KalmanConfig()):
        self.cfg = cfg
        self.tracks: list[TrackState] = []
        self._ids = itertools.count()

    def step(self, detections, t: float) -> list[TrackState]:
        self.tracks = associate_and_step(self.tracks, detections, t, self.cfg, self._ids)
        return self.tracks
