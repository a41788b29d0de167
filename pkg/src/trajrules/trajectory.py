"""Trajectory records: validation, gap repair, and Kalman smoothing.

Positions are stored in native coordinates (pixels or meters); unit_scale
converts native lengths into the unit system the features are reported in.
All downstream math assumes a validated trajectory: strictly increasing,
contiguous frame indices and finite coordinates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    DuplicateFrameError,
    NonFiniteError,
    NonPositiveError,
    TooShortError,
)

MIN_POINTS = 5
MAX_GAP_FRAMES = 3

LABELS = ("AV", "HDV")
UNIT_SYSTEMS = ("pixel", "metric")


@dataclass(frozen=True)
class TimedPoint:
    """One observation: frame index plus native x/y position."""

    t: int
    x: float
    y: float


@dataclass
class Trajectory:
    vehicle_id: str
    points: list[TimedPoint]
    frame_rate: float
    unit_scale: float = 1.0
    unit_system: str = "metric"
    label: str | None = None

    def __len__(self) -> int:
        return len(self.points)

    @property
    def dt(self) -> float:
        return 1.0 / self.frame_rate

    @property
    def duration(self) -> float:
        """Covered time span in seconds (point count over frame rate)."""
        return len(self.points) / self.frame_rate

    def frames(self) -> np.ndarray:
        return np.array([p.t for p in self.points], dtype=np.int64)

    def xy(self) -> tuple[np.ndarray, np.ndarray]:
        xs = np.array([p.x for p in self.points], dtype=np.float64)
        ys = np.array([p.y for p in self.points], dtype=np.float64)
        return xs, ys


def _check_metadata(traj: Trajectory) -> None:
    if not math.isfinite(traj.frame_rate) or traj.frame_rate <= 0:
        raise NonPositiveError(f"frame_rate must be positive, got {traj.frame_rate}")
    if not math.isfinite(traj.unit_scale) or traj.unit_scale <= 0:
        raise NonPositiveError(f"unit_scale must be positive, got {traj.unit_scale}")
    if traj.unit_system not in UNIT_SYSTEMS:
        raise ValueError(f"unit_system must be one of {UNIT_SYSTEMS}, got {traj.unit_system!r}")
    if traj.label is not None and traj.label not in LABELS:
        raise ValueError(f"label must be one of {LABELS} or None, got {traj.label!r}")


def validate_trajectory(traj: Trajectory) -> Trajectory:
    """Return a cleaned copy of *traj* ready for kinematic math.

    Points are sorted by frame; gaps of up to MAX_GAP_FRAMES missing frames
    are filled by linear interpolation; longer gaps split the trajectory and
    the longest contiguous segment (first on ties) is kept.

    Raises NonPositiveError, NonFiniteError, DuplicateFrameError, or
    TooShortError (fewer than MIN_POINTS points after repair).
    """
    _check_metadata(traj)
    pts = sorted(traj.points, key=lambda p: p.t)
    for p in pts:
        if not (math.isfinite(p.x) and math.isfinite(p.y)):
            raise NonFiniteError(f"{traj.vehicle_id}: non-finite position at frame {p.t}")
        if p.t < 0:
            raise ValueError(f"{traj.vehicle_id}: negative frame index {p.t}")
    for a, b in zip(pts, pts[1:]):
        if a.t == b.t:
            raise DuplicateFrameError(f"{traj.vehicle_id}: duplicate frame {a.t}")

    segments: list[list[TimedPoint]] = [[pts[0]]] if pts else [[]]
    for prev, cur in zip(pts, pts[1:]):
        missing = cur.t - prev.t - 1
        if missing == 0:
            segments[-1].append(cur)
        elif missing <= MAX_GAP_FRAMES:
            for k in range(1, missing + 1):
                frac = k / (missing + 1)
                segments[-1].append(TimedPoint(
                    t=prev.t + k,
                    x=prev.x + frac * (cur.x - prev.x),
                    y=prev.y + frac * (cur.y - prev.y),
                ))
            segments[-1].append(cur)
        else:
            segments.append([cur])

    best = max(segments, key=len)
    if len(best) < MIN_POINTS:
        raise TooShortError(
            f"{traj.vehicle_id}: {len(best)} points after repair, need {MIN_POINTS}"
        )
    return replace(traj, points=best)


def _filter_axis(z: np.ndarray, dt: float, q: float, r: float) -> np.ndarray:
    """Constant-velocity Kalman filter along one axis; returns position estimates.

    State is [position, velocity], initialized by two-point differencing so
    exactly linear input passes through unchanged. q scales the white-noise
    acceleration spectral density; r is the measurement variance.
    """
    n = len(z)
    out = np.empty(n, dtype=np.float64)
    out[0] = x = float(z[0])
    v = (float(z[1]) - float(z[0])) / dt
    # two-point differencing initial covariance
    p00 = r
    p01 = r / dt
    p11 = 2.0 * r / (dt * dt)
    q00 = q * dt ** 4 / 4.0
    q01 = q * dt ** 3 / 2.0
    q11 = q * dt * dt
    for k in range(1, n):
        # predict
        x = x + v * dt
        p00 = p00 + dt * (2.0 * p01 + dt * p11) + q00
        p01 = p01 + dt * p11 + q01
        p11 = p11 + q11
        # update
        s = p00 + r
        kx = p00 / s
        kv = p01 / s
        innov = float(z[k]) - x
        x += kx * innov
        v += kv * innov
        p11 = p11 - kv * p01
        p01 = (1.0 - kx) * p01
        p00 = (1.0 - kx) * p00
        out[k] = x
    return out


def smooth_trajectory(
    traj: Trajectory,
    process_noise: float = 1e-2,
    measurement_noise: float = 1.0,
) -> Trajectory:
    """Kalman-smooth positions with an independent constant-velocity model per axis.

    Output has the same length, frames, and metadata as the input; only x/y
    change. measurement_noise is the position noise variance in native units
    squared; process_noise trades smoothness against responsiveness.
    """
    if process_noise <= 0 or measurement_noise <= 0:
        raise NonPositiveError("process_noise and measurement_noise must be positive")
    if len(traj.points) < 2:
        return replace(traj, points=list(traj.points))
    xs, ys = traj.xy()
    fx = _filter_axis(xs, traj.dt, process_noise, measurement_noise)
    fy = _filter_axis(ys, traj.dt, process_noise, measurement_noise)
    pts = [
        TimedPoint(t=p.t, x=float(fx[i]), y=float(fy[i]))
        for i, p in enumerate(traj.points)
    ]
    return replace(traj, points=pts)
