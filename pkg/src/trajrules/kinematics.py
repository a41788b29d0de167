"""Kinematic series, lane-change detection, and per-vehicle feature vectors.

Speed is the central difference of Euclidean displacement over two frames;
acceleration and jerk are central differences of the level below. Each
derivative level therefore loses one sample at both ends, and valid_range
records the frame span each series actually covers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TooShortError, WindowTooLongError
from .trajectory import Trajectory

#: Feature atoms derivable from a single trajectory with no extra context.
CORE_ATOMS = (
    "mean_speed",
    "std_speed",
    "mean_accel",
    "std_accel",
    "std_jerk",
    "lane_change_count",
)

#: Atoms that need more than raw positions; supplied when computable.
EXTENDED_ATOMS = (
    "max_decel",
    "lane_change_rate",
    "speed_fluctuation_rate",
    "pre_lane_change_decel",
    "lane_change_angle",
    "following_accel_delta",
)

ATOMS = CORE_ATOMS + EXTENDED_ATOMS

#: |acceleration| a swing must reach for a sign change to count as a fluctuation.
FLUCTUATION_MAGNITUDE = 0.1

#: Seconds of acceleration history inspected ahead of each lane change.
PRE_LC_WINDOW_S = 2.0


@dataclass(frozen=True, eq=False)
class KinematicSeries:
    """Velocity/acceleration/jerk samples plus the frame span of each series.

    valid_range maps series name to (first_frame, last_frame), or to None
    when the trajectory is too short for that derivative level.
    """

    velocity: np.ndarray
    acceleration: np.ndarray
    jerk: np.ndarray
    valid_range: dict[str, tuple[int, int] | None]
    frame_rate: float


@dataclass(frozen=True)
class LaneChangeEvent:
    start_frame: int
    end_frame: int
    cumulative_displacement: float
    direction: str  # "left" or "right"


@dataclass(frozen=True)
class FeatureVector:
    """Population statistics of one vehicle's kinematics."""

    mean_speed: float
    std_speed: float
    mean_accel: float
    std_accel: float
    std_jerk: float
    lane_change_count: int
    duration: float
    unit_system: str
    vehicle_id: str | None = None

    def atoms(self) -> dict[str, float]:
        """Feature mapping keyed by atom name, for rule evaluation."""
        return {
            "mean_speed": self.mean_speed,
            "std_speed": self.std_speed,
            "mean_accel": self.mean_accel,
            "std_accel": self.std_accel,
            "std_jerk": self.std_jerk,
            "lane_change_count": float(self.lane_change_count),
        }


def _span(frames: np.ndarray, offset: int, length: int) -> tuple[int, int] | None:
    if length <= 0:
        return None
    return int(frames[offset]), int(frames[offset + length - 1])


def compute_kinematics(traj: Trajectory) -> KinematicSeries:
    """Central-difference velocity, acceleration, and jerk in scaled units.

    Expects a validated trajectory (contiguous frames). Velocity is two
    samples shorter than the positions, acceleration two shorter than
    velocity, jerk two shorter again (empty when that goes nonpositive).
    """
    n = len(traj.points)
    if n < 5:
        raise TooShortError(f"{traj.vehicle_id}: need at least 5 points, got {n}")
    xs, ys = traj.xy()
    sx = xs * traj.unit_scale
    sy = ys * traj.unit_scale
    dt2 = 2.0 * traj.dt
    dx = sx[2:] - sx[:-2]
    dy = sy[2:] - sy[:-2]
    velocity = np.sqrt(dx * dx + dy * dy) / dt2
    acceleration = (velocity[2:] - velocity[:-2]) / dt2
    jerk = (acceleration[2:] - acceleration[:-2]) / dt2
    frames = traj.frames()
    return KinematicSeries(
        velocity=velocity,
        acceleration=acceleration,
        jerk=jerk,
        valid_range={
            "velocity": _span(frames, 1, len(velocity)),
            "acceleration": _span(frames, 2, len(acceleration)),
            "jerk": _span(frames, 3, len(jerk)),
        },
        frame_rate=traj.frame_rate,
    )


def detect_lane_changes(
    traj: Trajectory,
    window: int = 120,
    threshold: float = 50.0,
) -> list[LaneChangeEvent]:
    """Detect lane changes from cumulative lateral displacement.

    A window starting at point t accumulates |dy| over its next *window*
    steps (so it spans window+1 points) and fires when that sum exceeds
    *threshold* while the net signed displacement over the same span exceeds
    threshold/2; the net test suppresses in-lane oscillation. Overlapping
    firing windows merge into one event, represented by the window with the
    largest cumulative displacement (earliest on ties), so every reported
    event spans exactly *window* frames.
    """
    if window < 2:
        raise ValueError(f"window must be at least 2, got {window}")
    if threshold <= 0:
        raise ValueError(f"threshold must be positive, got {threshold}")
    n = len(traj.points)
    if window > n - 1:
        raise WindowTooLongError(
            f"window of {window} steps needs {window + 1} points, trajectory has {n}"
        )
    _, ys = traj.xy()
    sy = ys * traj.unit_scale
    dy = np.diff(sy)
    csum = np.concatenate(([0.0], np.cumsum(np.abs(dy))))
    roll = csum[window:] - csum[:-window]  # indexed by window start t
    net = sy[window:] - sy[:-window]
    fired = np.flatnonzero((roll > threshold) & (np.abs(net) > threshold / 2.0))
    if fired.size == 0:
        return []

    frames = traj.frames()
    events: list[LaneChangeEvent] = []
    group_start = 0
    for i in range(1, len(fired) + 1):
        if i < len(fired) and fired[i] - fired[i - 1] <= window - 1:
            continue
        group = fired[group_start:i]
        rep = int(group[np.argmax(roll[group])])
        events.append(LaneChangeEvent(
            start_frame=int(frames[rep]),
            end_frame=int(frames[rep + window - 1]),
            cumulative_displacement=float(roll[rep]),
            direction="left" if net[rep] < 0 else "right",
        ))
        group_start = i
    return events


def summarize_features(
    traj: Trajectory,
    kin: KinematicSeries,
    events: list[LaneChangeEvent],
) -> FeatureVector:
    """Collapse kinematic series into a FeatureVector (population statistics)."""
    def mean(a: np.ndarray) -> float:
        return float(np.mean(a)) if a.size else 0.0

    def std(a: np.ndarray) -> float:
        return float(np.std(a)) if a.size else 0.0

    return FeatureVector(
        mean_speed=mean(kin.velocity),
        std_speed=std(kin.velocity),
        mean_accel=mean(kin.acceleration),
        std_accel=std(kin.acceleration),
        std_jerk=std(kin.jerk),
        lane_change_count=len(events),
        duration=traj.duration,
        unit_system=traj.unit_system,
        vehicle_id=traj.vehicle_id,
    )


def count_fluctuations(acceleration: np.ndarray, magnitude: float = FLUCTUATION_MAGNITUDE) -> int:
    """Count acceleration sign changes whose swing reaches ±magnitude.

    Samples with |a| < magnitude are ignored, so small ripple around zero does
    not register; each transition between a-dips below -magnitude and peaks
    above +magnitude counts once.
    """
    significant = acceleration[np.abs(acceleration) >= magnitude]
    if significant.size < 2:
        return 0
    signs = np.sign(significant)
    return int(np.count_nonzero(signs[1:] != signs[:-1]))


def extended_atoms(
    traj: Trajectory,
    kin: KinematicSeries,
    events: list[LaneChangeEvent],
) -> dict[str, float]:
    """Derive the extended atoms that raw positions support.

    Returns max_decel, lane_change_rate, and speed_fluctuation_rate whenever
    the acceleration series is non-empty, plus pre_lane_change_decel when at
    least one lane change leaves enough acceleration history ahead of it.
    lane_change_angle and following_accel_delta need data this package does
    not extract (steering geometry, surrounding vehicles) and are never
    emitted here; rules over them evaluate as not applicable.
    """
    out: dict[str, float] = {}
    accel = kin.acceleration
    duration_min = traj.duration / 60.0
    if accel.size:
        out["max_decel"] = float(max(0.0, -np.min(accel)))
        out["speed_fluctuation_rate"] = count_fluctuations(accel) / duration_min
    out["lane_change_rate"] = len(events) / duration_min

    span = kin.valid_range["acceleration"]
    if events and span is not None:
        first_frame = span[0]
        window = PRE_LC_WINDOW_S * traj.frame_rate
        min_samples = max(3, int(traj.frame_rate))
        decels = []
        for ev in events:
            hi = ev.start_frame - first_frame  # accel index of event start
            lo = hi - int(round(window))
            segment = accel[max(0, lo):max(0, hi)]
            if segment.size >= min_samples:
                decels.append(max(0.0, -float(np.mean(segment))))
        if decels:
            out["pre_lane_change_decel"] = float(np.mean(decels))
    return out


def filter_stationary(
    trajectories: list[Trajectory],
    min_mean_speed: float = 0.5,
) -> list[Trajectory]:
    """Drop parked or crawling vehicles (mean speed below the threshold)."""
    kept = []
    for traj in trajectories:
        kin = compute_kinematics(traj)
        if float(np.mean(kin.velocity)) >= min_mean_speed:
            kept.append(traj)
    return kept
