"""Shared builders for the test suite."""
from __future__ import annotations

import numpy as np

from trajrules.trajectory import TimedPoint, Trajectory


def make_trajectory(xs, ys, frame_rate=25.0, vehicle_id="veh", **kwargs):
    points = [TimedPoint(i, float(x), float(y)) for i, (x, y) in enumerate(zip(xs, ys))]
    return Trajectory(vehicle_id=vehicle_id, points=points, frame_rate=frame_rate, **kwargs)


def random_walk_trajectory(rng, n=None, frame_rate=None, vehicle_id="veh"):
    """Smooth-ish random motion: integrated random accelerations plus drift."""
    if n is None:
        n = int(rng.integers(7, 120))
    if frame_rate is None:
        frame_rate = float(rng.choice([10.0, 25.0, 30.0]))
    dt = 1.0 / frame_rate
    ax = rng.normal(0.0, 1.0, n)
    ay = rng.normal(0.0, 0.5, n)
    vx = 10.0 + np.cumsum(ax) * dt
    vy = np.cumsum(ay) * dt
    xs = np.cumsum(vx) * dt
    ys = np.cumsum(vy) * dt
    return make_trajectory(xs, ys, frame_rate=frame_rate, vehicle_id=vehicle_id)


def sigmoid_shift(n, shift, center, steepness=0.08):
    """Lateral profile moving from 0 to shift around the center index."""
    idx = np.arange(n, dtype=np.float64)
    return shift / (1.0 + np.exp(-steepness * (idx - center)))
