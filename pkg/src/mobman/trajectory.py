"""Time parameterization of geometric paths.

Waypoint-to-waypoint durations are proportional to segment lengths within
a fixed horizon.  Configurations follow linear segments joined by
parabolic blends, so position and velocity are continuous, the endpoints
are interpolated exactly and interior waypoints are passed within the
blend radius.  For the non-holonomic base, motion is realized as
rotate-in-place followed by straight-line primitives whose headings come
from the full-quadrant arctangent of each segment, keeping the robot
facing its direction of travel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from mobman.kinematics import wrap_angle


class TrajectoryError(ValueError):
    pass


def segment_durations(waypoints, t_start: float, t_end: float) -> np.ndarray:
    """Durations proportional to segment lengths, summing exactly to the horizon."""
    wp = np.atleast_2d(np.asarray(waypoints, dtype=float))
    if t_end <= t_start:
        raise TrajectoryError("t_end must exceed t_start")
    if len(wp) < 2:
        raise TrajectoryError("need at least two waypoints")
    lengths = np.linalg.norm(np.diff(wp, axis=0), axis=1)
    total = float(np.sum(lengths))
    if total <= 0.0:
        raise TrajectoryError("zero-length path cannot be time-parameterized")
    if np.any(lengths <= 0.0):
        raise TrajectoryError("duplicate consecutive waypoints")
    horizon = t_end - t_start
    durations = lengths * horizon / total
    durations[-1] = horizon - float(np.sum(durations[:-1]))
    return durations


def heading_angles(waypoints_xy, phi_0: float, phi_d: float) -> list:
    """Heading list (phi_0, per-segment angles..., phi_d), head forward.

    Segment angles use the full-quadrant arctangent; a zero-length
    segment inherits the previous heading.
    """
    wp = np.atleast_2d(np.asarray(waypoints_xy, dtype=float))[:, :2]
    if len(wp) < 2:
        raise TrajectoryError("need at least two waypoints")
    angles = [float(phi_0)]
    prev = float(phi_0)
    for k in range(len(wp) - 1):
        dx, dy = wp[k + 1] - wp[k]
        if abs(dx) < 1e-15 and abs(dy) < 1e-15:
            angle = prev
        else:
            angle = math.atan2(dy, dx)
        angles.append(angle)
        prev = angle
    angles.append(float(phi_d))
    return angles


@dataclass
class _Piece:
    t0: float
    t1: float
    a: np.ndarray   # position at t0
    b: np.ndarray   # velocity at t0
    c: np.ndarray   # half-acceleration coefficient


@dataclass
class TimedTrajectory:
    """Piecewise-quadratic configuration trajectory with exact state queries."""

    pieces: list
    t_start: float
    t_end: float

    def state_at(self, t: float) -> np.ndarray:
        t = min(max(t, self.t_start), self.t_end)
        piece = self._find(t)
        tau = t - piece.t0
        return piece.a + piece.b * tau + piece.c * tau * tau

    def velocity_at(self, t: float) -> np.ndarray:
        t = min(max(t, self.t_start), self.t_end)
        piece = self._find(t)
        tau = t - piece.t0
        return piece.b + 2.0 * piece.c * tau

    def _find(self, t: float) -> _Piece:
        for piece in self.pieces:
            if t <= piece.t1:
                return piece
        return self.pieces[-1]

    def sample(self, dt: float = 0.01):
        n = max(1, int(math.ceil((self.t_end - self.t_start) / dt)))
        ts = self.t_start + np.arange(n + 1) * dt
        ts[-1] = self.t_end
        ts = np.minimum(ts, self.t_end)
        configs = np.array([self.state_at(t) for t in ts])
        return ts, configs


def interp_poly_blend(waypoints, durations, t_start: float,
                      blend_fraction: float = 0.1) -> TimedTrajectory:
    """Linear segments with parabolic blends through the waypoints.

    Interior blends last ``blend_fraction * min(adjacent durations)``;
    the first and last segment speeds are raised slightly so the
    rest-to-rest endpoint ramps still arrive exactly on schedule.
    """
    wp = np.atleast_2d(np.asarray(waypoints, dtype=float))
    dur = np.asarray(durations, dtype=float)
    if len(dur) != len(wp) - 1:
        raise TrajectoryError("need one duration per segment")
    if np.any(dur <= 0.0):
        raise TrajectoryError("durations must be positive")
    if not (0.0 < blend_fraction <= 0.5):
        raise TrajectoryError("blend fraction must lie in (0, 0.5]")

    m = len(dur)
    times = t_start + np.concatenate([[0.0], np.cumsum(dur)])
    tb_start = blend_fraction * dur[0]
    tb_end = blend_fraction * dur[-1]
    half = [0.5 * blend_fraction * min(dur[k], dur[k + 1]) for k in range(m - 1)]

    vel = [(wp[k + 1] - wp[k]) / dur[k] for k in range(m)]
    if m == 1:
        vel[0] = (wp[1] - wp[0]) / (dur[0] - 0.5 * tb_start - 0.5 * tb_end)
    else:
        vel[0] = (wp[1] - wp[0]) / (dur[0] - 0.5 * tb_start)
        vel[-1] = (wp[-1] - wp[-2]) / (dur[-1] - 0.5 * tb_end)

    pieces = []
    pos = wp[0].copy()

    def push(t0, t1, a, b, c):
        if t1 - t0 > 1e-15:
            pieces.append(_Piece(t0, t1, np.asarray(a, float),
                                 np.asarray(b, float), np.asarray(c, float)))

    # start ramp: rest -> v1
    t_cursor = times[0] + tb_start
    push(times[0], t_cursor, pos, np.zeros_like(pos), vel[0] / (2.0 * tb_start))
    pos = pos + vel[0] * (0.5 * tb_start)

    for k in range(m):
        cruise_end = (times[k + 1] - half[k]) if k < m - 1 \
            else (times[m] - tb_end)
        push(t_cursor, cruise_end, pos, vel[k], np.zeros_like(pos))
        pos = pos + vel[k] * (cruise_end - t_cursor)
        t_cursor = cruise_end
        if k < m - 1:
            h2 = 2.0 * half[k]
            dv = vel[k + 1] - vel[k]
            push(t_cursor, t_cursor + h2, pos, vel[k], dv / (2.0 * h2))
            pos = pos + vel[k] * h2 + dv * (0.5 * h2)
            t_cursor += h2

    # end ramp: v_m -> rest, constructed to land exactly on the last waypoint
    c_end = (wp[-1] - pos - vel[-1] * tb_end) / (tb_end * tb_end)
    push(t_cursor, times[m], pos, vel[-1], c_end)
    pieces[-1].t1 = times[m]
    return TimedTrajectory(pieces=pieces, t_start=float(times[0]),
                           t_end=float(times[m]))


# ---------------------------------------------------------------------------
# non-holonomic base motion

@dataclass
class RotateInPlace:
    t0: float
    t1: float
    position: np.ndarray
    phi_from: float
    phi_to: float

    def state_at(self, t: float):
        if self.t1 <= self.t0:
            u = 1.0
        else:
            u = min(max((t - self.t0) / (self.t1 - self.t0), 0.0), 1.0)
        dphi = wrap_angle(self.phi_to - self.phi_from)
        return np.array([self.position[0], self.position[1],
                         wrap_angle(self.phi_from + u * dphi)])


@dataclass
class StraightLine:
    t0: float
    t1: float
    p_from: np.ndarray
    p_to: np.ndarray
    heading: float

    def state_at(self, t: float):
        if self.t1 <= self.t0:
            u = 1.0
        else:
            u = min(max((t - self.t0) / (self.t1 - self.t0), 0.0), 1.0)
        p = self.p_from + u * (self.p_to - self.p_from)
        return np.array([p[0], p[1], self.heading])


@dataclass
class BaseMotionPlan:
    """Alternating rotate/translate primitives for the planar base."""

    primitives: list
    t_start: float
    t_end: float
    headings: list = field(default_factory=list)

    def state_at(self, t: float) -> np.ndarray:
        t = min(max(t, self.t_start), self.t_end)
        for p in self.primitives:
            if t <= p.t1:
                return p.state_at(t)
        return self.primitives[-1].state_at(self.t_end)

    def position_at(self, t: float) -> np.ndarray:
        return self.state_at(t)[:2]

    def sample(self, dt: float = 0.01):
        n = max(1, int(math.ceil((self.t_end - self.t_start) / dt)))
        ts = self.t_start + np.arange(n + 1) * dt
        ts[-1] = self.t_end
        configs = np.array([self.state_at(t) for t in ts])
        return ts, configs


def base_motion_plan(waypoints_xy, phi_0: float, phi_d: float,
                     t_start: float, t_end: float,
                     max_yaw_rate: float = 1.5) -> BaseMotionPlan:
    """Rotate-then-translate primitive sequence over a planar path.

    The base only translates along its current heading.  Rotations run at
    the configured yaw rate; the remaining horizon is split across the
    straight segments in proportion to their lengths, so the total
    duration equals the horizon exactly.
    """
    wp = np.atleast_2d(np.asarray(waypoints_xy, dtype=float))[:, :2]
    headings = heading_angles(wp, phi_0, phi_d)
    if t_end <= t_start:
        raise TrajectoryError("t_end must exceed t_start")

    seg_angles = headings[1:-1]
    rotations = []      # (position index, phi_from, phi_to)
    current = float(phi_0)
    for k, angle in enumerate(seg_angles):
        rotations.append((k, current, angle))
        current = angle
    rotations.append((len(wp) - 1, current, float(phi_d)))

    yaw_time = sum(abs(wrap_angle(b - a)) / max_yaw_rate
                   for _, a, b in rotations)
    horizon = t_end - t_start
    if yaw_time >= horizon:
        raise TrajectoryError("horizon too short for the required rotations")

    lengths = np.linalg.norm(np.diff(wp, axis=0), axis=1)
    total_len = float(np.sum(lengths))
    if total_len <= 0.0:
        raise TrajectoryError("zero-length path cannot be time-parameterized")
    translate_budget = horizon - yaw_time
    seg_times = lengths * translate_budget / total_len
    seg_times[-1] = translate_budget - float(np.sum(seg_times[:-1]))

    primitives = []
    t = t_start
    for k in range(len(wp) - 1):
        pos_idx, phi_from, phi_to = rotations[k]
        rot_dur = abs(wrap_angle(phi_to - phi_from)) / max_yaw_rate
        if rot_dur > 0.0:
            primitives.append(RotateInPlace(t, t + rot_dur, wp[pos_idx].copy(),
                                            phi_from, phi_to))
            t += rot_dur
        primitives.append(StraightLine(t, t + seg_times[k], wp[k].copy(),
                                       wp[k + 1].copy(), phi_to))
        t += seg_times[k]
    pos_idx, phi_from, phi_to = rotations[-1]
    rot_dur = abs(wrap_angle(phi_to - phi_from)) / max_yaw_rate
    if rot_dur > 0.0:
        primitives.append(RotateInPlace(t, t + rot_dur, wp[-1].copy(),
                                        phi_from, phi_to))
        t += rot_dur
    if not primitives:
        raise TrajectoryError("empty motion plan")
    primitives[-1].t1 = t_end  # absorb accumulated round-off exactly
    return BaseMotionPlan(primitives=primitives, t_start=float(t_start),
                          t_end=float(t_end), headings=headings)
