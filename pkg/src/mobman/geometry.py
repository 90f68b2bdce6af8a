"""World model: obstacles, collision queries and colliding-length ratios.

Obstacles are axis-aligned boxes, vertical cylinders or spheres.  The
robot body is reduced to eight skeleton links plus a base disc; links are
tested as line segments against obstacles grown by the world's security
hull.  Segment-primitive intersections are clipped analytically so the
colliding-length objective is exact.

WorldState values are immutable snapshots; all queries are pure functions
and safe to run concurrently against one snapshot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from mobman.kinematics import GeneralizedPose, RobotModel, forward_kinematics

BOX = "box"
CYLINDER = "cylinder"
SPHERE = "sphere"


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Obstacle:
    """One rigid obstacle.

    ``params`` by shape:
      box      -- half_extents (3,)
      cylinder -- (radius, height), axis vertical through ``center``
      sphere   -- (radius,)
    ``velocity_truth`` is simulation ground truth; planners never read it.
    """

    id: str
    shape: str
    center: np.ndarray
    params: tuple
    dynamic: bool = False
    velocity_truth: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if self.shape not in (BOX, CYLINDER, SPHERE):
            raise GeometryError(f"unknown shape {self.shape!r}")
        if any(p <= 0.0 for p in self.params):
            raise GeometryError(f"obstacle {self.id}: extents must be positive")

    def at(self, center) -> "Obstacle":
        return replace(self, center=np.asarray(center, dtype=float))

    def footprint_radius(self) -> float:
        """Circumscribed radius of the ground-plane footprint."""
        if self.shape == BOX:
            hx, hy, _ = self.params
            return math.hypot(hx, hy)
        return self.params[0]

    def z_interval(self) -> tuple:
        if self.shape == BOX:
            return (self.center[2] - self.params[2], self.center[2] + self.params[2])
        if self.shape == CYLINDER:
            h = self.params[1]
            return (self.center[2] - h / 2.0, self.center[2] + h / 2.0)
        r = self.params[0]
        return (self.center[2] - r, self.center[2] + r)


def box(id, center, half_extents, **kw) -> Obstacle:
    return Obstacle(id, BOX, center, tuple(float(v) for v in half_extents), **kw)


def cylinder(id, center, radius, height, **kw) -> Obstacle:
    return Obstacle(id, CYLINDER, center, (float(radius), float(height)), **kw)


def sphere(id, center, radius, **kw) -> Obstacle:
    return Obstacle(id, SPHERE, center, (float(radius),), **kw)


def inflate(o: Obstacle, delta: float) -> Obstacle:
    """Obstacle grown by ``delta`` in every direction, same center."""
    if delta < 0.0:
        raise GeometryError("inflation must be non-negative")
    if delta == 0.0:
        return o
    if o.shape == BOX:
        params = tuple(h + delta for h in o.params)
    elif o.shape == CYLINDER:
        params = (o.params[0] + delta, o.params[1] + 2.0 * delta)
    else:
        params = (o.params[0] + delta,)
    return replace(o, params=params)


@dataclass(frozen=True)
class WorldState:
    """Immutable snapshot of the workspace."""

    obstacles: tuple
    bounds_min: np.ndarray
    bounds_max: np.ndarray
    security_hull: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        object.__setattr__(self, "bounds_min", np.asarray(self.bounds_min, dtype=float))
        object.__setattr__(self, "bounds_max", np.asarray(self.bounds_max, dtype=float))
        if self.security_hull < 0.0:
            raise GeometryError("security hull must be non-negative")

    def with_hull(self, delta: float) -> "WorldState":
        return replace(self, security_hull=float(delta))

    def with_obstacles(self, obstacles) -> "WorldState":
        return replace(self, obstacles=tuple(obstacles))

    def inflated(self, extra: float = 0.0):
        d = self.security_hull + extra
        return [inflate(o, d) for o in self.obstacles]


# ---------------------------------------------------------------------------
# analytic segment clipping

def _interval_intersect(a, b):
    lo, hi = max(a[0], b[0]), min(a[1], b[1])
    return (lo, hi) if lo <= hi else None


def clip_segment(p0: np.ndarray, p1: np.ndarray, o: Obstacle):
    """Parameter interval [t0, t1] of p0 + t (p1 - p0) inside ``o``, or None.

    Shapes are closed sets, so tangency counts as contact.
    """
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    d = p1 - p0
    span = (0.0, 1.0)

    if o.shape == BOX:
        lo = o.center - np.array(o.params)
        hi = o.center + np.array(o.params)
        t0, t1 = 0.0, 1.0
        for k in range(3):
            if d[k] == 0.0:
                if p0[k] < lo[k] or p0[k] > hi[k]:
                    return None
                continue
            ta = (lo[k] - p0[k]) / d[k]
            tb = (hi[k] - p0[k]) / d[k]
            if ta > tb:
                ta, tb = tb, ta
            t0, t1 = max(t0, ta), min(t1, tb)
            if t0 > t1:
                return None
        return (t0, t1)

    if o.shape == SPHERE:
        r = o.params[0]
        f = p0 - o.center
        a = float(d @ d)
        b = 2.0 * float(f @ d)
        c = float(f @ f) - r * r
        if a == 0.0:
            return span if c <= 0.0 else None
        disc = b * b - 4.0 * a * c
        if disc < 0.0:
            return None
        sq = math.sqrt(disc)
        return _interval_intersect(span, ((-b - sq) / (2 * a), (-b + sq) / (2 * a)))

    # vertical cylinder: radial quadratic in xy intersected with a z slab
    r, h = o.params
    zlo, zhi = o.center[2] - h / 2.0, o.center[2] + h / 2.0
    if d[2] == 0.0:
        if p0[2] < zlo or p0[2] > zhi:
            return None
        z_iv = span
    else:
        ta, tb = (zlo - p0[2]) / d[2], (zhi - p0[2]) / d[2]
        z_iv = (min(ta, tb), max(ta, tb))
    fxy = p0[:2] - o.center[:2]
    dxy = d[:2]
    a = float(dxy @ dxy)
    b = 2.0 * float(fxy @ dxy)
    c = float(fxy @ fxy) - r * r
    if a == 0.0:
        r_iv = span if c <= 0.0 else None
    else:
        disc = b * b - 4.0 * a * c
        if disc < 0.0:
            return None
        sq = math.sqrt(disc)
        r_iv = ((-b - sq) / (2 * a), (-b + sq) / (2 * a))
    if r_iv is None:
        return None
    iv = _interval_intersect(r_iv, z_iv)
    if iv is None:
        return None
    return _interval_intersect(iv, span)


def segment_collides(p0, p1, w: WorldState, extra_hull: float = 0.0) -> bool:
    """True iff the segment touches any obstacle grown by the security hull."""
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    if not (np.all(np.isfinite(p0)) and np.all(np.isfinite(p1))):
        raise GeometryError("segment endpoints must be finite")
    # canonical endpoint order makes the query exactly symmetric
    if tuple(p1) < tuple(p0):
        p0, p1 = p1, p0
    for o in w.inflated(extra_hull):
        if clip_segment(p0, p1, o) is not None:
            return True
    return False


def point_collides(p, w: WorldState, extra_hull: float = 0.0) -> bool:
    return segment_collides(p, p, w, extra_hull)


def skeleton_collides(model: RobotModel, pose: GeneralizedPose, w: WorldState,
                      fk=None) -> bool:
    if fk is None:
        fk = forward_kinematics(model, pose)
    return any(segment_collides(a, b, w) for a, b in fk.skeleton_segments())


def base_disc_collides(model: RobotModel, pose: GeneralizedPose, w: WorldState) -> bool:
    x, y = pose.base[0], pose.base[1]
    seg = (np.array([x, y, 0.0]), np.array([x, y, model.base_frame_height]))
    return segment_collides(seg[0], seg[1], w, extra_hull=model.base_radius)


def pose_collides(model: RobotModel, pose: GeneralizedPose, w: WorldState,
                  fk=None) -> bool:
    """True iff a skeleton link or the base disc touches an inflated obstacle."""
    return (base_disc_collides(model, pose, w)
            or skeleton_collides(model, pose, w, fk=fk))


def config_edge_collides(model: RobotModel, a: GeneralizedPose, b: GeneralizedPose,
                         w: WorldState, step: float = 0.02) -> bool:
    """Discretised validity of the straight configuration-space edge a->b.

    The edge is sampled at a power-of-two subdivision no coarser than
    ``step`` so that refining the step only adds sample points; both
    endpoints are always checked.
    """
    if step <= 0.0:
        raise GeometryError("step must be positive")
    va, vb = a.as_vector(), b.as_vector()
    n = 1 << max(0, math.ceil(math.log2(max(1.0, 1.0 / step))))
    for i in range(n + 1):
        t = i / n
        pose = GeneralizedPose.from_vector(va + t * (vb - va))
        if pose_collides(model, pose, w):
            return True
    return False


def _union_length(intervals) -> float:
    if not intervals:
        return 0.0
    intervals = sorted(intervals)
    total = 0.0
    lo, hi = intervals[0]
    for a, b in intervals[1:]:
        if a > hi:
            total += hi - lo
            lo, hi = a, b
        else:
            hi = max(hi, b)
    return total + (hi - lo)


def collision_fraction(model: RobotModel, pose: GeneralizedPose, w: WorldState,
                       fk=None) -> float:
    """Colliding length of the eight skeleton links over their total length."""
    if fk is None:
        fk = forward_kinematics(model, pose)
    inflated = w.inflated()
    total = 0.0
    colliding = 0.0
    for a, b in fk.skeleton_segments():
        length = float(np.linalg.norm(np.asarray(b) - np.asarray(a)))
        total += length
        if length == 0.0:
            continue
        ivs = []
        for o in inflated:
            iv = clip_segment(a, b, o)
            if iv is not None:
                ivs.append(iv)
        colliding += _union_length(ivs) * length
    if total == 0.0:
        return 0.0
    return colliding / total
