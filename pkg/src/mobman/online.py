"""Online navigation: sensing, control and collision-test cycles.

A simulated clock advances in sensing ticks.  Every tick records the
dynamic obstacles' positions; at control-cycle boundaries their
velocities are estimated from recent history (the largest finite
difference, a worst-case choice that keeps the direction), the current
motion is swept over the collision-test horizon against linearly
extrapolated obstacle positions, and on a predicted collision a new
motion is planned from the state the robot will have reached at the next
control boundary.  A collision already present at the boundary triggers
an immediate stop and a replan from the current state.

Planning happens against frozen snapshots; the new motion is adopted
exactly at its start time, so executed state is continuous.  All
randomness flows through named seeded streams and runs are reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from mobman import geometry
from mobman.geometry import WorldState, inflate
from mobman.planner import (
    PlanarSpace,
    PlannerConfig,
    PlanningError,
    geom_optim,
    node_rejection,
    plan,
)
from mobman.trajectory import BaseMotionPlan, base_motion_plan, heading_angles
from mobman.kinematics import wrap_angle


class OnlineError(RuntimeError):
    pass


@dataclass(frozen=True)
class CycleConfig:
    dt_s: float = 0.5
    dt_c: float = 1.0
    dt_col: float = 2.0
    m_o: int = 4

    def __post_init__(self):
        if not (0.0 < self.dt_s <= self.dt_c <= self.dt_col):
            raise OnlineError("cycles must satisfy 0 < dt_s <= dt_c <= dt_col")
        for big, small, names in ((self.dt_c, self.dt_s, "dt_c/dt_s"),
                                  (self.dt_col, self.dt_c, "dt_col/dt_c")):
            ratio = big / small
            if abs(ratio - round(ratio)) > 1e-9:
                raise OnlineError(f"{names} must be an integer ratio")
        if self.m_o < 1:
            raise OnlineError("history window must be at least 1")

    @property
    def ticks_per_control(self) -> int:
        return int(round(self.dt_c / self.dt_s))


class ObstacleTrack:
    """Ring of recent (t, position) samples for one obstacle."""

    def __init__(self, id: str, capacity: int):
        self.id = id
        self.capacity = max(2, capacity)
        self.samples: list = []

    def record(self, t: float, position):
        position = np.asarray(position, dtype=float)
        if self.samples and t <= self.samples[-1][0]:
            raise OnlineError("track timestamps must increase strictly")
        self.samples.append((float(t), position))
        if len(self.samples) > self.capacity:
            self.samples.pop(0)

    @property
    def latest(self):
        return self.samples[-1]


def obs_estim(track: ObstacleTrack, cfg: CycleConfig):
    """Worst-case velocity estimate from the recent history window.

    Returns (velocity, sufficient_history).  Among the last ``m_o``
    finite differences the one with the largest norm is kept as a full
    vector, preserving direction for extrapolation.  With fewer than two
    samples the velocity is zero and the flag is False.
    """
    samples = track.samples[-(cfg.m_o + 1):]
    if len(samples) < 2:
        return np.zeros(3), False
    best = None
    best_norm = -1.0
    for (t0, p0), (t1, p1) in zip(samples[:-1], samples[1:]):
        v = (p1 - p0) / (t1 - t0)
        n = float(np.linalg.norm(v))
        if n > best_norm:
            best, best_norm = v, n
    return best, True


def predict_position(track: ObstacleTrack, velocity, delta_t: float,
                     cfg: CycleConfig) -> np.ndarray:
    """Linear extrapolation from the latest recorded position."""
    if not (0.0 < delta_t <= cfg.dt_col):
        raise OnlineError(f"delta_t must lie in (0, {cfg.dt_col}]")
    t_ref, p_ref = track.latest
    return p_ref + delta_t * np.asarray(velocity, dtype=float)


# ---------------------------------------------------------------------------
# scripted obstacle timelines (simulation ground truth)

class ConstantScript:
    def __init__(self, start, velocity):
        self.start = np.asarray(start, dtype=float)
        self.velocity = np.asarray(velocity, dtype=float)

    def position_at(self, t: float) -> np.ndarray:
        return self.start + t * self.velocity


class RandomWalkScript:
    """Piecewise-constant random velocity, redrawn every control cycle.

    The heading is uniform in the plane and the speed uniform up to the
    bound; the walk reflects off its containment region.
    """

    def __init__(self, start, speed_max, region_min, region_max,
                 redraw_dt, seed):
        self.start = np.asarray(start, dtype=float)
        self.speed_max = float(speed_max)
        self.region_min = np.asarray(region_min, dtype=float)
        self.region_max = np.asarray(region_max, dtype=float)
        self.redraw_dt = float(redraw_dt)
        self._rng = np.random.default_rng(seed)
        self._positions = [self.start.copy()]
        self._velocities: list = []

    def _extend_to(self, k: int):
        while len(self._velocities) < k:
            angle = self._rng.uniform(-math.pi, math.pi)
            speed = self._rng.uniform(0.0, self.speed_max)
            v = np.array([speed * math.cos(angle), speed * math.sin(angle), 0.0])
            p = self._positions[-1] + v * self.redraw_dt
            for i in range(3):
                if p[i] < self.region_min[i]:
                    p[i] = 2.0 * self.region_min[i] - p[i]
                elif p[i] > self.region_max[i]:
                    p[i] = 2.0 * self.region_max[i] - p[i]
            self._velocities.append(v)
            self._positions.append(p)

    def position_at(self, t: float) -> np.ndarray:
        if t <= 0.0:
            return self.start.copy()
        k = int(math.floor(t / self.redraw_dt + 1e-12))
        self._extend_to(k + 1)
        t0 = k * self.redraw_dt
        frac = (t - t0) / self.redraw_dt
        return self._positions[k] + frac * (self._positions[k + 1]
                                            - self._positions[k])


class WorldTimeline:
    """Static obstacles plus scripted dynamic ones; snapshots on demand."""

    def __init__(self, static_obstacles, dynamic, bounds_min, bounds_max,
                 security_hull):
        self.static_obstacles = tuple(static_obstacles)
        self.dynamic = tuple(dynamic)          # (Obstacle template, script)
        self.bounds_min = np.asarray(bounds_min, dtype=float)
        self.bounds_max = np.asarray(bounds_max, dtype=float)
        self.security_hull = float(security_hull)

    def world_at(self, t: float) -> WorldState:
        obstacles = list(self.static_obstacles)
        for template, script in self.dynamic:
            obstacles.append(template.at(script.position_at(t)))
        return WorldState(tuple(obstacles), self.bounds_min, self.bounds_max,
                          security_hull=self.security_hull)

    def dynamic_ids(self):
        return [template.id for template, _ in self.dynamic]


# ---------------------------------------------------------------------------
# collision prediction

def collision_check(motion: BaseMotionPlan, tracks: dict, cfg: CycleConfig,
                    now: float, static_obstacles, dynamic_templates: dict,
                    hull: float, sample_dt: float = 0.05,
                    hull_now: float | None = None):
    """Earliest predicted collision time in [now, now + dt_col], or None.

    The motion is swept at the sampling step; dynamic obstacles are
    extrapolated linearly from their latest sensed position.  The sample
    at ``now`` may use a tighter hull (``hull_now``), so that "collision
    right now" means near-physical contact rather than a mere security
    margin violation while escaping.
    """
    velocities = {}
    for oid, track in tracks.items():
        v, _ = obs_estim(track, cfg)
        velocities[oid] = (track.latest, v)
    n = max(1, int(round(cfg.dt_col / sample_dt)))
    static_flat = [_flat(o) for o in static_obstacles]
    for k in range(n + 1):
        t = now + k * sample_dt
        if t > motion.t_end + cfg.dt_col:
            break
        h = hull if (k > 0 or hull_now is None) else hull_now
        state = motion.state_at(t)
        p = np.array([state[0], state[1], 0.0])
        for o in static_flat:
            if geometry.clip_segment(p, p, inflate(o, h)) is not None:
                return t
        for oid, ((t_ref, p_ref), v) in velocities.items():
            center = p_ref + (t - t_ref) * v
            moved = inflate(_flat(dynamic_templates[oid].at(center)), h)
            if geometry.clip_segment(p, p, moved) is not None:
                return t
    return None


def _flat(o):
    """Ground-level footprint solid of an obstacle (planar navigation)."""
    if o.shape == geometry.BOX:
        hx, hy, _ = o.params
        return geometry.box(o.id, [o.center[0], o.center[1], 0.0], [hx, hy, 1.0])
    return geometry.cylinder(o.id, [o.center[0], o.center[1], 0.0],
                             o.params[0], 2.0)


# ---------------------------------------------------------------------------
# the navigation loop

@dataclass
class OnlineLog:
    executed_ts: np.ndarray
    executed_states: np.ndarray       # (n, 3) base x, y, phi
    replans: list                     # (t, reason) with reason predicted|sudden
    collisions: int
    goal_reached: bool
    aborted: str | None
    plans: list                       # (t_start, waypoint array) per motion
    sim_time: float


@dataclass
class NavTask:
    start_xy: np.ndarray
    goal_xy: np.ndarray
    phi_start: float = 0.0
    base_speed: float = 0.4
    yaw_rate: float = 1.5
    goal_tol: float = 0.10
    t_max: float = 300.0

    def __post_init__(self):
        self.start_xy = np.asarray(self.start_xy, dtype=float)
        self.goal_xy = np.asarray(self.goal_xy, dtype=float)


def _plan_motion(start_xy, phi_start, goal_xy, world, planner_cfg, rng,
                 t_start, base_speed, yaw_rate, min_hull=0.0):
    """Plan, prune and time-parameterize one base motion.

    A sudden stop can leave the robot inside the security hull while
    still physically clear, so an endpoint in collision retries with a
    reduced hull, but never below ``min_hull`` (the physical footprint
    plus a small clearance).
    """
    full = world.security_hull
    ladder = [full, max(min_hull, 0.5 * full), min_hull]
    hulls = []
    for h in ladder:
        if h not in hulls and h <= full:
            hulls.append(h)
    last_error = PlanningError("no hull candidates")
    for hull in hulls:
        space = PlanarSpace(world.with_hull(hull))
        if not (space.edge_free(start_xy, start_xy)
                and space.edge_free(goal_xy, goal_xy)):
            last_error = PlanningError("endpoint inside the security hull")
            continue
        try:
            result = plan(start_xy, goal_xy, space, planner_cfg, rng=rng)
        except PlanningError as e:
            last_error = e
            continue
        break
    else:
        raise last_error
    pruned = geom_optim(result.path, space, planner_cfg)
    wp = pruned.waypoints
    headings = heading_angles(wp, phi_start, 0.0)
    phi_goal = headings[-2]           # finish aligned with the last segment
    length = pruned.total_length
    yaw_time = 0.0
    current = phi_start
    for h in headings[1:-1] + [phi_goal]:
        yaw_time += abs(wrap_angle(h - current)) / yaw_rate
        current = h
    t_end = t_start + yaw_time + length / base_speed
    return base_motion_plan(wp, phi_start, phi_goal, t_start, t_end,
                            max_yaw_rate=yaw_rate), pruned


def run_online(timeline: WorldTimeline, task: NavTask, cfg: CycleConfig,
               planner_cfg: PlannerConfig, seed: int = 0,
               sensing_range: float = math.inf,
               record_dt: float = 0.05, base_radius: float = 0.30) -> OnlineLog:
    """Execute the sensing/control/collision-test loop until the goal.

    ``sensing_range`` limits what the robot knows: obstacles beyond it
    are treated as free space until they come within range.
    """
    planner_rng = np.random.default_rng(np.random.SeedSequence(seed))
    return _run(timeline, task, cfg, planner_cfg, planner_rng,
                sensing_range, record_dt, base_radius)


def run_online_local(timeline: WorldTimeline, task: NavTask, cfg: CycleConfig,
                     planner_cfg: PlannerConfig, sensing_range: float,
                     seed: int = 0, record_dt: float = 0.05,
                     base_radius: float = 0.30) -> OnlineLog:
    if sensing_range <= 0.0:
        raise OnlineError("sensing range must be positive")
    return run_online(timeline, task, cfg, planner_cfg, seed=seed,
                      sensing_range=sensing_range, record_dt=record_dt,
                      base_radius=base_radius)


def _in_range(center, footprint_radius, base_xy, sensing_range):
    d = math.hypot(center[0] - base_xy[0], center[1] - base_xy[1])
    return d - footprint_radius <= sensing_range


def _visible(timeline, tracks, base_xy, sensing_range, t):
    """Sense dynamic obstacles within range, updating their tracks."""
    sensed = []
    for template, script in timeline.dynamic:
        pos = script.position_at(t)
        if _in_range(pos, template.footprint_radius(), base_xy, sensing_range):
            track = tracks.setdefault(template.id,
                                      ObstacleTrack(template.id, capacity=64))
            track.record(t, pos)
            sensed.append(template.id)
    return sensed


def _visible_statics(timeline, base_xy, sensing_range):
    """Static obstacles currently within the sensing range."""
    return [o for o in timeline.static_obstacles
            if _in_range(o.center, o.footprint_radius(), base_xy, sensing_range)]


def _planning_world(timeline, tracks, sensed_ids, t_anchor, cfg,
                    use_prediction: bool, static_obstacles):
    """Frozen snapshot for replanning from sensed data only."""
    obstacles = list(static_obstacles)
    templates = {tpl.id: tpl for tpl, _ in timeline.dynamic}
    for oid in sensed_ids:
        track = tracks[oid]
        t_ref, p_ref = track.latest
        if use_prediction and t_anchor > t_ref:
            v, _ = obs_estim(track, cfg)
            delta = min(t_anchor - t_ref, cfg.dt_col)
            center = p_ref + delta * v
        else:
            center = p_ref
        obstacles.append(templates[oid].at(center))
    return WorldState(tuple(obstacles), timeline.bounds_min,
                      timeline.bounds_max, security_hull=timeline.security_hull)


def _run(timeline, task, cfg, planner_cfg, planner_rng, sensing_range,
         record_dt, base_radius):
    tracks: dict = {}
    replans: list = []
    plans: list = []
    executed_t: list = []
    executed: list = []
    collisions = 0
    aborted = None
    goal_reached = False

    sensed = _visible(timeline, tracks, task.start_xy, sensing_range, 0.0)
    statics0 = _visible_statics(timeline, task.start_xy, sensing_range)
    world0 = _planning_world(timeline, tracks, sensed, 0.0, cfg,
                             use_prediction=False, static_obstacles=statics0)
    # the sudden-contact detector is slightly wider than the replan floor,
    # so a robot stopped by it can still plan its way out
    min_hull = min(base_radius + 0.02, timeline.security_hull)
    hull_now = min(base_radius + 0.04, timeline.security_hull)
    try:
        motion, pruned = _plan_motion(task.start_xy, task.phi_start,
                                      task.goal_xy, world0, planner_cfg,
                                      planner_rng, 0.0, task.base_speed,
                                      task.yaw_rate, min_hull=min_hull)
    except PlanningError as e:
        raise OnlineError(f"offline planning failed: {e}") from e
    plans.append((0.0, pruned.waypoints.copy()))

    pending = None    # (adopt_time, motion, waypoints)
    n_ticks = int(math.ceil(task.t_max / cfg.dt_s))
    tick = 0
    t = 0.0
    while tick <= n_ticks:
        t = tick * cfg.dt_s

        if pending is not None and t >= pending[0] - 1e-9:
            motion = pending[1]
            plans.append((pending[0], pending[2]))
            pending = None

        if tick > 0:
            sensed = _visible(timeline, tracks, motion.state_at(t)[:2],
                              sensing_range, t)

        is_control_tick = tick % cfg.ticks_per_control == 0
        if is_control_tick and tick > 0 and not goal_reached:
            templates = {tpl.id: tpl for tpl, _ in timeline.dynamic}
            base_xy = motion.state_at(t)[:2]
            statics = _visible_statics(timeline, base_xy, sensing_range)
            hit = collision_check(motion, tracks, cfg, t, statics, templates,
                                  hull=timeline.security_hull,
                                  hull_now=hull_now)
            if hit is not None:
                sudden = hit <= t + 1e-9
                anchor_t = t if sudden else t + cfg.dt_c
                anchor = motion.state_at(anchor_t)
                w = _planning_world(timeline, tracks, sensed, anchor_t,
                                    cfg, use_prediction=not sudden,
                                    static_obstacles=statics)
                try:
                    new_motion, new_path = _plan_motion(
                        anchor[:2], anchor[2], task.goal_xy, w, planner_cfg,
                        planner_rng, anchor_t, task.base_speed, task.yaw_rate,
                        min_hull=min_hull)
                except PlanningError as e:
                    aborted = f"replanning failed at t={t:g}: {e}"
                    break
                if sudden:
                    motion = new_motion
                    plans.append((anchor_t, new_path.waypoints.copy()))
                    replans.append((t, "sudden"))
                else:
                    pending = (anchor_t, new_motion, new_path.waypoints.copy())
                    replans.append((anchor_t, "predicted"))

        # execute this sensing tick, recording ground-truth contact
        n_sub = max(1, int(round(cfg.dt_s / record_dt)))
        tick_hit = False
        for k in range(n_sub):
            tau = t + k * record_dt
            if tau > task.t_max:
                break
            state = motion.state_at(tau)
            executed_t.append(tau)
            executed.append(state)
            truth = timeline.world_at(tau).with_hull(0.0)
            p = np.array([state[0], state[1], 0.0])
            if geometry.point_collides(p, truth, extra_hull=base_radius):
                tick_hit = True
        if tick_hit:
            collisions += 1

        state_now = motion.state_at(t)
        at_goal = (np.linalg.norm(state_now[:2] - task.goal_xy) <= task.goal_tol)
        if at_goal and t >= motion.t_end - 1e-9 and pending is None:
            goal_reached = True
            break
        tick += 1

    if not goal_reached and aborted is None:
        aborted = f"time budget exhausted at t={t:g}"

    final_t = min(t, task.t_max)
    executed_t.append(final_t)
    executed.append(motion.state_at(final_t))
    return OnlineLog(
        executed_ts=np.asarray(executed_t),
        executed_states=np.asarray(executed),
        replans=replans,
        collisions=collisions,
        goal_reached=goal_reached,
        aborted=aborted,
        plans=plans,
        sim_time=final_t,
    )
