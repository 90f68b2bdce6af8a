"""Bidirectional sampling planner with direct connection and path pruning.

Two trees grow from the start and the goal.  Each iteration either does a
classic RRT extension of both trees toward one random sample, or greedily
advances the closest node pair along its connecting line (gradient
descent on the inter-tree distance).  Whenever any collision-free link
between the trees exists within a bounded candidate budget, the trees are
bridged immediately, which keeps sampled node counts low.

The raw path is then pruned geometrically: *node rejection* keeps from
each anchor the farthest waypoint reachable by one free segment; *node
adjustment* slides every interior waypoint along its outgoing segment to
the farthest point visible from the current anchor, forward then
backward.  Both passes only shorten the path (triangle inequality).

A planning query owns its trees and RNG; worlds are immutable snapshots,
so independent queries may run concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from mobman import geometry
from mobman.geometry import WorldState, clip_segment, inflate
from mobman.kinematics import GeneralizedPose, RobotModel


class PlanningError(RuntimeError):
    def __init__(self, message, iterations=None):
        super().__init__(message)
        self.iterations = iterations


@dataclass(frozen=True)
class PlannerConfig:
    rrt_step: float = 0.2
    grad_step: float = 0.2
    dis_max: float = 0.4          # connection threshold on inter-tree distance
    p_rbm: float = 0.5            # probability of an RRT (vs gradient) iteration
    adjust_step: float = 0.05     # waypoint slide step, fraction of a segment
    max_iters: int = 3000
    edge_check_step: float = 0.02
    seed: int = 0
    direct_connect_budget: int = 32

    def __post_init__(self):
        if not (0.0 <= self.p_rbm <= 1.0):
            raise PlanningError("p_rbm must lie in [0, 1]")
        if min(self.rrt_step, self.grad_step, self.dis_max,
               self.edge_check_step) <= 0.0:
            raise PlanningError("steps and thresholds must be positive")
        if not (0.0 < self.adjust_step <= 1.0):
            raise PlanningError("adjust_step must lie in (0, 1]")


class Tree:
    """Growing node set with parent links; node 0 is the root."""

    def __init__(self, root):
        self.nodes = [np.asarray(root, dtype=float)]
        self.parents = [None]

    def __len__(self):
        return len(self.nodes)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.nodes)

    def add(self, q, parent: int) -> int:
        self.nodes.append(np.asarray(q, dtype=float))
        self.parents.append(parent)
        return len(self.nodes) - 1

    def nearest(self, q) -> int:
        d = np.linalg.norm(self.as_array() - np.asarray(q, dtype=float), axis=1)
        return int(np.argmin(d))

    def chain_to_root(self, index: int) -> list:
        out = []
        i = index
        while i is not None:
            out.append(self.nodes[i])
            i = self.parents[i]
        return out


@dataclass
class Path:
    waypoints: np.ndarray

    def __post_init__(self):
        self.waypoints = np.atleast_2d(np.asarray(self.waypoints, dtype=float))

    @property
    def total_length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1)))

    def __len__(self):
        return len(self.waypoints)


# ---------------------------------------------------------------------------
# planning spaces

class PlanarSpace:
    """Base navigation in (x, y); obstacles become inflated footprints.

    An obstacle contributes its footprint whenever its vertical extent
    overlaps the band the robot body sweeps.  Edges are validated by
    exact segment clipping, not sampling.
    """

    def __init__(self, world: WorldState, body_height: float = 0.45):
        self.world = world
        self.bounds_min = np.asarray(world.bounds_min[:2], dtype=float)
        self.bounds_max = np.asarray(world.bounds_max[:2], dtype=float)
        self._footprints = []
        for o in world.inflated():
            zlo, zhi = o.z_interval()
            if zhi < 0.0 or zlo > body_height:
                continue
            self._footprints.append(o)

    def edge_free(self, a, b) -> bool:
        p0 = np.array([a[0], a[1], 0.0])
        p1 = np.array([b[0], b[1], 0.0])
        for o in self._footprints:
            flat = _flatten_to_ground(o)
            if clip_segment(p0, p1, flat) is not None:
                return False
        return True


def _flatten_to_ground(o):
    """Project an obstacle to a ground-level solid covering its footprint."""
    if o.shape == geometry.BOX:
        hx, hy, _ = o.params
        return geometry.box(o.id, [o.center[0], o.center[1], 0.0], [hx, hy, 1.0])
    r = o.params[0]
    return geometry.cylinder(o.id, [o.center[0], o.center[1], 0.0], r, 2.0)


class StackedEeSpace:
    """Dual end-effector planning in R^6 (right xyz, left xyz)."""

    def __init__(self, world: WorldState):
        self.world = world
        b3min = np.asarray(world.bounds_min, dtype=float)
        b3max = np.asarray(world.bounds_max, dtype=float)
        self.bounds_min = np.tile(b3min, 2)
        self.bounds_max = np.tile(b3max, 2)

    def edge_free(self, a, b) -> bool:
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        return not (geometry.segment_collides(a[:3], b[:3], self.world)
                    or geometry.segment_collides(a[3:], b[3:], self.world))


class JointSpace:
    """Full 19-D configuration space validated by discretised edges."""

    def __init__(self, model: RobotModel, world: WorldState,
                 edge_check_step: float = 0.02):
        self.model = model
        self.world = world
        self.step = edge_check_step
        lim = model.joint_limits
        self.bounds_min = lim[:, 0].copy()
        self.bounds_max = lim[:, 1].copy()
        self.bounds_min[:2] = world.bounds_min[:2]
        self.bounds_max[:2] = world.bounds_max[:2]

    def edge_free(self, a, b) -> bool:
        return not geometry.config_edge_collides(
            self.model, GeneralizedPose.from_vector(a),
            GeneralizedPose.from_vector(b), self.world, step=self.step)


# ---------------------------------------------------------------------------
# tree extension

def birrt_extend(trees, space, cfg: PlannerConfig, rng) -> bool:
    """Extend both trees one step toward a common random sample."""
    ts, te = trees
    q_rand = space.bounds_min + (space.bounds_max - space.bounds_min) \
        * rng.random(len(space.bounds_min))
    grew = False
    for tree in (ts, te):
        i = tree.nearest(q_rand)
        q_near = tree.nodes[i]
        delta = q_rand - q_near
        dist = float(np.linalg.norm(delta))
        if dist < 1e-12:
            continue
        q_new = q_rand if dist <= cfg.rrt_step \
            else q_near + delta * (cfg.rrt_step / dist)
        if space.edge_free(q_near, q_new):
            tree.add(q_new, i)
            grew = True
    return grew


def closest_pair(trees) -> tuple:
    """Indices and distance of the closest inter-tree node pair."""
    ts, te = trees
    a = ts.as_array()
    b = te.as_array()
    d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    i, j = np.unravel_index(int(np.argmin(d)), d.shape)
    return int(i), int(j), float(d[i, j])


def grad_dec_extend(trees, space, cfg: PlannerConfig) -> bool:
    """Advance both trees along the line joining their closest nodes.

    Nodes are appended every accepted step; the walk stops when the trees
    are within the connection threshold or both sides are blocked.
    """
    ts, te = trees
    i, j, dist = closest_pair(trees)
    grew = False
    while dist > cfg.dis_max:
        advanced = False
        for tree, own, other in ((ts, i, te.nodes[j]), (te, j, ts.nodes[i])):
            q_from = tree.nodes[own]
            delta = other - q_from
            d = float(np.linalg.norm(delta))
            if d < 1e-12:
                continue
            q_new = other if d <= cfg.grad_step \
                else q_from + delta * (cfg.grad_step / d)
            if space.edge_free(q_from, q_new):
                new_index = tree.add(q_new, own)
                if tree is ts:
                    i = new_index
                else:
                    j = new_index
                advanced = True
                grew = True
        new_dist = float(np.linalg.norm(ts.nodes[i] - te.nodes[j]))
        if not advanced or new_dist >= dist:
            break
        dist = new_dist
    return grew


def try_direct_connect(trees, space, cfg: PlannerConfig):
    """First collision-free node pair among the closest candidates, or None."""
    ts, te = trees
    a = ts.as_array()
    b = te.as_array()
    d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2).ravel()
    budget = min(cfg.direct_connect_budget, d.size)
    candidates = np.argpartition(d, budget - 1)[:budget]
    for flat in candidates[np.argsort(d[candidates], kind="stable")]:
        i, j = divmod(int(flat), len(te))
        if space.edge_free(ts.nodes[i], te.nodes[j]):
            return i, j
    return None


@dataclass
class PlanResult:
    path: Path
    tree_start: Tree
    tree_end: Tree
    iterations: int
    n_rrt_extends: int = 0
    n_grad_extends: int = 0


def plan(q_init, q_goal, space, cfg: PlannerConfig, rng=None) -> PlanResult:
    """Grow both trees until bridged; returns the raw (unpruned) path."""
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    q_init = np.asarray(q_init, dtype=float)
    q_goal = np.asarray(q_goal, dtype=float)
    for name, q in (("start", q_init), ("goal", q_goal)):
        if not space.edge_free(q, q):
            raise PlanningError(f"{name} configuration is in collision")

    trees = (Tree(q_init), Tree(q_goal))
    n_rrt = n_grad = 0
    for it in range(cfg.max_iters):
        i, j, dist = closest_pair(trees)
        bridge = None
        if dist <= cfg.dis_max and space.edge_free(trees[0].nodes[i],
                                                   trees[1].nodes[j]):
            bridge = (i, j)
        else:
            bridge = try_direct_connect(trees, space, cfg)
        if bridge is not None:
            head = trees[0].chain_to_root(bridge[0])[::-1]
            tail = trees[1].chain_to_root(bridge[1])
            waypoints = _dedupe(head + tail)
            return PlanResult(Path(np.asarray(waypoints)), trees[0], trees[1],
                              iterations=it, n_rrt_extends=n_rrt,
                              n_grad_extends=n_grad)
        if rng.random() < cfg.p_rbm:
            birrt_extend(trees, space, cfg, rng)
            n_rrt += 1
        else:
            grad_dec_extend(trees, space, cfg)
            n_grad += 1
    raise PlanningError(
        f"no path found within {cfg.max_iters} iterations", cfg.max_iters)


def _dedupe(points, tol=1e-12):
    out = [np.asarray(points[0], dtype=float)]
    for p in points[1:]:
        if np.linalg.norm(p - out[-1]) > tol:
            out.append(np.asarray(p, dtype=float))
    return out


# ---------------------------------------------------------------------------
# geometric path pruning

def node_rejection(path: Path, space) -> Path:
    """Greedy shortcutting: keep the farthest waypoint visible from the anchor."""
    wp = path.waypoints
    if len(wp) <= 2:
        return Path(wp.copy())
    out = [wp[0]]
    i = 0
    while i < len(wp) - 1:
        j = len(wp) - 1
        while j > i + 1 and not space.edge_free(wp[i], wp[j]):
            j -= 1
        out.append(wp[j])
        i = j
    return Path(np.asarray(_dedupe(out)))


def _slide_pass(wp: np.ndarray, space, step: float) -> np.ndarray:
    """One forward adjustment sweep: slide each interior waypoint along its
    outgoing segment to the farthest point visible from the anchor."""
    if len(wp) <= 2:
        return wp.copy()
    n_steps = max(1, int(round(1.0 / step)))
    out = [wp[0]]
    anchor = wp[0]
    for k in range(1, len(wp) - 1):
        seg_a, seg_b = wp[k], wp[k + 1]
        chosen = seg_a
        for m in range(n_steps, -1, -1):
            t = m / n_steps
            candidate = seg_a + t * (seg_b - seg_a)
            if space.edge_free(anchor, candidate):
                chosen = candidate
                break
        out.append(chosen)
        anchor = chosen
    out.append(wp[-1])
    return np.asarray(_dedupe(out))


def node_adjustment(path: Path, space, cfg: PlannerConfig) -> Path:
    """Forward-backward waypoint sliding; endpoints stay fixed."""
    forward = _slide_pass(path.waypoints, space, cfg.adjust_step)
    backward = _slide_pass(forward[::-1], space, cfg.adjust_step)
    return Path(backward[::-1])


def geom_optim(path: Path, space, cfg: PlannerConfig) -> Path:
    """Node rejection followed by node adjustment."""
    pruned = node_adjustment(node_rejection(path, space), space, cfg)
    assert np.allclose(pruned.waypoints[0], path.waypoints[0])
    assert np.allclose(pruned.waypoints[-1], path.waypoints[-1])
    return pruned


def path_collision_free(path: Path, space) -> bool:
    wp = path.waypoints
    return all(space.edge_free(wp[i], wp[i + 1]) for i in range(len(wp) - 1))
