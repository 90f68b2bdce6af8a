"""Via-point planning in task space and whole-body via-pose optimization.

First the two end-effectors are planned together as one point in R^6
(right xyz stacked on left xyz) with the sampling planner and the
geometric pruner; the pruned waypoints are the EE via-point pairs.  Then
a whole-body pose is searched for every pair with the evolutionary
optimizer over four objectives: via-point accuracy, joint travel,
skeleton collision fraction and directional manipulability along the
inter-via chords.  Each via-pose's base position is confined to the
reach region of its pair, a disc around the pair's ground projection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from mobman.evolver import GaConfig, evolve
from mobman.geometry import WorldState, pose_collides
from mobman.kinematics import GeneralizedPose, RobotModel, forward_kinematics
from mobman.objectives import PoseTask, via_objectives
from mobman.planner import (
    PlannerConfig,
    StackedEeSpace,
    geom_optim,
    plan,
)

INFEASIBLE_PENALTY = 1.0e6
DEFAULT_VIA_WEIGHTS = (0.60, 0.10, 0.25, 0.05)
REACH_MARGIN = 0.10


@dataclass(frozen=True)
class ViaPoints:
    """Ordered dual-EE waypoints; row k is (right xyz, left xyz)."""

    points: np.ndarray

    def __post_init__(self):
        p = np.atleast_2d(np.asarray(self.points, dtype=float))
        if p.shape[1] != 6:
            raise ValueError("via points must be (n, 6)")
        object.__setattr__(self, "points", p)

    def __len__(self):
        return len(self.points)

    def pair(self, k: int):
        return self.points[k, :3], self.points[k, 3:]


def design_via_points(model: RobotModel, initial_pose: GeneralizedPose,
                      task: PoseTask, world: WorldState,
                      planner_cfg: PlannerConfig, rng=None) -> ViaPoints:
    """Collision-free dual-EE via-point pairs from the initial EE positions
    to the task targets, pruned to the essential waypoints."""
    fk = forward_kinematics(model, initial_pose)
    start = np.concatenate([fk.t_right.translation, fk.t_left.translation])
    goal = np.concatenate([task.right_target, task.left_target])
    space = StackedEeSpace(world)
    result = plan(start, goal, space, planner_cfg, rng=rng)
    pruned = geom_optim(result.path, space, planner_cfg)
    return ViaPoints(pruned.waypoints)


def reach_region(pair, model: RobotModel, margin: float = REACH_MARGIN):
    """Planar disc the base must stay in to plausibly reach a via pair.

    Centered at the midpoint of the pair's ground projection with radius
    equal to the arm reach minus a margin.
    """
    right, left = np.asarray(pair[0], float), np.asarray(pair[1], float)
    center = 0.5 * (right[:2] + left[:2])
    radius = model.arm_reach - margin
    if radius <= 0.0:
        raise ValueError("margin leaves no reachable region")
    return center, radius


def clamp_to_disc(xy, center, radius):
    d = np.asarray(xy, float) - center
    norm = float(np.linalg.norm(d))
    if norm <= radius:
        return np.asarray(xy, float)
    return center + d * (radius / norm)


@dataclass
class ViaPoseResult:
    chromosome: np.ndarray      # (n_via, 19)
    objectives: np.ndarray      # (4,) raw objective values of the pick
    feasible: bool
    history: object
    pareto_size: int


class ViaPoseProblem:
    """Evaluator mapping a flat chromosome to the four via objectives.

    Decoding clamps each via-pose's base position onto its reach disc;
    poses touching obstacles add a large penalty to every objective,
    which confines the search to free space.
    """

    def __init__(self, model, world, via: ViaPoints,
                 initial_pose: GeneralizedPose):
        self.model = model
        self.world = world
        self.via = via
        self.initial = initial_pose.as_vector()
        self.n_via = len(via)
        self.discs = [reach_region(via.pair(k), model) for k in range(self.n_via)]
        self.bounds = self._build_bounds()

    def _build_bounds(self) -> np.ndarray:
        lim = self.model.joint_limits
        rows = []
        for center, radius in self.discs:
            b = lim.copy()
            b[0] = (center[0] - radius, center[0] + radius)
            b[1] = (center[1] - radius, center[1] + radius)
            b[2] = (-math.pi, math.pi)
            rows.append(b)
        return np.vstack(rows)

    def decode(self, flat: np.ndarray) -> np.ndarray:
        chrom = np.asarray(flat, dtype=float).reshape(self.n_via, 19)
        out = chrom.copy()
        for k, (center, radius) in enumerate(self.discs):
            out[k, :2] = clamp_to_disc(chrom[k, :2], center, radius)
        return out

    def warm_starts(self) -> np.ndarray:
        rows = []
        plain = np.tile(self.initial, self.n_via)
        rows.append(plain)
        centered = []
        for k, (center, _) in enumerate(self.discs):
            v = self.initial.copy()
            v[0], v[1] = center
            centered.append(v)
        rows.append(np.concatenate(centered))
        return np.vstack(rows)

    def __call__(self, flat: np.ndarray) -> np.ndarray:
        chrom = self.decode(flat)
        objs = via_objectives(self.model, chrom, self.via.points, self.world,
                              self.model.joint_limits, self.initial)
        n_hit = sum(
            1 for row in chrom
            if pose_collides(self.model, GeneralizedPose.from_vector(row),
                             self.world))
        if n_hit:
            objs = objs + INFEASIBLE_PENALTY * n_hit
        return objs


def optimize_via_poses(via: ViaPoints, model: RobotModel, world: WorldState,
                       initial_pose: GeneralizedPose,
                       n_pop: int = 80, n_gen: int = 100,
                       p_c: float = 0.7, p_m: float = 0.3,
                       weights=DEFAULT_VIA_WEIGHTS, seed: int = 0,
                       improved: bool = True,
                       accuracy_tol_per_via: float = 0.05) -> ViaPoseResult:
    """Search whole-body via-poses for the via pairs with the evolver.

    The result is flagged infeasible when the chosen chromosome misses
    the accuracy tolerance or still touches obstacles.
    """
    problem = ViaPoseProblem(model, world, via, initial_pose)
    cfg = GaConfig(n_pop=n_pop, n_gen=n_gen, p_c=p_c, p_m=p_m,
                   weights=np.asarray(weights, dtype=float),
                   bounds=problem.bounds, seed=seed, improved=improved)
    result = evolve(problem, cfg, initial_population=problem.warm_starts())
    chrom = problem.decode(result.best.chromosome)
    objs = via_objectives(model, chrom, via.points, world,
                          model.joint_limits, initial_pose.as_vector())
    feasible = (objs[0] <= accuracy_tol_per_via * len(via) + 1e-12
                and objs[2] == 0.0
                and not any(pose_collides(model,
                                          GeneralizedPose.from_vector(row),
                                          world) for row in chrom))
    return ViaPoseResult(chromosome=chrom, objectives=objs, feasible=feasible,
                         history=result.history, pareto_size=len(result.pareto))
