"""Objective functions for pose design and via-pose optimization.

Pose design minimizes five criteria at once: dual-EE position error,
dual-EE orientation error, negated manipulability, mass-weighted joint
displacement and EE displacement in the base frame.  Via-pose design
minimizes via-point accuracy, inter-pose joint travel, skeleton collision
fraction and negated directional manipulability.  A weighted decision
fitness over min-max normalized objective columns picks one solution from
a set.

Everything here is a pure function; evaluator objects hold only immutable
references and can be shared across parallel workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mobman import geometry
from mobman.kinematics import (
    FkResult,
    GeneralizedPose,
    RobotModel,
    forward_kinematics,
    jacobian,
    manipulability,
    directional_manipulability,
    orientation_error,
)


class ObjectiveError(ValueError):
    pass


def validate_weights(w, k: int | None = None) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if k is not None and w.shape != (k,):
        raise ObjectiveError(f"expected {k} weights, got {w.shape}")
    if np.any(w < 0.0):
        raise ObjectiveError("weights must be non-negative")
    if abs(float(np.sum(w)) - 1.0) > 1e-12:
        raise ObjectiveError(f"weights must sum to 1, got {np.sum(w)!r}")
    return w


@dataclass(frozen=True)
class PoseTask:
    """Desired EE placements plus the initial base-frame EE positions."""

    right_target: np.ndarray
    left_target: np.ndarray
    right_base_init: np.ndarray
    left_base_init: np.ndarray
    right_quat: np.ndarray | None = None
    left_quat: np.ndarray | None = None

    def __post_init__(self):
        for name in ("right_target", "left_target",
                     "right_base_init", "left_base_init"):
            object.__setattr__(self, name,
                               np.asarray(getattr(self, name), dtype=float))
        for name in ("right_quat", "left_quat"):
            q = getattr(self, name)
            if q is not None:
                q = np.asarray(q, dtype=float)
                if abs(np.linalg.norm(q) - 1.0) > 1e-9:
                    raise ObjectiveError(f"{name} must be a unit quaternion")
                object.__setattr__(self, name, q)


def make_pose_task(model: RobotModel, initial_pose: GeneralizedPose,
                   right_target, left_target,
                   right_quat=None, left_quat=None) -> PoseTask:
    """Build a PoseTask, deriving the initial base-frame EE positions."""
    fk = forward_kinematics(model, initial_pose)
    return PoseTask(
        right_target=right_target, left_target=left_target,
        right_base_init=fk.t_right_base.translation,
        left_base_init=fk.t_left_base.translation,
        right_quat=right_quat, left_quat=left_quat,
    )


def position_accuracy(model: RobotModel, pose: GeneralizedPose, task: PoseTask,
                      fk: FkResult | None = None) -> float:
    """Sum of the two EE position errors [m]."""
    if fk is None:
        fk = forward_kinematics(model, pose)
    return float(np.linalg.norm(fk.t_right.translation - task.right_target)
                 + np.linalg.norm(fk.t_left.translation - task.left_target))


def orientation_accuracy(model: RobotModel, pose: GeneralizedPose, task: PoseTask,
                         fk: FkResult | None = None) -> float:
    """Sum of the two EE quaternion error norms; unconstrained arms add 0."""
    if fk is None:
        fk = forward_kinematics(model, pose)
    total = 0.0
    if task.right_quat is not None:
        total += float(np.linalg.norm(
            orientation_error(task.right_quat, fk.t_right.quaternion())))
    if task.left_quat is not None:
        total += float(np.linalg.norm(
            orientation_error(task.left_quat, fk.t_left.quaternion())))
    return total


def manipulability_objective(model: RobotModel, pose: GeneralizedPose,
                             fk: FkResult | None = None) -> float:
    """Negated sum of both EEs' manipulability measures (<= 0)."""
    if fk is None:
        fk = forward_kinematics(model, pose)
    jr = jacobian(model, pose, "right", fk=fk)
    jl = jacobian(model, pose, "left", fk=fk)
    return -(manipulability(jr) + manipulability(jl))


def joint_displacement(model: RobotModel, pose: GeneralizedPose,
                       limits: np.ndarray | None = None) -> float:
    """Mass-weighted normalized displacement from the lower limits.

    Weights are cumulative distal masses, so heavy coordinates (base,
    waist) are the most expensive to move.  Equals 1/n at the upper
    limits since the weights sum to one.
    """
    lim = model.joint_limits if limits is None else np.asarray(limits, dtype=float)
    span = lim[:, 1] - lim[:, 0]
    if np.any(span <= 0.0):
        raise ObjectiveError("degenerate joint limit interval")
    v = pose.as_vector()
    w = model.distal_mass / float(np.sum(model.distal_mass))
    return float(np.sum(w * (v - lim[:, 0]) / span) / model.n)


def ee_base_displacement(model: RobotModel, pose: GeneralizedPose, task: PoseTask,
                         fk: FkResult | None = None) -> float:
    """Sum of EE displacements measured in the mobile-base frame [m]."""
    if fk is None:
        fk = forward_kinematics(model, pose)
    return float(np.linalg.norm(fk.t_right_base.translation - task.right_base_init)
                 + np.linalg.norm(fk.t_left_base.translation - task.left_base_init))


def pose_objectives(model: RobotModel, pose: GeneralizedPose, task: PoseTask,
                    limits: np.ndarray | None = None,
                    fk: FkResult | None = None) -> np.ndarray:
    """The five pose-design objectives as one vector, sharing one FK pass."""
    if fk is None:
        fk = forward_kinematics(model, pose)
    return np.array([
        position_accuracy(model, pose, task, fk=fk),
        orientation_accuracy(model, pose, task, fk=fk),
        manipulability_objective(model, pose, fk=fk),
        joint_displacement(model, pose, limits=limits),
        ee_base_displacement(model, pose, task, fk=fk),
    ])


# ---------------------------------------------------------------------------
# decision fitness (weighted sum over min-max normalized columns)

def normalize_columns(objs: np.ndarray) -> np.ndarray:
    """Min-max normalize each objective column; constant columns map to 0."""
    objs = np.asarray(objs, dtype=float)
    lo = objs.min(axis=0)
    span = objs.max(axis=0) - lo
    z = np.zeros_like(objs)
    ok = span > 0.0
    z[:, ok] = (objs[:, ok] - lo[ok]) / span[ok]
    return z


def combined_fitness(objs: np.ndarray, weights) -> np.ndarray:
    """Fitness of every individual: weighted normalized objectives, lower wins."""
    objs = np.atleast_2d(np.asarray(objs, dtype=float))
    w = validate_weights(weights, objs.shape[1])
    return normalize_columns(objs) @ w


def decision_pick(objs: np.ndarray, weights) -> int:
    """Index of the weighted-fitness minimizer; ties go to the lowest index."""
    fit = combined_fitness(objs, weights)
    return int(np.argmin(fit))


# ---------------------------------------------------------------------------
# via-pose objectives

def _chromosome_poses(chromosome: np.ndarray) -> list:
    chromosome = np.asarray(chromosome, dtype=float)
    if chromosome.ndim != 2 or chromosome.shape[1] != 19:
        raise ObjectiveError("chromosome must be (n_via, 19)")
    return [GeneralizedPose.from_vector(v) for v in chromosome]


def via_accuracy(model: RobotModel, chromosome: np.ndarray,
                 via_points: np.ndarray, fks: list | None = None) -> float:
    """Summed distance between commanded EE via-point pairs and FK EEs."""
    via_points = np.asarray(via_points, dtype=float)
    poses = _chromosome_poses(chromosome)
    if via_points.shape != (len(poses), 6):
        raise ObjectiveError(
            f"expected {(len(poses), 6)} via-point array, got {via_points.shape}")
    if fks is None:
        fks = [forward_kinematics(model, p) for p in poses]
    total = 0.0
    for fk, target in zip(fks, via_points):
        reached = np.concatenate([fk.t_right.translation, fk.t_left.translation])
        total += float(np.linalg.norm(reached - target))
    return total


def via_displacement(chromosome: np.ndarray, limits: np.ndarray,
                     initial: np.ndarray) -> float:
    """Summed normalized joint travel between consecutive via-poses.

    The travel of the first via-pose is measured from ``initial``.
    """
    chromosome = np.asarray(chromosome, dtype=float)
    limits = np.asarray(limits, dtype=float)
    span = limits[:, 1] - limits[:, 0]
    if np.any(span <= 0.0):
        raise ObjectiveError("degenerate joint limit interval")
    prev = np.asarray(initial, dtype=float)
    total = 0.0
    for row in chromosome:
        total += float(np.sum(np.abs(row - prev) / span))
        prev = row
    return total


def via_collision(model: RobotModel, chromosome: np.ndarray,
                  world: geometry.WorldState, fks: list | None = None) -> float:
    """Sum of skeleton collision fractions over the via-poses."""
    poses = _chromosome_poses(chromosome)
    if fks is None:
        fks = [forward_kinematics(model, p) for p in poses]
    return float(sum(geometry.collision_fraction(model, p, world, fk=fk)
                     for p, fk in zip(poses, fks)))


def via_directional(model: RobotModel, chromosome: np.ndarray,
                    fks: list | None = None) -> float:
    """Negated directional manipulability summed along inter-via EE chords.

    A zero-length chord has no defined direction and contributes 0.
    """
    poses = _chromosome_poses(chromosome)
    if len(poses) < 2:
        return 0.0
    if fks is None:
        fks = [forward_kinematics(model, p) for p in poses]
    total = 0.0
    for i in range(len(poses) - 1):
        for side in ("right", "left"):
            a = fks[i].ee_position(side)
            b = fks[i + 1].ee_position(side)
            chord = b - a
            norm = float(np.linalg.norm(chord))
            if norm < 1e-12:
                continue
            j = jacobian(model, poses[i], side, fk=fks[i])
            total += directional_manipulability(j, chord / norm)
    return -total


def via_objectives(model: RobotModel, chromosome: np.ndarray,
                   via_points: np.ndarray, world: geometry.WorldState,
                   limits: np.ndarray, initial: np.ndarray) -> np.ndarray:
    """The four via-pose objectives as one vector, sharing FK passes."""
    poses = _chromosome_poses(chromosome)
    fks = [forward_kinematics(model, p) for p in poses]
    return np.array([
        via_accuracy(model, chromosome, via_points, fks=fks),
        via_displacement(chromosome, limits, initial),
        via_collision(model, chromosome, world, fks=fks),
        via_directional(model, chromosome, fks=fks),
    ])
