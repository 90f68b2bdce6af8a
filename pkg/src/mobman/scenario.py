"""Scenario files: strict schema, defaults with provenance, builders.

A scenario is one YAML document describing the world, the task, and the
algorithm configurations for one experiment mode.  Validation is strict:
unknown keys are errors, and every field filled from a default is
recorded in the provenance map so reports can show where a number came
from.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
import yaml

from mobman import geometry
from mobman.evolver import GaConfig
from mobman.geometry import WorldState
from mobman.kinematics import GeneralizedPose, RobotModel, default_model, load_model
from mobman.objectives import PoseTask, make_pose_task
from mobman.online import (
    ConstantScript,
    CycleConfig,
    NavTask,
    RandomWalkScript,
    WorldTimeline,
)
from mobman.planner import PlannerConfig

MODES = ("pose-opt", "plan", "simulate-online", "via-pose")


class SchemaError(ValueError):
    pass


class _Ctx:
    def __init__(self):
        self.provenance: dict = {}

    def mark(self, path: str, source: str):
        self.provenance[path] = source


def _require(d: dict, key: str, path: str):
    if key not in d:
        raise SchemaError(f"{path}: missing required key '{key}'")
    return d[key]


def _no_unknown(d: dict, allowed, path: str):
    unknown = set(d) - set(allowed)
    if unknown:
        raise SchemaError(f"{path}: unknown keys {sorted(unknown)}")


def _number(v, path: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SchemaError(f"{path}: expected a number, got {type(v).__name__}")
    return float(v)


def _vector(v, n: int, path: str) -> np.ndarray:
    if not isinstance(v, (list, tuple)) or len(v) != n:
        raise SchemaError(f"{path}: expected a list of {n} numbers")
    return np.array([_number(x, f"{path}[{i}]") for i, x in enumerate(v)])


def _get(ctx: _Ctx, d: dict, key: str, default, path: str, conv=None):
    if key in d:
        ctx.mark(f"{path}.{key}", "scenario")
        val = d[key]
    else:
        ctx.mark(f"{path}.{key}", "default")
        val = default
    if conv is not None and val is not None:
        val = conv(val, f"{path}.{key}")
    return val


def _parse_obstacle(ctx: _Ctx, doc: dict, path: str):
    _no_unknown(doc, {"id", "shape", "center", "half_extents", "radius",
                      "height", "dynamic", "motion"}, path)
    oid = str(_require(doc, "id", path))
    shape = _require(doc, "shape", path)
    center = _vector(_require(doc, "center", path), 3, f"{path}.center")
    dynamic = bool(doc.get("dynamic", False))
    if shape == "box":
        he = _vector(_require(doc, "half_extents", path), 3,
                     f"{path}.half_extents")
        obstacle = geometry.box(oid, center, he, dynamic=dynamic)
    elif shape == "cylinder":
        obstacle = geometry.cylinder(
            oid, center, _number(_require(doc, "radius", path), path),
            _number(_require(doc, "height", path), path), dynamic=dynamic)
    elif shape == "sphere":
        obstacle = geometry.sphere(
            oid, center, _number(_require(doc, "radius", path), path),
            dynamic=dynamic)
    else:
        raise SchemaError(f"{path}.shape: unknown shape {shape!r}")
    motion = doc.get("motion")
    if motion is not None and not dynamic:
        raise SchemaError(f"{path}: motion script on a non-dynamic obstacle")
    if dynamic and motion is None:
        raise SchemaError(f"{path}: dynamic obstacle needs a motion script")
    if motion is not None:
        _no_unknown(motion, {"type", "velocity", "speed_max", "region"},
                    f"{path}.motion")
        mtype = _require(motion, "type", f"{path}.motion")
        if mtype == "constant":
            _vector(_require(motion, "velocity", f"{path}.motion"), 3,
                    f"{path}.motion.velocity")
        elif mtype == "random_walk":
            _number(_require(motion, "speed_max", f"{path}.motion"),
                    f"{path}.motion.speed_max")
            region = _require(motion, "region", f"{path}.motion")
            _no_unknown(region, {"min", "max"}, f"{path}.motion.region")
            _vector(_require(region, "min", f"{path}.motion.region"), 3,
                    f"{path}.motion.region.min")
            _vector(_require(region, "max", f"{path}.motion.region"), 3,
                    f"{path}.motion.region.max")
        else:
            raise SchemaError(f"{path}.motion.type: unknown type {mtype!r}")
    return obstacle, motion


@dataclass
class Scenario:
    """A fully resolved experiment description."""

    name: str
    mode: str
    seeds: list
    model: RobotModel
    bounds_min: np.ndarray
    bounds_max: np.ndarray
    security_hull: float
    manipulation_hull: float
    obstacles: list                  # (Obstacle, motion dict | None)
    task: dict
    ga: dict
    planner: PlannerConfig
    cycles: CycleConfig
    execution: dict
    provenance: dict = field(default_factory=dict)

    # -- builders ---------------------------------------------------------

    def static_world(self, hull: float) -> WorldState:
        return WorldState(tuple(o for o, _ in self.obstacles),
                          self.bounds_min, self.bounds_max,
                          security_hull=hull)

    def navigation_world(self) -> WorldState:
        return self.static_world(self.security_hull)

    def manipulation_world(self) -> WorldState:
        return self.static_world(self.manipulation_hull)

    def timeline(self, seed: int) -> WorldTimeline:
        """Scripted world for one run; obstacle randomness derives from the
        run seed unless the scenario pins an explicit obstacle seed."""
        root = self.execution.get("obstacle_seed")
        root = int(seed) if root is None else int(root)
        static, dynamic = [], []
        for k, (obstacle, motion) in enumerate(self.obstacles):
            if motion is None:
                static.append(obstacle)
                continue
            start = obstacle.center
            if motion["type"] == "constant":
                script = ConstantScript(start, motion["velocity"])
            else:
                region = motion["region"]
                script = RandomWalkScript(
                    start, motion["speed_max"], region["min"], region["max"],
                    redraw_dt=self.cycles.dt_c,
                    seed=np.random.SeedSequence([root, 1000 + k]))
            dynamic.append((obstacle, script))
        return WorldTimeline(static, dynamic, self.bounds_min, self.bounds_max,
                             security_hull=self.security_hull)

    def initial_pose(self) -> GeneralizedPose:
        t = self.task
        return GeneralizedPose(np.asarray(t["initial_base"], float),
                               np.asarray(t["initial_waist"], float),
                               np.asarray(t["initial_right_arm"], float),
                               np.asarray(t["initial_left_arm"], float))

    def pose_task(self) -> PoseTask:
        t = self.task
        return make_pose_task(self.model, self.initial_pose(),
                              t["ee_right"], t["ee_left"],
                              right_quat=t.get("ee_right_quat"),
                              left_quat=t.get("ee_left_quat"))

    def nav_task(self) -> NavTask:
        ex = self.execution
        t = self.task
        return NavTask(start_xy=np.asarray(t["base_start"], float),
                       goal_xy=np.asarray(t["base_goal"], float),
                       phi_start=float(t["phi_start"]),
                       base_speed=ex["base_speed"], yaw_rate=ex["yaw_rate"],
                       goal_tol=ex["goal_tol"], t_max=ex["t_max"])

    def ga_config(self, seed: int, improved: bool = True,
                  bounds: np.ndarray | None = None) -> GaConfig:
        g = self.ga
        if bounds is None:
            bounds = self.pose_bounds()
        return GaConfig(n_pop=g["n_pop"], n_gen=g["n_gen"], p_c=g["p_c"],
                        p_m=g["p_m"], weights=np.asarray(g["weights"], float),
                        bounds=bounds, seed=seed, improved=improved)

    def pose_bounds(self) -> np.ndarray:
        b = self.model.joint_limits.copy()
        g = self.ga
        b[0] = g["base_x"]
        b[1] = g["base_y"]
        b[2] = (-math.pi, math.pi)
        return b

    def planner_config(self, seed: int) -> PlannerConfig:
        p = self.planner
        return PlannerConfig(rrt_step=p.rrt_step, grad_step=p.grad_step,
                             dis_max=p.dis_max, p_rbm=p.p_rbm,
                             adjust_step=p.adjust_step, max_iters=p.max_iters,
                             edge_check_step=p.edge_check_step, seed=seed,
                             direct_connect_budget=p.direct_connect_budget)


def _parse_task(ctx: _Ctx, doc: dict, mode: str) -> dict:
    path = "task"
    allowed = {"initial_pose", "ee_targets", "base_start", "base_goal",
               "phi_start"}
    _no_unknown(doc, allowed, path)
    task: dict = {}
    ip = doc.get("initial_pose")
    if ip is not None:
        _no_unknown(ip, {"base", "waist", "right_arm", "left_arm"},
                    f"{path}.initial_pose")
        task["initial_base"] = _vector(_require(ip, "base", path), 3,
                                       f"{path}.initial_pose.base")
        task["initial_waist"] = _vector(ip.get("waist", [0.0, 0.0]), 2,
                                        f"{path}.initial_pose.waist")
        task["initial_right_arm"] = _vector(ip.get("right_arm", [0.0] * 7), 7,
                                            f"{path}.initial_pose.right_arm")
        task["initial_left_arm"] = _vector(ip.get("left_arm", [0.0] * 7), 7,
                                           f"{path}.initial_pose.left_arm")
    if mode in ("pose-opt", "via-pose"):
        if ip is None:
            raise SchemaError(f"{path}: mode {mode} needs initial_pose")
        targets = _require(doc, "ee_targets", path)
        _no_unknown(targets, {"right", "left", "right_quat", "left_quat"},
                    f"{path}.ee_targets")
        task["ee_right"] = _vector(_require(targets, "right", path), 3,
                                   f"{path}.ee_targets.right")
        task["ee_left"] = _vector(_require(targets, "left", path), 3,
                                  f"{path}.ee_targets.left")
        for key in ("right_quat", "left_quat"):
            if key in targets:
                task[f"ee_{key}"] = _vector(targets[key], 4,
                                            f"{path}.ee_targets.{key}")
    if mode in ("plan", "simulate-online"):
        if "base_start" in doc:
            task["base_start"] = _vector(doc["base_start"], 2,
                                         f"{path}.base_start")
        elif ip is not None:
            task["base_start"] = task["initial_base"][:2]
        else:
            raise SchemaError(f"{path}: mode {mode} needs base_start "
                              f"or initial_pose")
        task["base_goal"] = _vector(_require(doc, "base_goal", path), 2,
                                    f"{path}.base_goal")
        task["phi_start"] = _number(doc.get("phi_start",
                                            task.get("initial_base",
                                                     [0, 0, 0.0])[2]),
                                    f"{path}.phi_start")
    return task


def load_scenario(source) -> Scenario:
    """Read, validate and resolve one scenario document."""
    if isinstance(source, dict):
        doc = dict(source)
        origin = "<dict>"
    else:
        with open(source, "r") as f:
            doc = yaml.safe_load(f)
        origin = str(source)
    if not isinstance(doc, dict):
        raise SchemaError(f"{origin}: scenario document must be a mapping")

    ctx = _Ctx()
    top_allowed = {"scenario_version", "name", "mode", "model_profile",
                   "seeds", "world", "task", "ga", "planner", "cycles",
                   "execution"}
    _no_unknown(doc, top_allowed, "scenario")
    version = _require(doc, "scenario_version", "scenario")
    if version != 1:
        raise SchemaError(f"scenario: unsupported version {version}")
    name = str(_require(doc, "name", "scenario"))
    mode = _require(doc, "mode", "scenario")
    if mode not in MODES:
        raise SchemaError(f"scenario.mode: {mode!r} not one of {MODES}")
    seeds = _require(doc, "seeds", "scenario")
    if not isinstance(seeds, list) or not seeds:
        raise SchemaError("scenario.seeds: need a non-empty list")
    seeds = [int(s) for s in seeds]

    profile = _get(ctx, doc, "model_profile", "default", "scenario")
    model = default_model() if profile == "default" else load_model(profile)

    world_doc = _require(doc, "world", "scenario")
    _no_unknown(world_doc, {"bounds", "security_hull", "manipulation_hull",
                            "obstacles"}, "world")
    bounds = _require(world_doc, "bounds", "world")
    _no_unknown(bounds, {"min", "max"}, "world.bounds")
    bounds_min = _vector(_require(bounds, "min", "world.bounds"), 3,
                         "world.bounds.min")
    bounds_max = _vector(_require(bounds, "max", "world.bounds"), 3,
                         "world.bounds.max")
    if np.any(bounds_max <= bounds_min):
        raise SchemaError("world.bounds: max must exceed min")
    security_hull = _get(ctx, world_doc, "security_hull", 0.3, "world", _number)
    manipulation_hull = _get(ctx, world_doc, "manipulation_hull", 0.0,
                             "world", _number)
    obstacles = []
    for k, od in enumerate(world_doc.get("obstacles", []) or []):
        obstacles.append(_parse_obstacle(ctx, od, f"world.obstacles[{k}]"))
    ids = [o.id for o, _ in obstacles]
    if len(set(ids)) != len(ids):
        raise SchemaError("world.obstacles: duplicate ids")

    task = _parse_task(ctx, _require(doc, "task", "scenario"), mode)

    ga_doc = doc.get("ga", {}) or {}
    _no_unknown(ga_doc, {"n_pop", "n_gen", "p_c", "p_m", "weights",
                         "base_x", "base_y"}, "ga")
    ga = {
        "n_pop": int(_get(ctx, ga_doc, "n_pop", 100, "ga", _number)),
        "n_gen": int(_get(ctx, ga_doc, "n_gen", 120, "ga", _number)),
        "p_c": _get(ctx, ga_doc, "p_c", 0.7, "ga", _number),
        "p_m": _get(ctx, ga_doc, "p_m", 0.3, "ga", _number),
        "weights": [_number(w, "ga.weights") for w in
                    _get(ctx, ga_doc, "weights",
                         [0.54, 0.0, 0.04, 0.02, 0.40], "ga")],
        "base_x": tuple(_vector(_get(ctx, ga_doc, "base_x",
                                     [float(bounds_min[0]),
                                      float(bounds_max[0])], "ga"),
                                2, "ga.base_x")),
        "base_y": tuple(_vector(_get(ctx, ga_doc, "base_y",
                                     [float(bounds_min[1]),
                                      float(bounds_max[1])], "ga"),
                                2, "ga.base_y")),
    }

    p_doc = doc.get("planner", {}) or {}
    _no_unknown(p_doc, {"rrt_step", "grad_step", "dis_max", "p_rbm",
                        "adjust_step", "max_iters", "edge_check_step",
                        "direct_connect_budget"}, "planner")
    planner = PlannerConfig(
        rrt_step=_get(ctx, p_doc, "rrt_step", 0.2, "planner", _number),
        grad_step=_get(ctx, p_doc, "grad_step", 0.2, "planner", _number),
        dis_max=_get(ctx, p_doc, "dis_max", 0.4, "planner", _number),
        p_rbm=_get(ctx, p_doc, "p_rbm", 0.5, "planner", _number),
        adjust_step=_get(ctx, p_doc, "adjust_step", 0.05, "planner", _number),
        max_iters=int(_get(ctx, p_doc, "max_iters", 3000, "planner", _number)),
        edge_check_step=_get(ctx, p_doc, "edge_check_step", 0.02, "planner",
                             _number),
        direct_connect_budget=int(_get(ctx, p_doc, "direct_connect_budget",
                                       32, "planner", _number)),
    )

    c_doc = doc.get("cycles", {}) or {}
    _no_unknown(c_doc, {"dt_s", "dt_c", "dt_col", "m_o"}, "cycles")
    cycles = CycleConfig(
        dt_s=_get(ctx, c_doc, "dt_s", 0.5, "cycles", _number),
        dt_c=_get(ctx, c_doc, "dt_c", 1.0, "cycles", _number),
        dt_col=_get(ctx, c_doc, "dt_col", 2.0, "cycles", _number),
        m_o=int(_get(ctx, c_doc, "m_o", 4, "cycles", _number)),
    )

    e_doc = doc.get("execution", {}) or {}
    _no_unknown(e_doc, {"base_speed", "yaw_rate", "goal_tol", "t_max",
                        "sensing_range", "obstacle_seed", "base_radius"},
                "execution")
    execution = {
        "base_speed": _get(ctx, e_doc, "base_speed", 0.4, "execution", _number),
        "yaw_rate": _get(ctx, e_doc, "yaw_rate", 1.5, "execution", _number),
        "goal_tol": _get(ctx, e_doc, "goal_tol", 0.1, "execution", _number),
        "t_max": _get(ctx, e_doc, "t_max", 300.0, "execution", _number),
        "sensing_range": _get(ctx, e_doc, "sensing_range", math.inf,
                              "execution", _number),
        "obstacle_seed": (int(e_doc["obstacle_seed"])
                          if "obstacle_seed" in e_doc else None),
        "base_radius": _get(ctx, e_doc, "base_radius", 0.30, "execution",
                            _number),
    }
    ctx.mark("execution.obstacle_seed",
             "scenario" if "obstacle_seed" in e_doc else "default")

    return Scenario(name=name, mode=mode, seeds=seeds, model=model,
                    bounds_min=bounds_min, bounds_max=bounds_max,
                    security_hull=security_hull,
                    manipulation_hull=manipulation_hull,
                    obstacles=obstacles, task=task, ga=ga, planner=planner,
                    cycles=cycles, execution=execution,
                    provenance=ctx.provenance)


def bundled_scenario_path(name: str):
    ref = resources.files("mobman") / "scenarios" / f"{name}.yaml"
    with resources.as_file(ref) as path:
        return path


def load_bundled(name: str) -> Scenario:
    return load_scenario(bundled_scenario_path(name))
