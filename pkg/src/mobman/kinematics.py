"""Kinematic model of the mobile dual-arm robot.

The robot has 19 generalized coordinates: planar base (x, y, phi), two
waist joints and two 7-joint arms.  Frames are chained with the modified
Denavit-Hartenberg convention (four parameters per row); the base is a
planar transform handled outside the MDH rows.  All operations here are
pure functions of their inputs and a RobotModel is immutable after
construction, so instances can be shared freely between workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
import yaml

ORTHO_TOL = 1e-9


class ModelError(ValueError):
    """Raised for malformed models, poses or kinematic inputs."""


def wrap_angle(a):
    """Wrap an angle to (-pi, pi]."""
    w = math.fmod(a + math.pi, 2.0 * math.pi)
    if w <= 0.0:
        w += 2.0 * math.pi
    return w - math.pi


@dataclass(frozen=True)
class MdhParam:
    """One modified-DH row: Rot(x,alpha) Trans(x,a) Rot(z,theta) Trans(z,d).

    ``joint`` is the index of the generalized coordinate added to
    ``theta``, or None for a structural (fixed) row.
    """

    alpha_prev: float
    a_prev: float
    theta: float
    d: float
    joint: int | None = None

    def __post_init__(self):
        vals = (self.alpha_prev, self.a_prev, self.theta, self.d)
        if not all(math.isfinite(v) for v in vals):
            raise ModelError(f"non-finite MDH row: {vals}")
        object.__setattr__(self, "alpha_prev", wrap_angle(self.alpha_prev))
        object.__setattr__(self, "theta", wrap_angle(self.theta))


@dataclass(frozen=True)
class Transform:
    """Rigid transform: orthonormal rotation plus translation."""

    rotation: np.ndarray
    translation: np.ndarray

    @staticmethod
    def identity() -> "Transform":
        return Transform(np.eye(3), np.zeros(3))

    @staticmethod
    def from_matrix(m: np.ndarray) -> "Transform":
        return Transform(np.array(m[:3, :3]), np.array(m[:3, 3]))

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def compose(self, other: "Transform") -> "Transform":
        return Transform(self.rotation @ other.rotation,
                         self.rotation @ other.translation + self.translation)

    def __matmul__(self, other: "Transform") -> "Transform":
        return self.compose(other)

    def apply(self, point: np.ndarray) -> np.ndarray:
        return self.rotation @ np.asarray(point, dtype=float) + self.translation

    def quaternion(self) -> np.ndarray:
        return quat_from_rotation(self.rotation)

    def is_orthonormal(self, tol: float = ORTHO_TOL) -> bool:
        r = self.rotation
        return (np.max(np.abs(r.T @ r - np.eye(3))) <= tol
                and abs(np.linalg.det(r) - 1.0) <= tol)


def mdh_transform(p: MdhParam, q: float = 0.0) -> Transform:
    """Transform of one MDH row, with joint value ``q`` added to theta."""
    theta = p.theta + q
    ca, sa = math.cos(p.alpha_prev), math.sin(p.alpha_prev)
    ct, st = math.cos(theta), math.sin(theta)
    r = np.array([
        [ct, -st, 0.0],
        [st * ca, ct * ca, -sa],
        [st * sa, ct * sa, ca],
    ])
    t = np.array([p.a_prev, -p.d * sa, p.d * ca])
    return Transform(r, t)


@dataclass(frozen=True)
class GeneralizedPose:
    """The 19-vector planning state: base (x, y, phi), waist, both arms."""

    base: np.ndarray        # (3,) x [m], y [m], phi [rad]
    waist: np.ndarray       # (2,) rad
    right_arm: np.ndarray   # (7,) rad
    left_arm: np.ndarray    # (7,) rad

    def __post_init__(self):
        for name, size in (("base", 3), ("waist", 2),
                           ("right_arm", 7), ("left_arm", 7)):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (size,):
                raise ModelError(f"{name} must have length {size}, got {v.shape}")
            object.__setattr__(self, name, v)

    @staticmethod
    def from_vector(v) -> "GeneralizedPose":
        v = np.asarray(v, dtype=float)
        if v.shape != (19,):
            raise ModelError(f"pose vector must have length 19, got {v.shape}")
        return GeneralizedPose(v[:3], v[3:5], v[5:12], v[12:19])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.base, self.waist, self.right_arm, self.left_arm])

    def with_base(self, x, y, phi) -> "GeneralizedPose":
        return GeneralizedPose(np.array([x, y, phi]), self.waist,
                               self.right_arm, self.left_arm)


CONTROL_POINT_NAMES = ("base", "waist", "shoulder_r", "shoulder_l",
                       "elbow_r", "elbow_l", "wrist_r", "wrist_l")

# Skeleton links (a..h); the last one is the left forearm.
SKELETON_LINKS = (
    ("base", "waist"),
    ("waist", "shoulder_r"),
    ("waist", "shoulder_l"),
    ("shoulder_r", "shoulder_l"),
    ("shoulder_r", "elbow_r"),
    ("elbow_r", "wrist_r"),
    ("shoulder_l", "elbow_l"),
    ("elbow_l", "wrist_l"),
)


@dataclass(frozen=True)
class RobotModel:
    """Immutable kinematic ground truth loaded from a model profile."""

    model_version: int
    name: str
    dimensions: dict
    base_radius: float
    base_frame_height: float
    waist_chain: tuple
    right_chain: tuple
    left_chain: tuple
    ee_offset: float
    joint_limits: np.ndarray          # (19, 2)
    link_masses: dict
    distal_mass: np.ndarray           # (19,) mass moved by each coordinate
    # chain row indices whose frame origins are the skeleton joints
    _marks: dict = field(default_factory=dict)

    def __post_init__(self):
        lim = np.asarray(self.joint_limits, dtype=float)
        if lim.shape != (19, 2):
            raise ModelError("joint_limits must be (19, 2)")
        if np.any(lim[:, 1] <= lim[:, 0]):
            bad = np.where(lim[:, 1] <= lim[:, 0])[0]
            raise ModelError(f"degenerate joint limit interval at {bad}")
        object.__setattr__(self, "joint_limits", lim)

    @property
    def n(self) -> int:
        return 19

    @property
    def arm_reach(self) -> float:
        d = self.dimensions
        return d["l3"] + d["l4"] + d["l5"]

    def pose_in_limits(self, pose: GeneralizedPose, margin: float = 0.0) -> bool:
        v = pose.as_vector()
        return bool(np.all(v >= self.joint_limits[:, 0] - margin)
                    and np.all(v <= self.joint_limits[:, 1] + margin))

    def clamp(self, vec: np.ndarray) -> np.ndarray:
        return np.clip(vec, self.joint_limits[:, 0], self.joint_limits[:, 1])


@dataclass(frozen=True)
class FkResult:
    """Forward-kinematics output for one pose."""

    t_right: Transform
    t_left: Transform
    t_right_base: Transform
    t_left_base: Transform
    control_points: dict
    # world-frame joint axes/origins used to assemble Jacobians
    waist_axes: np.ndarray    # (2, 3)
    waist_origins: np.ndarray
    right_axes: np.ndarray    # (7, 3)
    right_origins: np.ndarray
    left_axes: np.ndarray
    left_origins: np.ndarray

    def ee_position(self, side: str) -> np.ndarray:
        return (self.t_right if side == "right" else self.t_left).translation

    def skeleton_points(self) -> np.ndarray:
        return np.array([self.control_points[n] for n in CONTROL_POINT_NAMES])

    def skeleton_segments(self):
        cp = self.control_points
        return [(cp[a], cp[b]) for a, b in SKELETON_LINKS]


def base_transform(base: np.ndarray, frame_height: float) -> Transform:
    """Planar base pose lifted to the torso-root frame."""
    x, y, phi = base
    c, s = math.cos(phi), math.sin(phi)
    r = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return Transform(r, np.array([x, y, frame_height]))


def _chain_frames(root: Transform, rows, q: np.ndarray):
    """Compose MDH rows from ``root``; returns frames after every row."""
    frames = []
    t = root
    for row in rows:
        qi = q[row.joint] if row.joint is not None else 0.0
        t = t @ mdh_transform(row, qi)
        frames.append(t)
    return frames


def forward_kinematics(model: RobotModel, pose: GeneralizedPose) -> FkResult:
    """EE transforms in world and base frames plus the 8 skeleton points."""
    q = pose.as_vector()
    t03 = base_transform(pose.base, model.base_frame_height)

    waist_frames = _chain_frames(Transform.identity(), model.waist_chain, q)
    t_waist_b = waist_frames[-1]

    def arm(chain):
        frames = _chain_frames(t_waist_b, chain, q)
        tb = frames[-1] @ Transform(np.eye(3), np.array([0.0, 0.0, model.ee_offset]))
        return frames, tb

    r_frames, t_rb = arm(model.right_chain)
    l_frames, t_lb = arm(model.left_chain)
    t_rb = Transform(t_rb.rotation, t_rb.translation)
    t_lb = Transform(t_lb.rotation, t_lb.translation)

    t_r = t03 @ t_rb
    t_l = t03 @ t_lb

    def world(tf: Transform) -> Transform:
        return t03 @ tf

    marks = model._marks
    sh_r = world(r_frames[marks["shoulder"]]).translation
    sh_l = world(l_frames[marks["shoulder"]]).translation
    el_r = world(r_frames[marks["elbow"]]).translation
    el_l = world(l_frames[marks["elbow"]]).translation
    wr_r = world(r_frames[marks["wrist"]]).translation
    wr_l = world(l_frames[marks["wrist"]]).translation

    torso_root = t03.translation
    shoulder_mid = 0.5 * (sh_r + sh_l)
    x, y, _ = pose.base
    control_points = {
        "base": np.array([x, y, 0.5 * model.base_frame_height]),
        "waist": 0.5 * (torso_root + shoulder_mid),
        "shoulder_r": sh_r,
        "shoulder_l": sh_l,
        "elbow_r": el_r,
        "elbow_l": el_l,
        "wrist_r": wr_r,
        "wrist_l": wr_l,
    }

    def axes_origins(frames, chain):
        axes, origins = [], []
        for row, tf in zip(chain, frames):
            if row.joint is None:
                continue
            w = world(tf)
            axes.append(w.rotation[:, 2])
            origins.append(w.translation)
        return np.array(axes), np.array(origins)

    w_axes, w_origins = axes_origins(waist_frames, model.waist_chain)
    r_axes, r_origins = axes_origins(r_frames, model.right_chain)
    l_axes, l_origins = axes_origins(l_frames, model.left_chain)

    return FkResult(
        t_right=t_r, t_left=t_l, t_right_base=t_rb, t_left_base=t_lb,
        control_points=control_points,
        waist_axes=w_axes, waist_origins=w_origins,
        right_axes=r_axes, right_origins=r_origins,
        left_axes=l_axes, left_origins=l_origins,
    )


def jacobian(model: RobotModel, pose: GeneralizedPose, side: str,
             fk: FkResult | None = None) -> np.ndarray:
    """3x19 linear-velocity Jacobian of one EE in the world frame.

    Columns of the opposite arm are exactly zero.
    """
    if side not in ("right", "left"):
        raise ModelError(f"side must be 'right' or 'left', got {side!r}")
    if fk is None:
        fk = forward_kinematics(model, pose)
    p_ee = fk.ee_position(side)
    j = np.zeros((3, 19))
    j[:, 0] = (1.0, 0.0, 0.0)
    j[:, 1] = (0.0, 1.0, 0.0)
    zhat = np.array([0.0, 0.0, 1.0])
    base_origin = np.array([pose.base[0], pose.base[1], 0.0])
    j[:, 2] = np.cross(zhat, p_ee - base_origin)
    for k in range(2):
        j[:, 3 + k] = np.cross(fk.waist_axes[k], p_ee - fk.waist_origins[k])
    if side == "right":
        axes, origins, col0 = fk.right_axes, fk.right_origins, 5
    else:
        axes, origins, col0 = fk.left_axes, fk.left_origins, 12
    for k in range(7):
        j[:, col0 + k] = np.cross(axes[k], p_ee - origins[k])
    return j


def manipulability(j: np.ndarray) -> float:
    """sqrt(det(J J^T)); zero at singular configurations.

    Evaluated as |prod(diag(R))| from a QR factorisation of J^T, which is
    the same quantity but does not inherit the determinant's round-off
    floor near rank deficiency.
    """
    j = np.asarray(j, dtype=float)
    if not np.all(np.isfinite(j)):
        raise ModelError("Jacobian contains non-finite entries")
    r = np.linalg.qr(j.T, mode="r")
    return float(abs(np.prod(np.diag(r))))


def directional_manipulability(j: np.ndarray, d: np.ndarray) -> float:
    """Sum over singular directions of |d . u_k| * sigma_k."""
    d = np.asarray(d, dtype=float)
    if abs(np.linalg.norm(d) - 1.0) > 1e-6:
        raise ModelError("direction must be a unit vector")
    u, s, _ = np.linalg.svd(np.asarray(j, dtype=float))
    return float(np.sum(np.abs(d @ u[:, : len(s)]) * s))


# ---------------------------------------------------------------------------
# quaternions

def quat_from_rotation(r: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) of a rotation matrix, w >= 0."""
    t = np.trace(r)
    if t > 0.0:
        w = math.sqrt(1.0 + t) / 2.0
        f = 1.0 / (4.0 * w)
        q = np.array([w, (r[2, 1] - r[1, 2]) * f,
                      (r[0, 2] - r[2, 0]) * f, (r[1, 0] - r[0, 1]) * f])
    else:
        i = int(np.argmax(np.diag(r)))
        jx, k = (i + 1) % 3, (i + 2) % 3
        s = math.sqrt(max(1.0 + r[i, i] - r[jx, jx] - r[k, k], 0.0)) * 2.0
        q = np.empty(4)
        q[0] = (r[k, jx] - r[jx, k]) / s
        q[1 + i] = s / 4.0
        q[1 + jx] = (r[jx, i] + r[i, jx]) / s
        q[1 + k] = (r[k, i] + r[i, k]) / s
    if q[0] < 0.0:
        q = -q
    return q / np.linalg.norm(q)


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def orientation_error(desired: np.ndarray, actual: np.ndarray) -> np.ndarray:
    """Vector part of desired * actual^-1, scalar part kept non-negative.

    Its norm is |sin(angle/2)| of the relative rotation, hence <= 1.
    """
    desired = np.asarray(desired, dtype=float)
    actual = np.asarray(actual, dtype=float)
    for q in (desired, actual):
        if abs(np.linalg.norm(q) - 1.0) > 1e-9:
            raise ModelError("quaternions must have unit norm")
    err = quat_multiply(desired, quat_conjugate(actual))
    if err[0] < 0.0:
        err = -err
    return err[1:]


# ---------------------------------------------------------------------------
# model profile loading

def _rows_from_yaml(entries) -> tuple:
    return tuple(MdhParam(e["alpha"], e["a"], e["theta"], e["d"], e.get("joint"))
                 for e in entries)


def _distal_mass(masses: dict) -> np.ndarray:
    arm = masses["upper_arm"] + masses["forearm"] + masses["hand"]
    total_above_base = masses["waist"] + 2.0 * arm
    m = np.empty(19)
    m[0:3] = masses["base"] + total_above_base
    m[3:5] = total_above_base
    for c in (5, 12):
        m[c:c + 3] = arm
        m[c + 3] = masses["forearm"] + masses["hand"]
        m[c + 4:c + 7] = masses["hand"]
    return m


def load_model(source) -> RobotModel:
    """Load a RobotModel from a YAML profile path or mapping."""
    if isinstance(source, dict):
        doc = source
    else:
        with open(source, "r") as f:
            doc = yaml.safe_load(f)
    try:
        version = int(doc["model_version"])
        limits_doc = doc["joint_limits"]
        limits = np.array([
            limits_doc["base_x"], limits_doc["base_y"], limits_doc["base_phi"],
            limits_doc["waist_yaw"], limits_doc["waist_pitch"],
            *(limits_doc["right_arm"]), *(limits_doc["left_arm"]),
        ], dtype=float)
        masses = {k: float(v) for k, v in doc["masses"].items()}
        model = RobotModel(
            model_version=version,
            name=str(doc.get("name", "unnamed")),
            dimensions={k: float(v) for k, v in doc["dimensions"].items()},
            base_radius=float(doc["base"]["radius"]),
            base_frame_height=float(doc["base"]["frame_height"]),
            waist_chain=_rows_from_yaml(doc["chains"]["waist"]),
            right_chain=_rows_from_yaml(doc["chains"]["right_arm"]),
            left_chain=_rows_from_yaml(doc["chains"]["left_arm"]),
            ee_offset=float(doc["ee_offset"]),
            joint_limits=limits,
            link_masses=masses,
            distal_mass=_distal_mass(masses),
            _marks=dict(doc["chain_marks"]),
        )
    except KeyError as e:
        raise ModelError(f"model profile missing key: {e}") from e
    return model


def default_model() -> RobotModel:
    """The bundled 19-DoF dual-arm profile."""
    ref = resources.files("mobman") / "data" / "mobile_dualarm_v1.yaml"
    with resources.as_file(ref) as path:
        return load_model(path)
