import math

import numpy as np
import pytest

from mobman.geometry import (
    GeometryError,
    WorldState,
    box,
    clip_segment,
    collision_fraction,
    config_edge_collides,
    inflate,
    point_collides,
    pose_collides,
    segment_collides,
    skeleton_collides,
    sphere,
    cylinder,
)
from mobman.kinematics import GeneralizedPose, default_model, forward_kinematics


def make_world(obstacles, hull=0.0, lo=(-5, -5, -1), hi=(5, 5, 3)):
    return WorldState(tuple(obstacles), np.array(lo, float), np.array(hi, float),
                      security_hull=hull)


@pytest.fixture(scope="module")
def model():
    return default_model()


class TestInflate:
    def test_box_growth(self):
        o = box("b", [0, 0, 0], [0.5, 0.5, 0.5])
        g = inflate(o, 0.3)
        assert g.params == (0.8, 0.8, 0.8)
        assert np.allclose(g.center, o.center)

    def test_zero_is_identity(self):
        o = sphere("s", [1, 2, 3], 0.2)
        assert inflate(o, 0.0) is o

    def test_sphere_growth(self):
        assert inflate(sphere("s", [0, 0, 0], 0.2), 0.3).params == (0.5,)

    def test_cylinder_growth(self):
        g = inflate(cylinder("c", [0, 0, 0.5], 0.2, 1.0), 0.1)
        assert g.params == (pytest.approx(0.3), pytest.approx(1.2))

    def test_negative_rejected(self):
        with pytest.raises(GeometryError):
            inflate(box("b", [0, 0, 0], [1, 1, 1]), -0.1)


class TestSegmentCollides:
    def test_through_box_center(self):
        w = make_world([box("b", [0, 0, 0], [0.5, 0.5, 0.5])])
        assert segment_collides([-1, 0, 0], [1, 0, 0], w)

    def test_fully_outside(self):
        w = make_world([box("b", [0, 0, 0], [0.5, 0.5, 0.5])])
        assert not segment_collides([-1, 2, 0], [1, 2, 0], w)

    def test_tangent_sphere_counts(self):
        # oracle: point-to-segment distance equals the radius exactly
        r = 0.5
        w = make_world([sphere("s", [0.0, r, 0.0], r)])
        p0, p1 = np.array([-1.0, 0.0, 0.0]), np.array([1.0, 0.0, 0.0])

        def seg_dist(c, a, b):
            ab = b - a
            t = np.clip(np.dot(c - a, ab) / np.dot(ab, ab), 0, 1)
            return np.linalg.norm(c - (a + t * ab))

        assert seg_dist(np.array([0.0, r, 0.0]), p0, p1) == pytest.approx(r)
        assert segment_collides(p0, p1, w)
        # strictly beyond the radius: no contact
        w2 = make_world([sphere("s", [0.0, r + 1e-9, 0.0], r)])
        assert not segment_collides(p0, p1, w2)

    def test_symmetry_exact(self):
        rng = np.random.default_rng(2)
        w = make_world([
            box("b", [0, 0, 0], [0.4, 0.3, 0.5]),
            sphere("s", [1, 1, 0], 0.4),
            cylinder("c", [-1, 0.5, 0.5], 0.3, 1.0),
        ])
        for _ in range(200):
            p0 = rng.uniform(-2, 2, 3)
            p1 = rng.uniform(-2, 2, 3)
            assert segment_collides(p0, p1, w) == segment_collides(p1, p0, w)

    def test_hull_applied(self):
        w = make_world([box("b", [0, 0, 0], [0.5, 0.5, 0.5])], hull=0.3)
        assert point_collides([0.7, 0, 0], w)       # inside the inflated box
        assert not point_collides([0.85, 0, 0], w)

    def test_inflate_monotone(self):
        rng = np.random.default_rng(5)
        obs = [box("b", [0, 0, 0], [0.5, 0.4, 0.6]), sphere("s", [1, -1, 0.2], 0.5)]
        w0 = make_world(obs, hull=0.0)
        w1 = make_world(obs, hull=0.25)
        for _ in range(200):
            p0, p1 = rng.uniform(-2, 2, 3), rng.uniform(-2, 2, 3)
            if segment_collides(p0, p1, w0):
                assert segment_collides(p0, p1, w1)


class TestClipSegment:
    def test_box_interval(self):
        o = box("b", [0, 0, 0], [0.5, 1, 1])
        iv = clip_segment(np.array([-1.0, 0, 0]), np.array([1.0, 0, 0]), o)
        assert iv == (pytest.approx(0.25), pytest.approx(0.75))

    def test_miss_returns_none(self):
        o = sphere("s", [0, 0, 5.0], 0.5)
        assert clip_segment(np.array([-1.0, 0, 0]), np.array([1.0, 0, 0]), o) is None

    def test_cylinder_z_slab(self):
        o = cylinder("c", [0, 0, 1.0], 1.0, 1.0)  # z in [0.5, 1.5]
        iv = clip_segment(np.array([0.0, 0, 0]), np.array([0.0, 0, 2.0]), o)
        assert iv == (pytest.approx(0.25), pytest.approx(0.75))

    def test_dense_sampling_agreement(self):
        # oracle: 1e-4 resolution sampling of inside/outside
        rng = np.random.default_rng(7)
        shapes = [box("b", [0.2, -0.1, 0.3], [0.4, 0.5, 0.3]),
                  sphere("s", [-0.5, 0.4, 0.1], 0.45),
                  cylinder("c", [0.3, 0.6, 0.2], 0.35, 0.8)]

        def inside(p, o):
            if o.shape == "box":
                return bool(np.all(np.abs(p - o.center) <= np.array(o.params) + 1e-12))
            if o.shape == "sphere":
                return np.linalg.norm(p - o.center) <= o.params[0] + 1e-12
            r, h = o.params
            return (np.linalg.norm(p[:2] - o.center[:2]) <= r + 1e-12
                    and abs(p[2] - o.center[2]) <= h / 2 + 1e-12)

        for o in shapes:
            for _ in range(20):
                p0, p1 = rng.uniform(-1.2, 1.2, 3), rng.uniform(-1.2, 1.2, 3)
                iv = clip_segment(p0, p1, o)
                ts = np.linspace(0, 1, 10001)
                mask = np.array([inside(p0 + t * (p1 - p0), o) for t in ts])
                frac = mask.mean()
                expected = 0.0 if iv is None else max(iv[1] - iv[0], 0.0)
                assert frac == pytest.approx(expected, abs=2e-3)


class TestPoseCollides:
    def test_empty_world(self, model):
        w = make_world([])
        pose = GeneralizedPose.from_vector([0.0] * 19)
        assert not pose_collides(model, pose, w)

    def test_forearm_through_box(self, model):
        pose = GeneralizedPose.from_vector([0.0] * 19)
        fk = forward_kinematics(model, pose)
        wr = fk.control_points["wrist_r"]
        w = make_world([box("b", wr, [0.05, 0.05, 0.05])])
        assert pose_collides(model, pose, w)

    def test_base_disc(self, model):
        pose = GeneralizedPose.from_vector([0.0] * 19)
        # obstacle outside the skeleton but within the base disc radius
        w = make_world([box("b", [0.45, 0.0, 0.1], [0.2, 0.2, 0.1])])
        assert not skeleton_collides(model, pose, w)
        assert pose_collides(model, pose, w)


def bent_left_arm_pose():
    """Left upper arm 45 deg forward-down, left forearm straight down."""
    v = np.zeros(19)
    v[12] = -math.pi / 4   # left shoulder pitch
    v[15] = math.pi / 4    # left elbow
    return GeneralizedPose.from_vector(v)


class TestCollisionFraction:
    def test_collision_free_pose(self, model):
        w = make_world([box("b", [3, 3, 0], [0.5, 0.5, 0.5])])
        pose = GeneralizedPose.from_vector([0.0] * 19)
        assert collision_fraction(model, pose, w) == 0.0

    def test_left_forearm_fully_inside(self, model):
        pose = bent_left_arm_pose()
        fk = forward_kinematics(model, pose)
        el = fk.control_points["elbow_l"]
        wr = fk.control_points["wrist_l"]
        assert np.allclose(el[:2], wr[:2], atol=1e-12)  # forearm vertical
        # box whose top face passes exactly through the elbow point
        hz = 0.09
        center = np.array([el[0], el[1], el[2] - hz])
        w = make_world([box("b", center, [0.05, 0.05, hz])])
        lens = [np.linalg.norm(np.asarray(b) - np.asarray(a))
                for a, b in fk.skeleton_segments()]
        expected = lens[-1] / sum(lens)   # last link is the left forearm
        assert collision_fraction(model, pose, w) == pytest.approx(expected, abs=1e-9)

    def test_half_link_inside(self, model):
        pose = GeneralizedPose.from_vector([0.0] * 19)
        fk = forward_kinematics(model, pose)
        el = fk.control_points["elbow_r"]
        wr = fk.control_points["wrist_r"]
        mid_z = 0.5 * (el[2] + wr[2])
        # box covering exactly the lower half of the right forearm
        w = make_world([box("b", [wr[0], wr[1], mid_z - 0.1], [0.05, 0.05, 0.1])])
        lens = [np.linalg.norm(np.asarray(b) - np.asarray(a))
                for a, b in fk.skeleton_segments()]
        expected = 0.5 * lens[5] / sum(lens)  # link f is the right forearm
        assert collision_fraction(model, pose, w) == pytest.approx(expected, abs=1e-9)

    def test_zero_iff_skeleton_free(self, model):
        rng = np.random.default_rng(11)
        lo, hi = model.joint_limits[:, 0].copy(), model.joint_limits[:, 1].copy()
        lo[:2], hi[:2] = -1.0, 1.0
        for _ in range(30):
            v = lo + (hi - lo) * rng.random(19)
            pose = GeneralizedPose.from_vector(v)
            w = make_world([box("b", rng.uniform(-1, 1, 3), rng.uniform(0.1, 0.5, 3))])
            frac = collision_fraction(model, pose, w)
            hit = skeleton_collides(model, pose, w)
            if frac > 1e-9:
                assert hit
            if not hit:
                assert frac <= 1e-9


class TestConfigEdge:
    def test_single_point_edge(self, model):
        w = make_world([box("b", [3, 3, 0.2], [0.2, 0.2, 0.2])])
        pose = GeneralizedPose.from_vector([0.0] * 19)
        assert not config_edge_collides(model, pose, pose, w)

    def test_colliding_endpoint(self, model):
        free = GeneralizedPose.from_vector([0.0] * 19)
        hit = GeneralizedPose.from_vector([3.0, 3.0, 0.0] + [0.0] * 16)
        w = make_world([box("b", [3, 3, 0.2], [0.3, 0.3, 0.2])])
        assert config_edge_collides(model, free, hit, w, step=0.5)

    def test_thin_wall_detected(self, model):
        a = GeneralizedPose.from_vector([-1.0, 0, 0] + [0.0] * 16)
        b = GeneralizedPose.from_vector([1.0, 0, 0] + [0.0] * 16)
        w = make_world([box("wall", [0, 0, 0.5], [0.005, 2.0, 0.5])])
        assert config_edge_collides(model, a, b, w, step=0.01)
        # dense oracle agrees
        va, vb = a.as_vector(), b.as_vector()
        dense_hit = any(
            pose_collides(model, GeneralizedPose.from_vector(va + t * (vb - va)), w)
            for t in np.linspace(0, 1, 1001))
        assert dense_hit

    def test_monotone_under_refinement(self, model):
        a = GeneralizedPose.from_vector([-1.0, 0, 0] + [0.0] * 16)
        b = GeneralizedPose.from_vector([1.0, 0.4, 0] + [0.0] * 16)
        w = make_world([box("wall", [0, 0.2, 0.4], [0.05, 0.4, 0.4])])
        for step in (0.2, 0.1, 0.05, 0.025):
            if config_edge_collides(model, a, b, w, step=step):
                for finer in (step / 2, step / 4):
                    assert config_edge_collides(model, a, b, w, step=finer)
