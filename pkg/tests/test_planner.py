import numpy as np
import pytest

from mobman.geometry import WorldState, box
from mobman.planner import (
    Path,
    PlanarSpace,
    PlannerConfig,
    PlanningError,
    StackedEeSpace,
    Tree,
    birrt_extend,
    closest_pair,
    geom_optim,
    grad_dec_extend,
    node_adjustment,
    node_rejection,
    path_collision_free,
    plan,
    try_direct_connect,
)


def planar_world(obstacles=(), hull=0.0, span=5.0):
    return PlanarSpace(WorldState(tuple(obstacles),
                                  np.array([-span, -span, -1.0]),
                                  np.array([span, span, 3.0]),
                                  security_hull=hull))


def fence_around_origin():
    # thin walls boxing in the origin at +/-0.1
    walls = [
        box("n", [0.0, 0.1, 0.5], [0.12, 0.005, 0.5]),
        box("s", [0.0, -0.1, 0.5], [0.12, 0.005, 0.5]),
        box("e", [0.1, 0.0, 0.5], [0.005, 0.12, 0.5]),
        box("w", [-0.1, 0.0, 0.5], [0.005, 0.12, 0.5]),
    ]
    return planar_world(walls)


CFG = PlannerConfig(rrt_step=0.5, grad_step=0.5, dis_max=0.6, p_rbm=0.5,
                    adjust_step=0.05, max_iters=2000, seed=1)


class TestBirrtExtend:
    def test_step_clamping_in_free_space(self):
        space = planar_world()
        trees = (Tree([0.0, 0.0]), Tree([4.0, 4.0]))
        rng = np.random.default_rng(3)
        birrt_extend(trees, space, CFG, rng)
        for tree, root in zip(trees, ([0, 0], [4, 4])):
            if len(tree) > 1:
                d = np.linalg.norm(tree.nodes[1] - np.asarray(root, float))
                assert d <= CFG.rrt_step + 1e-12

    def test_blocked_extension_adds_nothing(self):
        space = fence_around_origin()
        trees = (Tree([0.0, 0.0]), Tree([4.0, 4.0]))
        rng = np.random.default_rng(5)
        for _ in range(20):
            birrt_extend(trees, space, CFG, rng)
        assert len(trees[0]) == 1  # fenced root cannot grow

    def test_deterministic_growth(self):
        space = planar_world([box("b", [2, 2, 0.4], [0.5, 0.5, 0.4])])
        grow = []
        for _ in range(2):
            trees = (Tree([0.0, 0.0]), Tree([4.0, 4.0]))
            rng = np.random.default_rng(11)
            for _ in range(30):
                birrt_extend(trees, space, CFG, rng)
            grow.append((trees[0].as_array().copy(), trees[1].as_array().copy()))
        assert np.array_equal(grow[0][0], grow[1][0])
        assert np.array_equal(grow[0][1], grow[1][1])


class TestGradDecExtend:
    def test_free_corridor_descends_until_threshold(self):
        space = planar_world()
        trees = (Tree([0.0, 0.0]), Tree([4.0, 0.0]))
        assert grad_dec_extend(trees, space, CFG)
        _, _, dist = closest_pair(trees)
        assert dist <= CFG.dis_max + 1e-9

    def test_wall_blocks_descent(self):
        wall = box("wall", [2.0, 0.0, 0.5], [0.05, 5.0, 0.5])
        space = planar_world([wall])
        trees = (Tree([1.8, 0.0]), Tree([2.2, 0.0]))
        before = closest_pair(trees)[2]
        grew = grad_dec_extend(trees, space, CFG)
        assert not grew
        assert closest_pair(trees)[2] == before
        assert len(trees[0]) == 1 and len(trees[1]) == 1


class TestDirectConnect:
    def test_line_of_sight_roots(self):
        space = planar_world()
        trees = (Tree([0.0, 0.0]), Tree([4.0, 4.0]))
        assert try_direct_connect(trees, space, CFG) == (0, 0)

    def test_separating_wall(self):
        wall = box("wall", [2.0, 0.0, 0.5], [0.05, 10.0, 0.5])
        space = planar_world([wall])
        trees = (Tree([0.0, 0.0]), Tree([4.0, 0.0]))
        assert try_direct_connect(trees, space, CFG) is None

    def test_connects_far_trees(self):
        # trees connect even while far apart, once any free pair exists
        space = planar_world()
        trees = (Tree([-4.0, -4.0]), Tree([4.0, 4.0]))
        bridge = try_direct_connect(trees, space, CFG)
        assert bridge is not None
        d = np.linalg.norm(np.array([-4.0, -4]) - np.array([4.0, 4]))
        assert d > CFG.dis_max  # far beyond the meeting threshold


class TestPlan:
    def test_free_space_straight_after_pruning(self):
        space = planar_world()
        res = plan([0.0, 0.0], [3.0, 1.0], space, CFG)
        pruned = geom_optim(res.path, space, CFG)
        assert len(pruned) == 2
        assert np.allclose(pruned.waypoints[0], [0, 0])
        assert np.allclose(pruned.waypoints[-1], [3, 1])

    def test_goal_in_collision_rejected(self):
        space = planar_world([box("b", [3, 1, 0.4], [0.4, 0.4, 0.4])])
        with pytest.raises(PlanningError, match="goal"):
            plan([0.0, 0.0], [3.0, 1.0], space, CFG)

    def test_endpoints_preserved_and_path_free(self):
        space = planar_world([box("b", [1.5, 0.0, 0.4], [0.4, 1.2, 0.4])])
        res = plan([0.0, 0.0], [3.0, 0.0], space, CFG)
        assert np.allclose(res.path.waypoints[0], [0, 0])
        assert np.allclose(res.path.waypoints[-1], [3, 0])
        assert path_collision_free(res.path, space)

    def test_deterministic_with_seed(self):
        space = planar_world([box("b", [1.5, 0.2, 0.4], [0.4, 1.0, 0.4])])
        a = plan([0.0, 0.0], [3.0, 0.0], space, CFG)
        b = plan([0.0, 0.0], [3.0, 0.0], space, CFG)
        assert np.array_equal(a.path.waypoints, b.path.waypoints)

    def test_pure_rrt_flag(self):
        cfg = PlannerConfig(rrt_step=0.5, grad_step=0.5, dis_max=0.6, p_rbm=1.0,
                            max_iters=4000, seed=4)
        space = planar_world([box("b", [1.5, 0.0, 0.4], [0.4, 1.2, 0.4])])
        res = plan([0.0, 0.0], [3.0, 0.0], space, cfg)
        assert res.n_grad_extends == 0

    def test_unreachable_goal_raises_with_budget(self):
        # goal boxed in by a fence; planner must give up at max_iters
        walls = [
            box("n", [3.0, 3.4, 0.5], [0.5, 0.05, 0.5]),
            box("s", [3.0, 2.6, 0.5], [0.5, 0.05, 0.5]),
            box("e", [3.4, 3.0, 0.5], [0.05, 0.5, 0.5]),
            box("w", [2.6, 3.0, 0.5], [0.05, 0.5, 0.5]),
        ]
        space = planar_world(walls)
        cfg = PlannerConfig(rrt_step=0.4, grad_step=0.4, dis_max=0.5,
                            max_iters=150, seed=2)
        with pytest.raises(PlanningError):
            plan([0.0, 0.0], [3.0, 3.0], space, cfg)


class TestNodeRejection:
    def test_collinear_waypoints_collapse(self):
        space = planar_world()
        path = Path(np.array([[0.0, 0], [1.0, 0], [2.0, 0]]))
        out = node_rejection(path, space)
        assert np.allclose(out.waypoints, [[0, 0], [2, 0]])

    def test_blocked_shortcut_preserved(self):
        wall = box("wall", [1.0, 0.5, 0.5], [0.05, 1.0, 0.5])
        space = planar_world([wall])
        path = Path(np.array([[0.0, 0.0], [1.0, -0.8], [2.0, 0.0]]))
        out = node_rejection(path, space)
        assert len(out) == 3

    def test_never_longer(self):
        rng = np.random.default_rng(8)
        space = planar_world([box("b", [1.5, 0.5, 0.4], [0.4, 0.6, 0.4])])
        for _ in range(20):
            pts = np.vstack([[0, -2.0], rng.uniform(-2, 3, (4, 2)), [3.0, 2.0]])
            path = Path(pts)
            if not path_collision_free(path, space):
                continue
            out = node_rejection(path, space)
            assert out.total_length <= path.total_length + 1e-9


class TestNodeAdjustment:
    def test_straight_path_fixed_point(self):
        space = planar_world()
        path = Path(np.array([[0.0, 0.0], [3.0, 1.0]]))
        out = node_adjustment(path, space, CFG)
        assert np.allclose(out.waypoints, path.waypoints)

    def test_shortens_dog_leg(self):
        space = planar_world()
        path = Path(np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 0.0]]))
        out = node_adjustment(path, space, CFG)
        assert out.total_length < path.total_length
        assert np.allclose(out.waypoints[0], [0, 0])
        assert np.allclose(out.waypoints[-1], [2, 0])

    def test_random_scenes_never_longer(self):
        rng = np.random.default_rng(13)
        for trial in range(25):
            obs = [box(f"b{i}", [rng.uniform(0.5, 2.5), rng.uniform(-1, 1), 0.4],
                       [0.3, 0.3, 0.4]) for i in range(2)]
            space = planar_world(obs)
            cfg = PlannerConfig(rrt_step=0.4, grad_step=0.4, dis_max=0.5,
                                max_iters=3000, seed=trial)
            try:
                res = plan([-1.0, -2.0], [3.0, 2.0], space, cfg)
            except PlanningError:
                continue
            pre = node_rejection(res.path, space)
            opt = node_adjustment(pre, space, cfg)
            assert pre.total_length <= res.path.total_length + 1e-9
            assert opt.total_length <= pre.total_length + 1e-9
            assert path_collision_free(opt, space)

    def test_geom_optim_idempotent_in_length(self):
        space = planar_world([box("b", [1.5, 0.0, 0.4], [0.4, 1.0, 0.4])])
        res = plan([0.0, 0.0], [3.0, 0.0], space, CFG)
        once = geom_optim(res.path, space, CFG)
        twice = geom_optim(once, space, CFG)
        assert twice.total_length <= once.total_length + 1e-9


class TestStackedEeSpace:
    def test_both_subsegments_checked(self):
        w = WorldState((box("b", [1.0, 0.0, 0.5], [0.2, 0.2, 0.2]),),
                       np.array([-2.0, -2, -1]), np.array([3.0, 2, 2]))
        space = StackedEeSpace(w)
        free = np.array([0.0, 0, 0.5, 0.0, 1, 0.5])
        right_hits = np.array([2.0, 0, 0.5, 0.0, 1, 0.5])   # right EE crosses box
        left_hits = np.array([0.0, 0, 0.5, 2.0, -1, 0.5])   # left EE crosses box
        assert space.edge_free(free, free)
        assert not space.edge_free(free, right_hits)
        assert not space.edge_free(free, left_hits)

    def test_plan_in_ee_space(self):
        w = WorldState((box("table", [1.5, 0.0, 0.3], [0.4, 0.5, 0.3]),),
                       np.array([-1.0, -2, -0.5]), np.array([4.0, 2, 2.0]))
        space = StackedEeSpace(w)
        start = np.array([0.0, -0.5, 0.1, 0.0, 0.5, 0.1])
        goal = np.array([3.0, -0.5, 0.1, 3.0, 0.5, 0.1])
        cfg = PlannerConfig(rrt_step=0.5, grad_step=0.5, dis_max=0.6,
                            max_iters=4000, seed=6)
        res = plan(start, goal, space, cfg)
        pruned = geom_optim(res.path, space, cfg)
        assert path_collision_free(pruned, space)
        assert np.allclose(pruned.waypoints[0], start)
        assert np.allclose(pruned.waypoints[-1], goal)
