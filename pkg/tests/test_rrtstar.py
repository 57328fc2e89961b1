import math

import numpy as np
import pytest

from kinoplan.errors import InvalidInputError
from planning.costmap.core import collision_free_mask
from planning.geometry.core import Pose2D, dubins_shortest
from planning.rrtstar.core import RRTStarConfig, RRTStarPlanner, anytime_replan, plan_rrtstar

START = Pose2D.of(1.0, 2.0, 0.0)
GOAL = Pose2D.of(3.0, 2.0, 0.0)


@pytest.fixture
def open_map(make_costmap):
    return make_costmap(20, resolution=0.2)


@pytest.fixture
def cfg():
    return RRTStarConfig(max_iterations=600, rng_seed=3)


def test_finds_collision_free_path_to_goal(open_map, model, cfg):
    traj = plan_rrtstar(START, GOAL, open_map, model, cfg)
    assert traj is not None
    assert traj.start == START
    assert traj.end.within(GOAL, cfg.goal_pos_tol, cfg.goal_ang_tol)
    assert np.all(collision_free_mask(open_map, traj.as_array()[:, :2], cfg.footprint))
    assert traj.total_length >= START.distance_to(traj.end) - 1e-9


def test_costs_are_consistent_with_edges(open_map, model, cfg):
    planner = RRTStarPlanner(START, GOAL, open_map, model, cfg)
    planner.grow(300)
    nodes = planner.nodes()
    assert nodes[0].parent is None and nodes[0].cost_from_root == 0.0
    for node in nodes[1:]:
        parent = nodes[node.parent]
        edge = dubins_shortest(parent.pose, node.pose, model.rho).length
        assert node.cost_from_root == pytest.approx(parent.cost_from_root + edge, abs=1e-9)


def test_best_cost_never_increases(open_map, model, cfg):
    planner = RRTStarPlanner(START, GOAL, open_map, model, cfg)
    costs = []
    for _ in range(6):
        planner.grow(100)
        costs.append(planner.best_cost())
    found = [c for c in costs if c is not None]
    assert found, "no solution after 600 iterations"
    assert all(b <= a + 1e-12 for a, b in zip(found, found[1:]))
    # once found, a solution is never lost
    first = costs.index(found[0])
    assert all(c is not None for c in costs[first:])


def test_same_seed_same_tree(open_map, model, cfg):
    a = RRTStarPlanner(START, GOAL, open_map, model, cfg)
    b = RRTStarPlanner(START, GOAL, open_map, model, cfg)
    a.grow(150)
    b.grow(150)
    assert a.nodes() == b.nodes()


def test_start_in_collision_is_rejected(make_costmap, model, cfg):
    cm = make_costmap(20, resolution=0.2, obstacles=[(5, 10)])
    with pytest.raises(InvalidInputError):
        RRTStarPlanner(START, GOAL, cm, model, cfg)


def test_wall_blocks_every_path(make_costmap, model):
    cm = make_costmap(20, resolution=0.2, obstacles=[(10, iy) for iy in range(20)])
    assert plan_rrtstar(START, GOAL, cm, model, RRTStarConfig(max_iterations=200, rng_seed=1)) is None


def test_start_at_goal_returns_zero_length(open_map, model, cfg):
    traj = plan_rrtstar(START, START, open_map, model, cfg.model_copy(update={"max_iterations": 0}))
    assert traj is not None
    assert traj.total_length == 0.0


def test_time_budget_stops_growth(open_map, model, cfg):
    planner = RRTStarPlanner(START, GOAL, open_map, model, cfg)
    assert planner.grow(10_000, time_budget_ms=0.0) == 0
    assert planner.iterations_run == 0


def test_anytime_replan_reuses_and_resets_tree(open_map, model, cfg):
    tree = RRTStarPlanner(START, GOAL, open_map, model, cfg)
    first = anytime_replan(START, GOAL, open_map, model, cfg, warm_tree=tree)
    assert first is not None
    n_before = tree.n
    # a zero budget keeps the solution already held
    zero = cfg.model_copy(update={"max_iterations": 0})
    again = anytime_replan(START, GOAL, open_map, model, zero, warm_tree=tree)
    assert again is not None and tree.n == n_before
    assert again.total_length == pytest.approx(first.total_length)

    other_goal = Pose2D.of(2.0, 3.0, math.pi / 2)
    anytime_replan(START, other_goal, open_map, model, zero, warm_tree=tree)
    assert tree.goal == other_goal and tree.n == 1


def test_solved_warm_tree_returns_without_growing(open_map, model, cfg):
    tree = RRTStarPlanner(START, GOAL, open_map, model, cfg)
    first = anytime_replan(START, GOAL, open_map, model, cfg, warm_tree=tree)
    assert first is not None
    iterations, n_before = tree.iterations_run, tree.n
    again = anytime_replan(START, GOAL, open_map, model, cfg, warm_tree=tree)
    assert tree.iterations_run == iterations and tree.n == n_before
    assert np.array_equal(again.as_array(), first.as_array())


def test_refine_grows_solved_tree_without_worsening(open_map, model, cfg):
    tree = RRTStarPlanner(START, GOAL, open_map, model, cfg)
    anytime_replan(START, GOAL, open_map, model, cfg, warm_tree=tree)
    iterations, cost = tree.iterations_run, tree.best_cost()
    refined = anytime_replan(START, GOAL, open_map, model, cfg, warm_tree=tree, refine=True)
    assert refined is not None
    assert tree.iterations_run == iterations + cfg.max_iterations
    assert tree.best_cost() <= cost + 1e-9


def test_invalid_config_is_rejected():
    with pytest.raises(ValueError):
        RRTStarConfig(goal_bias=1.5)
    with pytest.raises(ValueError):
        RRTStarConfig(goal_pos_tol=0.0)
