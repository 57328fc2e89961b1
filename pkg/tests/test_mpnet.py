import math

import numpy as np
import pytest

import planning.mpnet.core as mpnet_core
from kinoplan.errors import InvalidInputError
from planning.costmap.core import Footprint, collision_free_mask, pad
from planning.geometry.core import Pose2D
from planning.mpnet.core import (
    DEFAULT_SAMPLE_COUNTS,
    PlannerConfig,
    PlannerStats,
    RRTStarReplanner,
    dynamic_mpnet,
    latency_samples,
    latency_table,
    neural_planner,
    plan_latency,
)
from planning.neuralnet.core import NetworkConfig, NetworkParams, RandomProposer
from planning.rrtstar.core import RRTStarConfig, anytime_replan

START = Pose2D.of(0.5, 2.0, 0.0)
GOAL = Pose2D.of(3.5, 2.0, 0.0)


class FixedProposer:
    """Always proposes the same normalized state."""

    def __init__(self, out, l=40):
        self.out = np.asarray(out, dtype=np.float64)
        self.l = l
        self.calls = 0

    def propose(self, current, goal, patch, rng):
        self.calls += 1
        return self.out


class GoalProposer:
    """Proposes the goal itself."""

    l = 40

    def propose(self, current, goal, patch, rng):
        return np.asarray(goal, dtype=np.float64)


class StepProposer:
    """Moves `step` (normalized) straight ahead along +x."""

    l = 40

    def __init__(self, step):
        self.step = step
        self.patch_shapes = []

    def propose(self, current, goal, patch, rng):
        assert current[0] == pytest.approx(0.0) and current[1] == pytest.approx(0.0)
        self.patch_shapes.append(patch.shape)
        return np.array([self.step, 0.0, 1.0, 0.0])


@pytest.fixture
def world(make_costmap):
    return make_costmap(40)


# ---- Neural planner ----
def test_goal_proposal_connects_in_one_iteration(world, model):
    stats = PlannerStats()
    traj = neural_planner(START, GOAL, pad(world), GoalProposer(), PlannerConfig(), model, stats=stats)
    assert traj is not None
    assert traj.start == START and traj.end == GOAL
    assert stats.neural_iterations == 1 and stats.goal_attempts == 1
    assert stats.transform_centers == [START]


def test_short_steer_cap_forces_intermediate_waypoints(world, model):
    cfg = PlannerConfig(steer_max_length=1.0)
    prop = StepProposer(0.2)
    stats = PlannerStats()
    traj = neural_planner(START, GOAL, pad(world), prop, cfg, model, stats=stats)
    assert traj is not None
    xs = [p.x for p in traj.waypoints()]
    assert xs == pytest.approx([0.5, 1.3, 2.1, 2.9, 3.5])
    assert traj.total_length == pytest.approx(3.0)
    assert stats.neural_iterations == 3
    # re-centered on every accepted intermediate pose, never cumulatively
    assert [round(c.x, 9) for c in stats.transform_centers] == [0.5, 1.3, 2.1]
    assert all(shape == (80, 80) for shape in prop.patch_shapes)


def test_out_of_window_proposals_fail_every_iteration(world, model):
    stats = PlannerStats()
    prop = FixedProposer([1.5, 0.0, 1.0, 0.0])
    cfg = PlannerConfig(max_steps_N=7)
    assert neural_planner(START, GOAL, pad(world), prop, cfg, model, stats=stats) is None
    assert prop.calls == 7 and stats.out_of_window == 7 and stats.goal_attempts == 0


def test_zero_heading_counts_as_failed_iteration(world, model):
    stats = PlannerStats()
    cfg = PlannerConfig(max_steps_N=4)
    prop = FixedProposer([0.1, 0.0, 0.0, 0.0])
    assert neural_planner(START, GOAL, pad(world), prop, cfg, model, stats=stats) is None
    assert stats.zero_norm == 4


def test_proposals_into_obstacles_fail_to_steer(make_costmap, model):
    # wall two cells thick across the map at x = 2.0
    cm = make_costmap(40, obstacles=[(ix, iy) for ix in (20, 21) for iy in range(40)])
    stats = PlannerStats()
    cfg = PlannerConfig(max_steps_N=3)
    assert neural_planner(START, GOAL, pad(cm), GoalProposer(), cfg, model, stats=stats) is None
    assert stats.failed_steers == 3


def test_start_in_collision_is_rejected(make_costmap, model):
    cm = make_costmap(40, obstacles=[(5, 20)])
    with pytest.raises(InvalidInputError):
        neural_planner(START, GOAL, pad(cm), GoalProposer(), PlannerConfig(), model)


def test_network_params_act_as_proposer(make_costmap, model):
    cm = make_costmap(10)
    net = NetworkParams.initialize(10, NetworkConfig(hidden_widths=[8, 8, 8, 8, 8], init_seed=1))
    stats = PlannerStats()
    cfg = PlannerConfig(max_steps_N=5, inference_dropout=False)
    traj = neural_planner(
        Pose2D.of(0.5, 0.5, 0.0), Pose2D.of(0.7, 0.5, 0.0), pad(cm), net, cfg, model,
        rng=np.random.default_rng(0), stats=stats,
    )
    assert stats.neural_iterations <= 5
    if traj is not None:
        assert np.all(collision_free_mask(cm, traj.as_array()[:, :2], cfg.footprint))


def test_random_proposer_plans_are_collision_free(make_costmap, model):
    cm = make_costmap(40, obstacles=[(20, iy) for iy in range(10, 30)])
    cfg = PlannerConfig(max_steps_N=50)
    rng = np.random.default_rng(3)
    for _ in range(3):
        traj = neural_planner(START, GOAL, pad(cm), RandomProposer(40), cfg, model, rng=rng)
        if traj is None:
            continue
        assert traj.start == START and traj.end == GOAL
        assert np.all(collision_free_mask(cm, traj.as_array()[:, :2], Footprint()))


# ---- Dynamic planner ----
def test_dynamic_uses_neural_result_first(world, model):
    replanner = RRTStarReplanner(model, RRTStarConfig(max_iterations=50))
    stats = PlannerStats()
    traj = dynamic_mpnet(START, GOAL, world, GoalProposer(), replanner, PlannerConfig(), model, stats=stats)
    assert traj is not None
    assert replanner.call_count == 0
    assert stats.neural_calls == 1 and stats.neural_successes == 1 and stats.replanner_calls == 0


def test_dynamic_falls_back_to_rrt(world, model):
    replanner = RRTStarReplanner(model, RRTStarConfig(max_iterations=400, rng_seed=0))
    stats = PlannerStats()
    cfg = PlannerConfig(max_steps_N=3)
    traj = dynamic_mpnet(START, GOAL, world, FixedProposer([0, 0, 0, 0]), replanner, cfg, model, stats=stats)
    assert replanner.call_count == 1
    assert stats.replanner_calls == 1
    assert traj is not None and stats.replanner_successes == 1
    assert traj.start == START
    assert traj.end.within(GOAL, replanner.config.goal_pos_tol, replanner.config.goal_ang_tol)
    # the same problem again answers from the kept tree without growing it
    tree = replanner.tree
    iterations = tree.iterations_run
    again = dynamic_mpnet(START, GOAL, world, FixedProposer([0, 0, 0, 0]), replanner, cfg, model, stats=stats)
    assert replanner.tree is tree and replanner.call_count == 2
    assert tree.iterations_run == iterations
    assert np.array_equal(again.as_array(), traj.as_array())


def test_dynamic_without_replanner_returns_none(world, model):
    cfg = PlannerConfig(max_steps_N=2)
    assert dynamic_mpnet(START, GOAL, world, FixedProposer([0, 0, 0, 0]), None, cfg, model) is None


def test_failed_neural_planner_matches_plain_rrt(world, model):
    rrt_cfg = RRTStarConfig(max_iterations=400, rng_seed=0)
    replanner = RRTStarReplanner(model, rrt_cfg)
    cfg = PlannerConfig(max_steps_N=3)
    fallback = dynamic_mpnet(START, GOAL, world, FixedProposer([0, 0, 0, 0]), replanner, cfg, model)
    direct = anytime_replan(START, GOAL, world, model, rrt_cfg)
    assert fallback is not None and direct is not None
    assert np.array_equal(fallback.as_array(), direct.as_array())


@pytest.mark.slow
def test_broken_network_still_solves_with_fallback(make_costmap, model):
    # 0.4 m block in the middle of an otherwise open 4 m map
    cm = make_costmap(40, obstacles=[(ix, iy) for ix in range(18, 22) for iy in range(18, 22)])
    cfg = PlannerConfig(max_steps_N=3)
    solved = 0
    for k in range(50):
        rng = np.random.default_rng(k)
        start = Pose2D.of(rng.uniform(0.4, 0.8), rng.uniform(0.8, 3.2), rng.uniform(-0.5, 0.5))
        goal = Pose2D.of(rng.uniform(3.2, 3.6), rng.uniform(0.8, 3.2), rng.uniform(-0.5, 0.5))
        replanner = RRTStarReplanner(model, RRTStarConfig(max_iterations=1500, rng_seed=k))
        traj = dynamic_mpnet(start, goal, cm, FixedProposer([0, 0, 0, 0]), replanner, cfg, model)
        if traj is not None:
            assert np.all(collision_free_mask(cm, traj.as_array()[:, :2], replanner.config.footprint))
            solved += 1
    assert solved >= 48


# ---- Latency ----
def test_latency_samples_and_table(world, model):
    padded = pad(world)
    samples = latency_samples(RandomProposer(40), padded, PlannerConfig(), 5, model, runs=3)
    assert len(samples) == 3 and all(s >= 0.0 for s in samples)
    assert plan_latency(RandomProposer(40), padded, PlannerConfig(), 5, model, runs=3) >= 0.0
    table = latency_table(RandomProposer(40), padded, PlannerConfig(), model=model, runs=2)
    assert sorted(table) == sorted(DEFAULT_SAMPLE_COUNTS)
    with pytest.raises(InvalidInputError):
        latency_samples(RandomProposer(40), padded, PlannerConfig(), 0, model)


def test_latency_sample_count_defaults_to_sample_resolution(world, model, monkeypatch):
    seen = []

    def fake_timed(proposer, padded, x_from, x_goal, n, config, model, rng):
        seen.append(n)
        return float(n)

    monkeypatch.setattr(mpnet_core, "_timed_iterations", fake_timed)
    padded = pad(world)
    cfg = PlannerConfig(sample_resolution=7)
    assert latency_samples(RandomProposer(40), padded, cfg, model=model, runs=2) == [7.0, 7.0]
    assert plan_latency(RandomProposer(40), padded, cfg, model=model, runs=1) == 7.0
    assert latency_samples(RandomProposer(40), padded, cfg, 3, model, runs=1) == [3.0]
    assert seen == [7, 7, 7, 3]


@pytest.mark.slow
def test_latency_grows_with_sample_count(world, model):
    padded = pad(world)
    few = plan_latency(RandomProposer(40), padded, PlannerConfig(), 5, model, runs=15)
    many = plan_latency(RandomProposer(40), padded, PlannerConfig(), 50, model, runs=15)
    assert many > few


def test_planner_config_validation():
    with pytest.raises(ValueError):
        PlannerConfig(max_steps_N=0)
    with pytest.raises(ValueError):
        PlannerConfig(goal_ang_tol=-1.0)
    assert PlannerConfig().goal_ang_tol == pytest.approx(math.radians(15.0))
