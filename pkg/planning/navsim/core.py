# planning/navsim/core.py
"""
Hierarchical navigation episodes: global grid plan -> sub-goal -> local
planner -> NMPC tracking, stepped in simulated time at 5 Hz.

The plan computed in cycle k is executed from cycle k + 1, planned from the
pose the vehicle is predicted to reach at the end of cycle k. Without a plan
the vehicle holds its position.
"""
from __future__ import annotations

import math
import time
from typing import List, Optional, Protocol, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field

from kinoplan.errors import CorridorExitError, InvalidInputError, NoPathError
from kinoplan.log import get_logger
from planning.costmap.core import Costmap, Footprint, crop_window, is_collision_free
from planning.dataset.core import derive_seed
from planning.geometry.core import Pose2D, Trajectory, VehicleModel
from planning.mpnet.core import PlannerConfig, PlannerStats, RRTStarReplanner, dynamic_mpnet
from planning.navsim.global_planner import GlobalPath, global_plan, select_subgoal
from planning.navsim.gridworld import WorldMap, random_free_pose
from planning.neuralnet.core import NetworkParams, Proposer, RandomProposer
from planning.nmpc.core import NMPCConfig, NMPCTracker, apply_control
from planning.rrtstar.core import RRTStarConfig, RRTStarPlanner, anytime_replan

_logger = get_logger("kinoplan.navsim")

PLANNER_KINDS = ("mpnet", "rrt_only")


# ---- Models ----
class NavSimConfig(BaseModel):
    cycle_dt: float = 0.2
    sim_dt: float = 0.02
    window_l: int = 40
    rrt_iterations_per_cycle: int = 300
    step_cap_factor: float = 4.0
    min_cycles: int = 10
    goal_pos_tol: float = 0.2
    goal_ang_tol: float = math.radians(15.0)
    footprint: Footprint = Field(default_factory=Footprint)
    workers: int = 1

    model_config = {"extra": "ignore"}


class NavTask(BaseModel):
    task_id: int = 0
    map_id: str
    map_path: Optional[str] = None
    start: Pose2D
    goal: Pose2D
    seed: int = 0


class EpisodeResult(BaseModel):
    task_id: int
    planner: str
    success: bool
    total_distance: float = 0.0
    total_time: float = 0.0
    replanner_invocations: int = 0
    global_replans: int = 0
    cycles: int = 0
    cycle_ms: List[float] = Field(default_factory=list)
    failure_reason: Optional[str] = None
    final_pose: Pose2D
    trace: List[Tuple[float, float, float]] = Field(default_factory=list)

    @property
    def mean_cycle_ms(self) -> float:
        return float(np.mean(self.cycle_ms)) if self.cycle_ms else 0.0


# ---- Local planners ----
class LocalPlanner(Protocol):
    name: str

    @property
    def replanner_invocations(self) -> int:
        ...

    def plan(self, start: Pose2D, goal: Pose2D, costmap: Costmap, rng: np.random.Generator) -> Optional[Trajectory]:
        ...


class MPNetLocalPlanner:
    """Neural roll-out with the RRT* fallback, one dynamic_mpnet call per cycle."""

    name = "mpnet"

    def __init__(self, net: Union[Proposer, NetworkParams], config: PlannerConfig, rrt: RRTStarConfig, model: VehicleModel):
        self.net = net
        self.config = config
        self.model = model
        self.rrt = rrt
        self.replanner = RRTStarReplanner(model, rrt)
        self.stats = PlannerStats()

    @property
    def replanner_invocations(self) -> int:
        return self.replanner.call_count

    def plan(self, start: Pose2D, goal: Pose2D, costmap: Costmap, rng: np.random.Generator) -> Optional[Trajectory]:
        self.replanner.config = self.rrt.model_copy(update={"rng_seed": int(rng.integers(2 ** 63))})
        return dynamic_mpnet(start, goal, costmap, self.net, self.replanner, self.config, self.model, rng, self.stats)


class RRTOnlyLocalPlanner:
    """Anytime RRT* baseline with the same per-cycle iteration budget."""

    name = "rrt_only"

    def __init__(self, rrt: RRTStarConfig, model: VehicleModel):
        self.rrt = rrt
        self.model = model
        self.tree: Optional[RRTStarPlanner] = None
        self.calls = 0

    @property
    def replanner_invocations(self) -> int:
        return self.calls

    def plan(self, start: Pose2D, goal: Pose2D, costmap: Costmap, rng: np.random.Generator) -> Optional[Trajectory]:
        self.calls += 1
        config = self.rrt.model_copy(update={"rng_seed": int(rng.integers(2 ** 63))})
        if self.tree is None:
            self.tree = RRTStarPlanner(start, goal, costmap, self.model, config)
        return anytime_replan(start, goal, costmap, self.model, config, warm_tree=self.tree)


def make_local_planner(
    kind: str,
    net: Union[Proposer, NetworkParams, None],
    planner: PlannerConfig,
    rrt: RRTStarConfig,
    model: VehicleModel,
    window_l: int = 40,
) -> LocalPlanner:
    if kind == "mpnet":
        return MPNetLocalPlanner(net if net is not None else RandomProposer(window_l), planner, rrt, model)
    if kind == "rrt_only":
        return RRTOnlyLocalPlanner(rrt, model)
    raise InvalidInputError(f"unknown planner kind '{kind}', expected one of {PLANNER_KINDS}")


# ---- Tasks ----
def generate_tasks(
    world: WorldMap,
    n: int,
    seed: int,
    min_distance: float = 2.0,
    footprint: Optional[Footprint] = None,
    attempts: int = 200,
) -> List[NavTask]:
    """Random start/goal pairs with a verified global path between them."""
    footprint = footprint or Footprint()
    rng = np.random.default_rng(seed)
    tasks: List[NavTask] = []
    for _ in range(n * attempts):
        if len(tasks) == n:
            break
        start = random_free_pose(world, rng, footprint)
        goal = random_free_pose(world, rng, footprint)
        if start is None or goal is None or start.distance_to(goal) < min_distance:
            continue
        try:
            global_plan(world, start, goal, footprint)
        except NoPathError:
            continue
        tasks.append(NavTask(
            task_id=len(tasks), map_id=world.map_id, map_path=world.source_path,
            start=start, goal=goal, seed=derive_seed(seed, len(tasks)) % (2 ** 31),
        ))
    if len(tasks) < n:
        _logger.warning("generated only %d of %d tasks on %s", len(tasks), n, world.map_id)
    return tasks


# ---- Episode ----
def _predicted_start(pose: Pose2D, tracker: NMPCTracker, active: bool, distance: float, world: Costmap, fp: Footprint) -> Pose2D:
    if not active:
        return pose
    cand = tracker.lookahead(pose, distance)
    return cand if is_collision_free(world, cand, fp) else pose


def _plan_safely(planner: LocalPlanner, start: Pose2D, goal: Pose2D, local: Costmap, rng: np.random.Generator) -> Optional[Trajectory]:
    try:
        return planner.plan(start, goal, local, rng)
    except InvalidInputError as e:
        _logger.debug("local planner rejected the cycle: %s", e)
        return None


def run_episode(
    task: NavTask,
    world: WorldMap,
    local_planner: Union[LocalPlanner, str],
    nav: NavSimConfig,
    nmpc: NMPCConfig,
    model: VehicleModel,
    net: Union[Proposer, NetworkParams, None] = None,
    planner: Optional[PlannerConfig] = None,
    rrt: Optional[RRTStarConfig] = None,
) -> EpisodeResult:
    """
    One navigation episode in simulated time. Failures (no global path,
    collision, step cap) come back as an unsuccessful result, never raised.
    """
    if isinstance(local_planner, str):
        rrt_cfg = (rrt or RRTStarConfig()).model_copy(update={"max_iterations": nav.rrt_iterations_per_cycle})
        local_planner = make_local_planner(local_planner, net, planner or PlannerConfig(), rrt_cfg, model, nav.window_l)
    name = local_planner.name
    sim_model = model.model_copy(update={"speed_vs": nmpc.v_s})
    costmap = world.costmap
    pose = task.start
    result = EpisodeResult(task_id=task.task_id, planner=name, success=False, final_pose=pose, trace=[(pose.x, pose.y, pose.theta)])

    def finish(success: bool, reason: Optional[str] = None) -> EpisodeResult:
        result.success = success
        result.failure_reason = reason
        result.final_pose = pose
        result.replanner_invocations = local_planner.replanner_invocations
        return result

    if pose.within(task.goal, nav.goal_pos_tol, nav.goal_ang_tol):
        return finish(True)
    try:
        gpath: GlobalPath = global_plan(world, task.start, task.goal, nav.footprint)
    except NoPathError as e:
        _logger.info("task %d: %s", task.task_id, e)
        return finish(False, "no_global_path")

    half = 0.5 * nav.window_l * costmap.resolution
    n_ctrl = max(1, int(round(nav.cycle_dt / nmpc.dt)))
    step_dist = nmpc.v_s * nmpc.dt
    max_cycles = max(nav.min_cycles, int(math.ceil(nav.step_cap_factor * gpath.length / step_dist)))
    tracker = NMPCTracker(nmpc, sim_model)
    active = False

    for cycle in range(max_cycles):
        result.cycles = cycle + 1
        plan_from = _predicted_start(pose, tracker, active, nav.cycle_dt * nmpc.v_s, costmap, nav.footprint)
        try:
            subgoal = select_subgoal(gpath, plan_from, half, costmap, nav.footprint)
        except CorridorExitError:
            result.global_replans += 1
            try:
                gpath = global_plan(world, plan_from, task.goal, nav.footprint)
                subgoal = select_subgoal(gpath, plan_from, half, costmap, nav.footprint)
            except (NoPathError, CorridorExitError):
                return finish(False, "no_global_path")
        local = crop_window(costmap, plan_from, nav.window_l)
        t0 = time.perf_counter()
        pending = _plan_safely(local_planner, plan_from, subgoal, local, np.random.default_rng(derive_seed(task.seed, cycle)))
        result.cycle_ms.append((time.perf_counter() - t0) * 1000.0)

        for _ in range(n_ctrl):
            result.total_time += nmpc.dt
            if not active:
                continue
            sol = tracker.control(pose)
            pose = apply_control(pose, sim_model, sol.first_phi, nmpc.dt, nav.sim_dt)
            result.total_distance += step_dist
            result.trace.append((pose.x, pose.y, pose.theta))
            if not is_collision_free(costmap, pose, nav.footprint):
                return finish(False, "collision")
            if pose.within(task.goal, nav.goal_pos_tol, nav.goal_ang_tol):
                return finish(True)
            if tracker.finished:
                active = False

        if pending is not None and pending.total_length > 1e-9:
            tracker.set_reference(pending)
            active = True
    return finish(False, "step_cap")
