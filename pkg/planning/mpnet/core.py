# planning/mpnet/core.py
"""
Neural roll-out planner with Dubins steering, and the dynamic planner that
falls back to an anytime RRT* when the roll-out fails.

The network sees the padded costmap re-centered on the current pose, the
current pose (always at the origin) and the goal in that same frame.
"""
from __future__ import annotations

import math
import time
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator

from kinoplan.errors import InvalidInputError
from kinoplan.log import get_logger
from planning.costmap.core import (
    Costmap,
    Footprint,
    PaddedCostmap,
    default_steer_cap,
    is_collision_free,
    pad,
    steer,
    transform_egocentric,
)
from planning.dataset.core import decode_state, encode_state
from planning.geometry.core import Pose2D, Trajectory, VehicleModel
from planning.neuralnet.core import MPNetModel, NetworkParams, Proposer
from planning.rrtstar.core import RRTStarConfig, RRTStarPlanner, anytime_replan

_logger = get_logger("kinoplan.mpnet")

DEFAULT_SAMPLE_COUNTS = (5, 10, 25, 50)
# reference per-plan milliseconds for 5 / 10 / 25 / 50 samples, printed beside measured ones
REFERENCE_LATENCY_MS: Dict[int, float] = {5: 11.33, 10: 15.29, 25: 22.07, 50: 44.67}


class PlannerConfig(BaseModel):
    max_steps_N: int = 50
    sample_resolution: int = 50
    goal_pos_tol: float = 0.2
    goal_ang_tol: float = math.radians(15.0)
    steer_step: float = 0.05
    steer_max_length: Optional[float] = None
    inference_dropout: bool = True
    rng_seed: int = 0
    footprint: Footprint = Field(default_factory=Footprint)

    model_config = {"extra": "ignore"}

    @model_validator(mode="after")
    def _check(self) -> "PlannerConfig":
        if self.max_steps_N < 1 or self.sample_resolution < 1:
            raise ValueError("max_steps_N and sample_resolution must be >= 1")
        if self.goal_pos_tol <= 0 or self.goal_ang_tol <= 0:
            raise ValueError("goal tolerances must be > 0")
        return self


class PlannerStats(BaseModel):
    neural_calls: int = 0
    neural_successes: int = 0
    neural_iterations: int = 0
    failed_steers: int = 0
    out_of_window: int = 0
    zero_norm: int = 0
    goal_attempts: int = 0
    replanner_calls: int = 0
    replanner_successes: int = 0
    transform_centers: List[Pose2D] = Field(default_factory=list)


def as_proposer(net: Union[Proposer, NetworkParams], config: PlannerConfig) -> Proposer:
    if isinstance(net, NetworkParams):
        if net.inference_dropout != config.inference_dropout:
            net = net.model_copy(update={"inference_dropout": config.inference_dropout})
        return MPNetModel(net)
    return net


def _steer_cap(padded: PaddedCostmap, config: PlannerConfig) -> float:
    return config.steer_max_length or default_steer_cap(padded.size_l, padded.resolution)


def propose_pose(
    proposer: Proposer, x_from: Pose2D, x_goal: Pose2D, padded: PaddedCostmap, rng: np.random.Generator,
    stats: PlannerStats,
) -> Optional[Pose2D]:
    """One network sample decoded to the world frame, or None when unusable."""
    half = padded.half_extent
    out = proposer.propose(
        encode_state(x_from, x_from, half), encode_state(x_goal, x_from, half), padded.normalized(), rng,
    )
    norm = math.hypot(float(out[2]), float(out[3]))
    if not (np.all(np.isfinite(out)) and norm > 1e-9):
        stats.zero_norm += 1
        return None
    if abs(out[0]) > 1.0 or abs(out[1]) > 1.0:
        stats.out_of_window += 1
        return None
    x_temp = decode_state((out[0], out[1], out[2] / norm, out[3] / norm), x_from, half)
    if not padded.source.contains(x_temp.x, x_temp.y):
        stats.out_of_window += 1
        return None
    return x_temp


def neural_planner(
    x_from: Pose2D,
    x_goal: Pose2D,
    padded: PaddedCostmap,
    net: Union[Proposer, NetworkParams],
    config: PlannerConfig,
    model: VehicleModel,
    rng: Optional[np.random.Generator] = None,
    stats: Optional[PlannerStats] = None,
) -> Optional[Trajectory]:
    """
    Iterative roll-out: propose x_temp, steer to it, try to close to the goal
    with an exact steer, otherwise advance and re-center the costmap. Returns
    None after max_steps_N iterations without a goal connection.
    """
    stats = stats if stats is not None else PlannerStats()
    rng = rng if rng is not None else np.random.default_rng(config.rng_seed)
    source = padded.source
    if not is_collision_free(source, x_from, config.footprint):
        raise InvalidInputError("neural planner start pose is in collision")
    proposer = as_proposer(net, config)
    cap = _steer_cap(padded, config)

    c_hat = transform_egocentric(padded, x_from)
    stats.transform_centers.append(c_hat.center)
    tau: Optional[Trajectory] = None
    for _ in range(config.max_steps_N):
        stats.neural_iterations += 1
        x_temp = propose_pose(proposer, x_from, x_goal, c_hat, rng, stats)
        if x_temp is None:
            continue
        tau_temp = steer(x_from, x_temp, source, model, cap, config.steer_step, config.footprint)
        if tau_temp is None:
            stats.failed_steers += 1
            continue
        tau = tau_temp if tau is None else tau.concat(tau_temp)
        stats.goal_attempts += 1
        tau_goal = steer(x_temp, x_goal, source, model, cap, config.steer_step, config.footprint)
        if tau_goal is not None:
            return tau.concat(tau_goal)
        x_from = x_temp
        c_hat = transform_egocentric(c_hat, x_from)
        stats.transform_centers.append(c_hat.center)
    return None


class RRTStarReplanner:
    """Anytime RRT* fallback that keeps its tree while start, goal and map stay the same."""

    def __init__(self, model: VehicleModel, config: RRTStarConfig):
        self.model = model
        self.config = config
        self.tree: Optional[RRTStarPlanner] = None
        self.call_count = 0

    def replan(self, start: Pose2D, goal: Pose2D, costmap: Costmap) -> Optional[Trajectory]:
        self.call_count += 1
        if self.tree is None:
            self.tree = RRTStarPlanner(start, goal, costmap, self.model, self.config)
        return anytime_replan(start, goal, costmap, self.model, self.config, warm_tree=self.tree)


def dynamic_mpnet(
    x_start: Pose2D,
    x_goal: Pose2D,
    costmap: Costmap,
    net: Union[Proposer, NetworkParams],
    replanner: Optional[RRTStarReplanner],
    config: PlannerConfig,
    model: VehicleModel,
    rng: Optional[np.random.Generator] = None,
    stats: Optional[PlannerStats] = None,
) -> Optional[Trajectory]:
    stats = stats if stats is not None else PlannerStats()
    stats.neural_calls += 1
    tau = neural_planner(x_start, x_goal, pad(costmap), net, config, model, rng, stats)
    if tau is not None:
        stats.neural_successes += 1
        return tau
    if replanner is None:
        return None
    stats.replanner_calls += 1
    _logger.debug("neural planner failed, invoking RRT* replanner")
    tau = replanner.replan(x_start, x_goal, costmap)
    if tau is not None:
        stats.replanner_successes += 1
    return tau


# ---- Latency ----
def _timed_iterations(
    proposer: Proposer, padded: PaddedCostmap, x_from: Pose2D, x_goal: Pose2D, n: int,
    config: PlannerConfig, model: VehicleModel, rng: np.random.Generator,
) -> float:
    stats = PlannerStats()
    cap = _steer_cap(padded, config)
    c_hat = transform_egocentric(padded, x_from)
    t0 = time.perf_counter()
    for _ in range(n):
        x_temp = propose_pose(proposer, x_from, x_goal, c_hat, rng, stats)
        if x_temp is not None:
            steer(x_from, x_temp, padded.source, model, cap, config.steer_step, config.footprint)
    return (time.perf_counter() - t0) * 1000.0


def latency_samples(
    net: Union[Proposer, NetworkParams],
    padded: PaddedCostmap,
    config: PlannerConfig,
    n_samples: Optional[int] = None,
    model: Optional[VehicleModel] = None,
    runs: int = 30,
    goal: Optional[Pose2D] = None,
) -> List[float]:
    """
    Wall-clock milliseconds of `runs` repetitions of n_samples network + steer
    iterations; n_samples defaults to config.sample_resolution.
    """
    if n_samples is None:
        n_samples = config.sample_resolution
    if n_samples < 1 or runs < 1:
        raise InvalidInputError("n_samples and runs must be >= 1")
    model = model or VehicleModel()
    proposer = as_proposer(net, config)
    x_from = padded.center
    x_goal = goal or Pose2D.of(x_from.x + 0.5 * padded.half_extent, x_from.y, 0.0)
    rng = np.random.default_rng(config.rng_seed)
    return [
        _timed_iterations(proposer, padded, x_from, x_goal, n_samples, config, model, rng)
        for _ in range(runs)
    ]


def plan_latency(
    net: Union[Proposer, NetworkParams],
    padded: PaddedCostmap,
    config: PlannerConfig,
    n_samples: Optional[int] = None,
    model: Optional[VehicleModel] = None,
    runs: int = 30,
    goal: Optional[Pose2D] = None,
) -> float:
    """Median wall-clock milliseconds for n_samples network + steer iterations."""
    return float(np.median(latency_samples(net, padded, config, n_samples, model, runs, goal)))


def latency_table(
    net: Union[Proposer, NetworkParams],
    padded: PaddedCostmap,
    config: PlannerConfig,
    sample_counts: Sequence[int] = DEFAULT_SAMPLE_COUNTS,
    model: Optional[VehicleModel] = None,
    runs: int = 30,
) -> Dict[int, float]:
    table = {n: plan_latency(net, padded, config, n, model, runs) for n in sample_counts}
    for n, ms in table.items():
        _logger.info("latency n_samples=%d median %.2f ms", n, ms)
    return table
