# planning/rrtstar/core.py
"""
Dubins-steered RRT* on a costmap.

Used as the expert oracle for dataset collection and as the anytime
fallback of the neural planner. Nearest / near queries use the Dubins
shortest-path length as the distance, evaluated by linear scan.
"""
from __future__ import annotations

import math
import time
from collections import deque
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator

from kinoplan.errors import InvalidInputError
from kinoplan.log import get_logger
from planning.costmap.core import Costmap, Footprint, collision_free_mask
from planning.geometry.core import (
    DubinsPath,
    Pose2D,
    Trajectory,
    VehicleModel,
    dubins_shortest,
    pose_at,
    sample_dubins_array,
)
from planning.geometry.helpers import dubins_lengths

_logger = get_logger("kinoplan.rrtstar")


# ---- Models ----
class RRTStarConfig(BaseModel):
    max_iterations: int = 2000
    time_budget_ms: Optional[float] = None
    goal_bias: float = 0.1
    rewire_radius: float = 2.0
    max_edge_length: float = 1.0
    goal_pos_tol: float = 0.2
    goal_ang_tol: float = math.radians(15.0)
    steer_step: float = 0.05
    rng_seed: int = 0
    footprint: Footprint = Field(default_factory=Footprint)

    model_config = {"extra": "ignore"}

    @model_validator(mode="after")
    def _check(self) -> "RRTStarConfig":
        if not 0.0 <= self.goal_bias <= 1.0:
            raise ValueError("goal_bias must lie in [0, 1]")
        if self.goal_pos_tol <= 0 or self.goal_ang_tol <= 0:
            raise ValueError("goal tolerances must be > 0")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        return self


class TreeNode(BaseModel):
    pose: Pose2D
    parent: Optional[int] = None
    cost_from_root: float = 0.0


# ---- Planner ----
class RRTStarPlanner:
    """
    Owns one tree rooted at `start`. grow() may be called repeatedly; the
    best goal cost never increases between calls.
    """

    def __init__(self, start: Pose2D, goal: Pose2D, costmap: Costmap, model: VehicleModel, config: RRTStarConfig):
        self.model = model
        self.config = config
        self.reset(start, goal, costmap)

    def reset(self, start: Pose2D, goal: Pose2D, costmap: Costmap) -> None:
        if not self._edge_samples_free(start.as_array()[None, :], costmap):
            raise InvalidInputError("RRT* start pose is in collision")
        self.start = start
        self.goal = goal
        self.costmap = costmap
        self.rng = np.random.default_rng(self.config.rng_seed)
        self._free = costmap.free_cells()
        cap = 256
        self._poses = np.zeros((cap, 3))
        self._parent = np.full(cap, -1, dtype=np.int64)
        self._cost = np.zeros(cap)
        self._edge_len = np.zeros(cap)
        self._children: List[List[int]] = [[]]
        self._poses[0] = start.as_array()
        self.n = 1
        self._goal_nodes: List[int] = [0] if self._reaches_goal(0) else []
        self.iterations_run = 0

    def matches(self, start: Pose2D, goal: Pose2D, costmap: Costmap) -> bool:
        return costmap is self.costmap and start == self.start and goal == self.goal

    # ---- tree bookkeeping ----
    def _grow_arrays(self) -> None:
        cap = 2 * len(self._cost)
        self._poses = np.resize(self._poses, (cap, 3))
        self._parent = np.resize(self._parent, cap)
        self._cost = np.resize(self._cost, cap)
        self._edge_len = np.resize(self._edge_len, cap)

    def _add_node(self, pose: np.ndarray, parent: int, edge_len: float) -> int:
        if self.n == len(self._cost):
            self._grow_arrays()
        i = self.n
        self._poses[i] = pose
        self._parent[i] = parent
        self._edge_len[i] = edge_len
        self._cost[i] = self._cost[parent] + edge_len
        self._children.append([])
        self._children[parent].append(i)
        self.n += 1
        return i

    def _propagate(self, root: int) -> None:
        queue = deque([root])
        while queue:
            i = queue.popleft()
            for c in self._children[i]:
                self._cost[c] = self._cost[i] + self._edge_len[c]
                queue.append(c)

    def _reaches_goal(self, i: int) -> bool:
        x, y, th = self._poses[i]
        return Pose2D.of(x, y, th).within(self.goal, self.config.goal_pos_tol, self.config.goal_ang_tol)

    # ---- geometry ----
    def _edge_samples_free(self, samples: np.ndarray, costmap: Optional[Costmap] = None) -> bool:
        cm = costmap if costmap is not None else self.costmap
        return bool(np.all(collision_free_mask(cm, samples[:, :2], self.config.footprint)))

    def _connect(self, a: np.ndarray, b: np.ndarray) -> DubinsPath:
        return dubins_shortest(Pose2D.from_array(a), Pose2D.from_array(b), self.model.rho)

    def _edge_free(self, path: DubinsPath) -> bool:
        return self._edge_samples_free(sample_dubins_array(path, self.config.steer_step))

    def _sample(self) -> np.ndarray:
        if self.rng.random() < self.config.goal_bias or len(self._free) == 0:
            return self.goal.as_array()
        ix, iy = self._free[self.rng.integers(len(self._free))]
        res, origin = self.costmap.resolution, self.costmap.origin
        x = origin.x + (ix + self.rng.random()) * res
        y = origin.y + (iy + self.rng.random()) * res
        return np.array([x, y, self.rng.uniform(-math.pi, math.pi)])

    # ---- main loop ----
    def _extend(self, q: np.ndarray) -> Optional[int]:
        poses = self._poses[:self.n]
        rho = self.model.rho
        nearest = int(np.argmin(dubins_lengths(poses, q, rho)))
        path = self._connect(poses[nearest], q)
        if path.length <= 1e-9:
            return None
        if path.length > self.config.max_edge_length:
            q = pose_at(path, self.config.max_edge_length).as_array()
        if not self._edge_samples_free(q[None, :]):
            return None

        incoming = dubins_lengths(poses, q, rho)
        near = np.flatnonzero(incoming <= self.config.rewire_radius)
        if nearest not in near:
            near = np.append(near, nearest)
        order = near[np.argsort(self._cost[near] + incoming[near], kind="stable")]

        parent, parent_path = -1, None
        for i in order:
            cand = self._connect(poses[i], q)
            if cand.length <= 1e-9:
                return None
            if self._edge_free(cand):
                parent, parent_path = int(i), cand
                break
        if parent < 0:
            return None
        new = self._add_node(q, parent, parent_path.length)

        outgoing = dubins_lengths(q, self._poses[:new], rho)
        for i in near:
            i = int(i)
            if i == parent or self._cost[new] + outgoing[i] >= self._cost[i] - 1e-12:
                continue
            cand = self._connect(q, self._poses[i])
            new_cost = self._cost[new] + cand.length
            if new_cost >= self._cost[i] - 1e-12 or not self._edge_free(cand):
                continue
            self._children[int(self._parent[i])].remove(i)
            self._parent[i] = new
            self._edge_len[i] = cand.length
            self._children[new].append(i)
            self._cost[i] = new_cost
            self._propagate(i)

        if self._reaches_goal(new):
            self._goal_nodes.append(new)
        return new

    def grow(self, iterations: int, time_budget_ms: Optional[float] = None) -> int:
        t0 = time.perf_counter()
        done = 0
        for _ in range(iterations):
            if time_budget_ms is not None and (time.perf_counter() - t0) * 1000.0 >= time_budget_ms:
                break
            self._extend(self._sample())
            done += 1
        self.iterations_run += done
        return done

    # ---- results ----
    def best_goal_node(self) -> Optional[int]:
        if not self._goal_nodes:
            return None
        costs = self._cost[self._goal_nodes]
        return int(self._goal_nodes[int(np.argmin(costs))])

    def best_cost(self) -> Optional[float]:
        g = self.best_goal_node()
        return None if g is None else float(self._cost[g])

    def best_trajectory(self) -> Optional[Trajectory]:
        g = self.best_goal_node()
        if g is None:
            return None
        chain = [g]
        while self._parent[chain[-1]] >= 0:
            chain.append(int(self._parent[chain[-1]]))
        chain.reverse()
        if len(chain) == 1:
            return Trajectory.from_path(self._connect(self._poses[g], self._poses[g]), self.config.steer_step)
        traj = None
        for a, b in zip(chain[:-1], chain[1:]):
            piece = Trajectory.from_path(self._connect(self._poses[a], self._poses[b]), self.config.steer_step)
            traj = piece if traj is None else traj.concat(piece)
        return traj

    def nodes(self) -> List[TreeNode]:
        out = []
        for i in range(self.n):
            p = int(self._parent[i])
            out.append(TreeNode(
                pose=Pose2D.from_array(self._poses[i]),
                parent=None if p < 0 else p,
                cost_from_root=float(self._cost[i]),
            ))
        return out


def plan_rrtstar(
    start: Pose2D, goal: Pose2D, costmap: Costmap, model: VehicleModel, config: RRTStarConfig
) -> Optional[Trajectory]:
    planner = RRTStarPlanner(start, goal, costmap, model, config)
    planner.grow(config.max_iterations, config.time_budget_ms)
    traj = planner.best_trajectory()
    if traj is None:
        _logger.debug("RRT* found no path in %d iterations", planner.iterations_run)
    return traj


def anytime_replan(
    start: Pose2D,
    goal: Pose2D,
    costmap: Costmap,
    model: VehicleModel,
    config: RRTStarConfig,
    warm_tree: Optional[RRTStarPlanner] = None,
    refine: bool = False,
) -> Optional[Trajectory]:
    """
    Best path for (start, goal, costmap). A tree built for a different start,
    goal or map is reset first. A matching tree that already holds a solution
    returns it without growing unless `refine` is set; otherwise the tree is
    grown by one budget.
    """
    if warm_tree is None:
        warm_tree = RRTStarPlanner(start, goal, costmap, model, config)
    else:
        warm_tree.config = config
        if not warm_tree.matches(start, goal, costmap):
            warm_tree.reset(start, goal, costmap)
        elif not refine:
            held = warm_tree.best_trajectory()
            if held is not None:
                return held
    warm_tree.grow(config.max_iterations, config.time_budget_ms)
    return warm_tree.best_trajectory()
