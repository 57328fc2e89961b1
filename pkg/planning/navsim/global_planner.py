# planning/navsim/global_planner.py
"""
Grid global planner (8-connected A* over footprint-inflated cells) and
sub-goal extraction from its position path.
"""
from __future__ import annotations

import heapq
import math
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel

from kinoplan.errors import CorridorExitError, NoPathError
from planning.costmap.core import Costmap, Footprint, inflate, is_collision_free
from planning.geometry.core import Pose2D
from planning.navsim.gridworld import WorldMap

SQRT2 = math.sqrt(2.0)
SUBGOAL_FRACTION = 0.9
TANGENT_HALF_SPAN = 3
SNAP_RADIUS_CELLS = 2
_MOVES = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)]


class GlobalPath(BaseModel):
    positions: List[Tuple[float, float]]
    goal: Pose2D
    length: float
    cost: float

    def as_array(self) -> np.ndarray:
        return np.array(self.positions, dtype=np.float64)


def _astar(blocked: np.ndarray, start: Tuple[int, int], goal: Tuple[int, int]) -> Optional[Tuple[List[Tuple[int, int]], float]]:
    """A* in cell units; diagonal moves need both adjacent orthogonal cells free."""
    L = blocked.shape[0]
    gx, gy = goal

    def h(ix: int, iy: int) -> float:
        dx, dy = abs(ix - gx), abs(iy - gy)
        return (SQRT2 - 1.0) * min(dx, dy) + max(dx, dy)

    g_best = {start: 0.0}
    parent = {start: None}
    heap = [(h(*start), 0.0, 0, start)]
    counter = 0
    closed = set()
    while heap:
        _, g, _, cell = heapq.heappop(heap)
        if cell in closed:
            continue
        if cell == goal:
            path = [cell]
            while parent[path[-1]] is not None:
                path.append(parent[path[-1]])
            return path[::-1], g
        closed.add(cell)
        cx, cy = cell
        for dx, dy in _MOVES:
            nx, ny = cx + dx, cy + dy
            if not (0 <= nx < L and 0 <= ny < L) or blocked[ny, nx]:
                continue
            if dx and dy and (blocked[cy, nx] or blocked[ny, cx]):
                continue
            ng = g + (SQRT2 if dx and dy else 1.0)
            nb = (nx, ny)
            if ng < g_best.get(nb, math.inf) - 1e-12:
                g_best[nb] = ng
                parent[nb] = cell
                counter += 1
                heapq.heappush(heap, (ng + h(nx, ny), ng, counter, nb))
    return None


def global_plan(
    world: WorldMap | Costmap, start: Pose2D, goal: Pose2D, footprint: Optional[Footprint] = None
) -> GlobalPath:
    """
    Cell-center polyline from start to goal whose first and last points are the
    exact start and goal positions. `cost` is the grid path cost in meters.
    """
    costmap = world.costmap if isinstance(world, WorldMap) else world
    blocked = inflate(costmap, footprint or Footprint())
    cells = []
    for name, pose in (("start", start), ("goal", goal)):
        ix, iy = costmap.world_to_cell(pose.x, pose.y)
        if not costmap.contains(pose.x, pose.y) or blocked[iy, ix]:
            raise NoPathError(f"{name} ({pose.x:.2f}, {pose.y:.2f}) is off the map or inside an obstacle")
        cells.append((ix, iy))
    found = _astar(blocked, cells[0], cells[1])
    if found is None:
        raise NoPathError(f"no grid path between {cells[0]} and {cells[1]} on '{costmap.map_id}'")
    path, cost = found
    positions = [costmap.cell_center(ix, iy) for ix, iy in path]
    positions[0] = (start.x, start.y)
    if len(positions) == 1:
        positions.append((goal.x, goal.y))
    else:
        positions[-1] = (goal.x, goal.y)
    arr = np.array(positions)
    length = float(np.sum(np.hypot(*np.diff(arr, axis=0).T)))
    return GlobalPath(positions=positions, goal=goal, length=length, cost=cost * costmap.resolution)


def _tangent(pts: np.ndarray, k: int, fallback: float) -> float:
    a = pts[max(0, k - TANGENT_HALF_SPAN)]
    b = pts[min(len(pts) - 1, k + TANGENT_HALF_SPAN)]
    d = b - a
    if math.hypot(d[0], d[1]) < 1e-9:
        return fallback
    return math.atan2(d[1], d[0])


def _snap(pose: Pose2D, costmap: Costmap, footprint: Footprint) -> Optional[Pose2D]:
    if is_collision_free(costmap, pose, footprint):
        return pose
    ix, iy = costmap.world_to_cell(pose.x, pose.y)
    best, best_d = None, math.inf
    for dy in range(-SNAP_RADIUS_CELLS, SNAP_RADIUS_CELLS + 1):
        for dx in range(-SNAP_RADIUS_CELLS, SNAP_RADIUS_CELLS + 1):
            cx, cy = costmap.cell_center(ix + dx, iy + dy)
            cand = Pose2D.of(cx, cy, pose.theta)
            d = math.hypot(cx - pose.x, cy - pose.y)
            if d < best_d and is_collision_free(costmap, cand, footprint):
                best, best_d = cand, d
    return best


def select_subgoal(
    global_path: GlobalPath,
    pose: Pose2D,
    window_half_extent: float,
    costmap: Optional[Costmap] = None,
    footprint: Optional[Footprint] = None,
) -> Pose2D:
    """
    Farthest point of the contiguous in-window run that starts at the path
    point nearest `pose` (window: L-infinity radius 0.9 * half extent), headed
    along the smoothed path tangent. The true goal is returned when it is in
    the window. With a costmap, the point is snapped to a free cell within 2
    cells, walking back along the path if needed.
    """
    pts = global_path.as_array()
    if len(pts) == 0:
        raise CorridorExitError("empty global path")
    reach = SUBGOAL_FRACTION * window_half_extent
    goal = global_path.goal
    if max(abs(goal.x - pose.x), abs(goal.y - pose.y)) <= reach:
        return goal
    inside = np.max(np.abs(pts - [pose.x, pose.y]), axis=1) <= reach
    if not inside.any():
        raise CorridorExitError(f"no global-path point within {reach:.2f} m of ({pose.x:.2f}, {pose.y:.2f})")

    k0 = int(np.argmin(np.hypot(*(pts - [pose.x, pose.y]).T)))
    if inside[k0]:
        k = k0
        while k + 1 < len(pts) and inside[k + 1]:
            k += 1
    else:
        k0 = k = int(np.flatnonzero(inside)[-1])

    footprint = footprint or Footprint()
    for j in range(k, k0 - 1, -1):
        cand = Pose2D.of(pts[j, 0], pts[j, 1], _tangent(pts, j, pose.theta))
        if costmap is None:
            return cand
        snapped = _snap(cand, costmap, footprint)
        if snapped is not None and max(abs(snapped.x - pose.x), abs(snapped.y - pose.y)) <= window_half_extent:
            return snapped
    return Pose2D.of(pts[k, 0], pts[k, 1], _tangent(pts, k, pose.theta))
