# planning/navsim/gridworld.py
"""
Synthetic grid-world maps: an axis-aligned corridor maze carved by a seeded
randomized depth-first search, with extra loop openings and merged rooms.
"""
from __future__ import annotations

import math
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel
from scipy import ndimage

from kinoplan.errors import MapSpecError
from kinoplan.log import get_logger
from planning.costmap.core import COLLISION_THRESHOLD, LETHAL, Costmap, Footprint, is_collision_free
from planning.geometry.core import Pose2D

_logger = get_logger("kinoplan.navsim")


class GridWorldSpec(BaseModel):
    size: int = 200
    corridor_width: int = 20
    wall_thickness: int = 5
    loop_fraction: float = 0.15
    room_fraction: float = 0.1
    resolution: float = 0.1
    seed: int = 0

    model_config = {"extra": "ignore"}


class WorldMap(BaseModel):
    map_id: str
    costmap: Costmap
    spec: Optional[GridWorldSpec] = None
    source_path: Optional[str] = None
    connected: bool = True

    @classmethod
    def from_costmap(cls, costmap: Costmap, source_path: Optional[str] = None) -> "WorldMap":
        return cls(
            map_id=costmap.map_id, costmap=costmap, source_path=source_path,
            connected=free_space_connected(costmap),
        )


def free_space_connected(costmap: Costmap) -> bool:
    """True when the free cells form one 4-connected component."""
    free = costmap.cells < COLLISION_THRESHOLD
    _, n = ndimage.label(free)
    return n == 1


def obstacle_density(costmap: Costmap) -> float:
    return float(np.mean(costmap.cells >= COLLISION_THRESHOLD))


def _cell_block(i: int, j: int, pitch: int, wall: int, width: int) -> Tuple[slice, slice]:
    y0, x0 = wall + j * pitch, wall + i * pitch
    return slice(y0, y0 + width), slice(x0, x0 + width)


def _open_between(grid: np.ndarray, a: Tuple[int, int], b: Tuple[int, int], pitch: int, wall: int, width: int) -> None:
    (i0, j0), (i1, j1) = sorted([a, b])
    ys, xs = _cell_block(i0, j0, pitch, wall, width)
    if i1 != i0:
        grid[ys, xs.start:xs.stop + pitch] = 0
    else:
        grid[ys.start:ys.stop + pitch, xs] = 0


def generate_gridworld(spec: GridWorldSpec, footprint: Optional[Footprint] = None) -> WorldMap:
    """
    Deterministic per seed. Corridors narrower than the footprint's inflation
    diameter, or a size too small for a 2 x 2 maze, raise MapSpecError.
    """
    footprint = footprint or Footprint()
    width, wall = spec.corridor_width, spec.wall_thickness
    if width * spec.resolution < 2.0 * footprint.inflation_radius:
        raise MapSpecError(
            f"corridor {width * spec.resolution:.2f} m is narrower than the footprint diameter "
            f"{2.0 * footprint.inflation_radius:.2f} m"
        )
    if wall < 1 or not 0.0 <= spec.loop_fraction <= 1.0 or not 0.0 <= spec.room_fraction <= 1.0:
        raise MapSpecError("wall_thickness >= 1 and fractions in [0, 1] are required")
    pitch = width + wall
    m = (spec.size - wall) // pitch
    if m < 2:
        raise MapSpecError(f"size {spec.size} holds fewer than 2 x 2 corridor cells")

    rng = np.random.default_rng(spec.seed)
    grid = np.full((spec.size, spec.size), LETHAL, dtype=np.uint8)
    for i in range(m):
        for j in range(m):
            grid[_cell_block(i, j, pitch, wall, width)] = 0

    visited = np.zeros((m, m), dtype=bool)
    tree_edges = set()
    stack: List[Tuple[int, int]] = [(int(rng.integers(m)), int(rng.integers(m)))]
    visited[stack[0]] = True
    while stack:
        i, j = stack[-1]
        options = [
            (i + di, j + dj)
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1))
            if 0 <= i + di < m and 0 <= j + dj < m and not visited[i + di, j + dj]
        ]
        if not options:
            stack.pop()
            continue
        nxt = options[int(rng.integers(len(options)))]
        _open_between(grid, (i, j), nxt, pitch, wall, width)
        tree_edges.add(tuple(sorted([(i, j), nxt])))
        visited[nxt] = True
        stack.append(nxt)

    for i in range(m):
        for j in range(m):
            for nb in ((i + 1, j), (i, j + 1)):
                if nb[0] < m and nb[1] < m and tuple(sorted([(i, j), nb])) not in tree_edges:
                    if rng.random() < spec.loop_fraction:
                        _open_between(grid, (i, j), nb, pitch, wall, width)

    for i in range(m - 1):
        for j in range(m - 1):
            if rng.random() < spec.room_fraction:
                ys, xs = _cell_block(i, j, pitch, wall, width)
                grid[ys.start:ys.stop + pitch, xs.start:xs.stop + pitch] = 0

    costmap = Costmap(
        cells=grid, resolution=spec.resolution, origin=Pose2D.of(0.0, 0.0, 0.0), map_id=f"grid-{spec.seed}",
    )
    connected = free_space_connected(costmap)
    if not connected:
        _logger.warning("grid world %s has disconnected free space", costmap.map_id)
    return WorldMap(map_id=costmap.map_id, costmap=costmap, spec=spec, connected=connected)


def random_free_pose(world: WorldMap, rng: np.random.Generator, footprint: Footprint, attempts: int = 500) -> Optional[Pose2D]:
    free = world.costmap.free_cells()
    if len(free) == 0:
        return None
    res, origin = world.costmap.resolution, world.costmap.origin
    for _ in range(attempts):
        ix, iy = free[rng.integers(len(free))]
        pose = Pose2D.of(origin.x + (ix + 0.5) * res, origin.y + (iy + 0.5) * res, rng.uniform(-math.pi, math.pi))
        if is_collision_free(world.costmap, pose, footprint):
            return pose
    return None
