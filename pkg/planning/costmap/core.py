# planning/costmap/core.py
"""
Occupancy-cost grids, the pad / egocentric-translate transforms, footprint
collision checks and the Dubins steering primitive.

Cells are uint8 costs indexed cells[iy, ix]; cell (0, 0) has its lower-left
corner at the map origin and the grid axes are world-aligned.
"""
from __future__ import annotations

import math
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, field_validator, model_validator
from scipy import ndimage

from kinoplan.errors import InvalidInputError, PlannerDivergenceError
from planning.geometry.core import (
    Pose2D,
    Trajectory,
    VehicleModel,
    dubins_shortest,
    sample_dubins_array,
)

LETHAL = 255
COLLISION_THRESHOLD = 128
# absorbs float noise when a pose sits exactly on a cell boundary
_CELL_EPS = 1e-9


def _frozen_cells(cells: np.ndarray) -> np.ndarray:
    out = np.array(cells, dtype=np.uint8, copy=True)
    out.setflags(write=False)
    return out


# ---- Models ----
class Footprint(BaseModel):
    inflation_radius: float = 0.2

    model_config = {"extra": "ignore", "frozen": True}

    @field_validator("inflation_radius")
    @classmethod
    def _non_negative(cls, v: float) -> float:
        if not v >= 0:
            raise ValueError("inflation_radius must be >= 0")
        return v


class Costmap(BaseModel):
    cells: np.ndarray
    resolution: float
    origin: Pose2D
    map_id: str = ""

    model_config = {"arbitrary_types_allowed": True, "frozen": True}

    @field_validator("cells", mode="before")
    @classmethod
    def _square(cls, v) -> np.ndarray:
        arr = np.asarray(v)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
            raise ValueError(f"cells must be a non-empty square grid, got shape {arr.shape}")
        if arr.size and (arr.min() < 0 or arr.max() > 255):
            raise ValueError("cell costs must lie in [0, 255]")
        return _frozen_cells(arr)

    @field_validator("resolution")
    @classmethod
    def _positive(cls, v: float) -> float:
        if not (v > 0 and math.isfinite(v)):
            raise ValueError("resolution must be > 0")
        return v

    @property
    def size_l(self) -> int:
        return int(self.cells.shape[0])

    @property
    def extent(self) -> float:
        return self.size_l * self.resolution

    @property
    def center(self) -> Pose2D:
        half = 0.5 * self.extent
        return Pose2D.of(self.origin.x + half, self.origin.y + half, 0.0)

    def world_to_cell(self, x: float, y: float) -> Tuple[int, int]:
        return (
            math.floor((x - self.origin.x) / self.resolution + _CELL_EPS),
            math.floor((y - self.origin.y) / self.resolution + _CELL_EPS),
        )

    def cell_center(self, ix: int, iy: int) -> Tuple[float, float]:
        return (
            self.origin.x + (ix + 0.5) * self.resolution,
            self.origin.y + (iy + 0.5) * self.resolution,
        )

    def contains(self, x: float, y: float) -> bool:
        ix, iy = self.world_to_cell(x, y)
        return 0 <= ix < self.size_l and 0 <= iy < self.size_l

    def free_cells(self) -> np.ndarray:
        """(k, 2) array of (ix, iy) with cost below the collision threshold."""
        iy, ix = np.nonzero(self.cells < COLLISION_THRESHOLD)
        return np.column_stack([ix, iy])


class PaddedCostmap(BaseModel):
    """
    2l x 2l grid holding a translated copy of `source`; the cell of `center`
    sits at grid index (l, l) and everything off the source is lethal.
    """
    cells: np.ndarray
    source: Costmap
    center: Pose2D
    offset: Tuple[int, int]

    model_config = {"arbitrary_types_allowed": True, "frozen": True}

    @model_validator(mode="after")
    def _shape(self) -> "PaddedCostmap":
        l2 = 2 * self.source.size_l
        if self.cells.shape != (l2, l2):
            raise ValueError(f"padded grid must be {l2}x{l2}, got {self.cells.shape}")
        return self

    @property
    def size_l(self) -> int:
        return self.source.size_l

    @property
    def resolution(self) -> float:
        return self.source.resolution

    @property
    def source_id(self) -> str:
        return self.source.map_id

    @property
    def half_extent(self) -> float:
        return self.size_l * self.resolution

    @property
    def origin_xy(self) -> Tuple[float, float]:
        res = self.resolution
        return self.source.origin.x - self.offset[0] * res, self.source.origin.y - self.offset[1] * res

    def center_cell_source_index(self) -> Tuple[int, int]:
        l = self.size_l
        return l - self.offset[0], l - self.offset[1]

    def source_block(self) -> np.ndarray:
        ox, oy = self.offset
        l = self.size_l
        return np.array(self.cells[oy:oy + l, ox:ox + l])

    def normalized(self) -> np.ndarray:
        return self.cells.astype(np.float32) / np.float32(LETHAL)


# ---- Transforms ----
def _place(source: Costmap, cx: int, cy: int, center: Pose2D) -> PaddedCostmap:
    l = source.size_l
    ox, oy = l - cx, l - cy
    grid = np.full((2 * l, 2 * l), LETHAL, dtype=np.uint8)
    # cx in [0, l) keeps the block inside [1, 2l]
    grid[oy:oy + l, ox:ox + l] = source.cells
    return PaddedCostmap(cells=_frozen_cells(grid), source=source, center=center, offset=(ox, oy))


def pad(costmap: Costmap) -> PaddedCostmap:
    """
    Copy the l x l grid into the center block of a lethal 2l x 2l grid.
    """
    c = costmap.size_l // 2
    return _place(costmap, c, c, costmap.center)


def transform_egocentric(padded: PaddedCostmap, pose: Pose2D) -> PaddedCostmap:
    """
    Re-translate the source map so the cell holding `pose` is the grid center.
    Always recomputed from the source, never composed with earlier shifts.
    """
    source = padded.source
    if not source.contains(pose.x, pose.y):
        raise PlannerDivergenceError(
            f"pose ({pose.x:.3f}, {pose.y:.3f}) lies outside map '{source.map_id}'"
        )
    cx, cy = source.world_to_cell(pose.x, pose.y)
    return _place(source, cx, cy, pose)


def crop_window(costmap: Costmap, center: Pose2D, l: int, map_id: Optional[str] = None) -> Costmap:
    """
    l x l window of `costmap` whose cell l // 2 holds `center`; cells beyond
    the source are lethal.
    """
    cx, cy = costmap.world_to_cell(center.x, center.y)
    x0, y0 = cx - l // 2, cy - l // 2
    out = np.full((l, l), LETHAL, dtype=np.uint8)
    L = costmap.size_l
    sx0, sy0 = max(0, x0), max(0, y0)
    sx1, sy1 = min(L, x0 + l), min(L, y0 + l)
    if sx0 < sx1 and sy0 < sy1:
        out[sy0 - y0:sy1 - y0, sx0 - x0:sx1 - x0] = costmap.cells[sy0:sy1, sx0:sx1]
    res = costmap.resolution
    origin = Pose2D.of(costmap.origin.x + x0 * res, costmap.origin.y + y0 * res, 0.0)
    return Costmap(cells=out, resolution=res, origin=origin, map_id=map_id or f"{costmap.map_id}@{cx},{cy}")


# ---- Collision checks ----
def collision_free_mask(costmap: Costmap, xy: np.ndarray, footprint: Footprint) -> np.ndarray:
    """
    True where the inflation disk at each position overlaps no cell with cost
    >= 128. Positions off the map, and disk cells off the map, count as lethal.
    """
    xy = np.atleast_2d(np.asarray(xy, dtype=np.float64))
    res, l = costmap.resolution, costmap.size_l
    gx = (xy[:, 0] - costmap.origin.x) / res
    gy = (xy[:, 1] - costmap.origin.y) / res
    ix = np.floor(gx + _CELL_EPS).astype(np.int64)
    iy = np.floor(gy + _CELL_EPS).astype(np.int64)
    inside = (ix >= 0) & (ix < l) & (iy >= 0) & (iy < l)

    r = footprint.inflation_radius
    k = int(math.ceil(r / res)) + 1
    offs = np.arange(-k, k + 1)
    cix = ix[:, None, None] + offs[None, None, :]
    ciy = iy[:, None, None] + offs[None, :, None]
    qx = np.clip(gx[:, None, None], cix, cix + 1)
    qy = np.clip(gy[:, None, None], ciy, ciy + 1)
    dist_sq = ((gx[:, None, None] - qx) ** 2 + (gy[:, None, None] - qy) ** 2) * res * res
    overlap = dist_sq < r * r
    overlap |= (cix == ix[:, None, None]) & (ciy == iy[:, None, None])

    in_map = (cix >= 0) & (cix < l) & (ciy >= 0) & (ciy < l)
    cost = np.where(
        in_map,
        costmap.cells[np.clip(ciy, 0, l - 1), np.clip(cix, 0, l - 1)],
        LETHAL,
    )
    blocked = np.any(overlap & (cost >= COLLISION_THRESHOLD), axis=(1, 2))
    return inside & ~blocked


def is_collision_free(costmap: Costmap, pose: Pose2D, footprint: Footprint) -> bool:
    return bool(collision_free_mask(costmap, np.array([[pose.x, pose.y]]), footprint)[0])


def inflate(costmap: Costmap, footprint: Footprint) -> np.ndarray:
    """Boolean grid of cells whose center is too close to an obstacle for the footprint."""
    obstacle = costmap.cells >= COLLISION_THRESHOLD
    if not obstacle.any():
        return obstacle.copy()
    dist = ndimage.distance_transform_edt(~obstacle) * costmap.resolution
    return obstacle | (dist < footprint.inflation_radius + 0.5 * costmap.resolution)


# ---- Steering ----
def default_steer_cap(l: int, resolution: float) -> float:
    """1.5 local-window diagonals."""
    return 1.5 * l * resolution * math.sqrt(2.0)


def steer(
    start: Pose2D,
    goal: Pose2D,
    costmap: Costmap,
    model: VehicleModel,
    max_length: float,
    step: float,
    footprint: Optional[Footprint] = None,
) -> Optional[Trajectory]:
    """
    Dubins shortest path start -> goal, sampled every `step` meters and
    collision-checked. Returns None if too long or any sample collides.
    """
    if not max_length > 0 or not step > 0:
        raise InvalidInputError("max_length and step must be > 0")
    footprint = footprint or Footprint()
    path = dubins_shortest(start, goal, model.rho)
    if path.length > max_length:
        return None
    samples = sample_dubins_array(path, step)
    if not np.all(collision_free_mask(costmap, samples[:, :2], footprint)):
        return None
    if len(samples) == 1:
        poses = [start]
    else:
        poses = [start] + [Pose2D.from_array(r) for r in samples[1:-1]] + [goal]
    return Trajectory(poses=poses, segments=[path], waypoint_indices=[0, len(poses) - 1])
