# planning/dataset/core.py
"""
Expert-trajectory collection with RRT*, sub-path augmentation, and
conversion of trajectories into egocentric training tuples.

State vectors are (x_bar, y_bar, cos theta, sin theta): positions are taken
relative to the current pose and divided by the padded half-extent l * res.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, field_validator, model_validator
from tqdm import tqdm

from kinoplan.errors import DatasetError, InvalidInputError, SampleOutsideWindowError
from kinoplan.log import get_logger
from planning.costmap.core import (
    Costmap,
    collision_free_mask,
    crop_window,
    pad,
    transform_egocentric,
)
from planning.geometry.core import Pose2D, VehicleModel, resample_trajectory
from planning.rrtstar.core import RRTStarConfig, plan_rrtstar

_logger = get_logger("kinoplan.dataset")


# ---- Models ----
class CollectConfig(BaseModel):
    waypoint_spacing: float = 0.2
    min_distance: float = 1.0
    max_distance: Optional[float] = None
    sample_attempts: int = 200
    window_l: int = 40
    augment_limit: Optional[int] = 64

    model_config = {"extra": "ignore"}


class TrajectoryRecord(BaseModel):
    map_id: str
    poses: List[Pose2D]
    source_seed: int

    @field_validator("poses")
    @classmethod
    def _at_least_two(cls, v: List[Pose2D]) -> List[Pose2D]:
        if len(v) < 2:
            raise ValueError("a trajectory record needs at least 2 poses")
        return v


class TrainingTuple(BaseModel):
    current: np.ndarray
    goal: np.ndarray
    patch_raw: np.ndarray
    target: np.ndarray
    trajectory_id: int = -1

    model_config = {"arbitrary_types_allowed": True}

    @model_validator(mode="after")
    def _check(self) -> "TrainingTuple":
        for name in ("current", "goal", "target"):
            v = getattr(self, name)
            if v.shape != (4,) or not np.all(np.isfinite(v)):
                raise ValueError(f"{name} must be a finite 4-vector")
            if np.any(np.abs(v[:2]) > 1.0):
                raise ValueError(f"{name} position lies outside the padded window")
            if abs(float(v[2]) ** 2 + float(v[3]) ** 2 - 1.0) > 1e-6:
                raise ValueError(f"{name} heading is not on the unit circle")
        if self.patch_raw.dtype != np.uint8 or self.patch_raw.ndim != 2:
            raise ValueError("patch_raw must be a 2-D uint8 grid")
        return self

    @property
    def costmap_patch(self) -> np.ndarray:
        return self.patch_raw.astype(np.float32) / np.float32(255.0)


class Dataset(BaseModel):
    """Columnar store of training tuples; row k of every array is tuple k."""
    l: int
    resolution: float
    current: np.ndarray
    goal: np.ndarray
    patches: np.ndarray
    target: np.ndarray
    trajectory_ids: np.ndarray

    model_config = {"arbitrary_types_allowed": True}

    @classmethod
    def empty(cls, l: int, resolution: float) -> "Dataset":
        z4 = np.zeros((0, 4), dtype=np.float32)
        return cls(
            l=l, resolution=resolution, current=z4, goal=z4.copy(),
            patches=np.zeros((0, 2 * l, 2 * l), dtype=np.uint8),
            target=z4.copy(), trajectory_ids=np.zeros(0, dtype=np.int64),
        )

    @classmethod
    def from_tuples(cls, tuples: Sequence[TrainingTuple], l: int, resolution: float) -> "Dataset":
        if not tuples:
            return cls.empty(l, resolution)
        return cls(
            l=l,
            resolution=resolution,
            current=np.stack([t.current for t in tuples]).astype(np.float32),
            goal=np.stack([t.goal for t in tuples]).astype(np.float32),
            patches=np.stack([t.patch_raw for t in tuples]).astype(np.uint8),
            target=np.stack([t.target for t in tuples]).astype(np.float32),
            trajectory_ids=np.array([t.trajectory_id for t in tuples], dtype=np.int64),
        )

    def __len__(self) -> int:
        return int(self.current.shape[0])

    def __getitem__(self, k: int) -> TrainingTuple:
        return TrainingTuple(
            current=self.current[k], goal=self.goal[k], patch_raw=self.patches[k],
            target=self.target[k], trajectory_id=int(self.trajectory_ids[k]),
        )

    def __iter__(self) -> Iterator[TrainingTuple]:
        for k in range(len(self)):
            yield self[k]

    def as_arrays(self, idx: Optional[np.ndarray] = None) -> Dict[str, np.ndarray]:
        """Network-ready arrays, patches scaled to [0, 1]; rows `idx` only when given."""
        sel = slice(None) if idx is None else idx
        return {
            "current": self.current[sel],
            "goal": self.goal[sel],
            "patch": self.patches[sel].astype(np.float32) / np.float32(255.0),
            "target": self.target[sel],
            "trajectory_ids": self.trajectory_ids[sel],
        }

    def subset(self, idx: np.ndarray) -> "Dataset":
        return Dataset(
            l=self.l, resolution=self.resolution, current=self.current[idx], goal=self.goal[idx],
            patches=self.patches[idx], target=self.target[idx], trajectory_ids=self.trajectory_ids[idx],
        )


# ---- State encoding ----
def encode_state(pose: Pose2D, center: Pose2D, half_extent: float) -> np.ndarray:
    return np.array([
        (pose.x - center.x) / half_extent,
        (pose.y - center.y) / half_extent,
        math.cos(pose.theta),
        math.sin(pose.theta),
    ])


def decode_state(vec: Sequence[float], center: Pose2D, half_extent: float) -> Pose2D:
    return Pose2D.of(
        center.x + float(vec[0]) * half_extent,
        center.y + float(vec[1]) * half_extent,
        math.atan2(float(vec[3]), float(vec[2])),
    )


# ---- Collection ----
def derive_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1, dtype=np.uint64)[0])


def _sample_pose(costmap: Costmap, rng: np.random.Generator, config: RRTStarConfig, attempts: int) -> Optional[Pose2D]:
    free = costmap.free_cells()
    res, origin = costmap.resolution, costmap.origin
    for _ in range(attempts):
        ix, iy = free[rng.integers(len(free))]
        x = origin.x + (ix + rng.random()) * res
        y = origin.y + (iy + rng.random()) * res
        if collision_free_mask(costmap, np.array([[x, y]]), config.footprint)[0]:
            return Pose2D.of(x, y, rng.uniform(-math.pi, math.pi))
    return None


def _collect_one(job: Tuple[Costmap, int, VehicleModel, RRTStarConfig, CollectConfig]) -> Optional[TrajectoryRecord]:
    costmap, traj_seed, model, config, cc = job
    rng = np.random.default_rng(traj_seed)
    start = goal = None
    for _ in range(cc.sample_attempts):
        start = _sample_pose(costmap, rng, config, cc.sample_attempts)
        goal = _sample_pose(costmap, rng, config, cc.sample_attempts)
        if start is None or goal is None:
            return None
        d = start.distance_to(goal)
        if d >= cc.min_distance and (cc.max_distance is None or d <= cc.max_distance):
            break
    else:
        return None
    traj = plan_rrtstar(start, goal, costmap, model, config.model_copy(update={"rng_seed": traj_seed}))
    if traj is None:
        return None
    poses = resample_trajectory(traj, cc.waypoint_spacing)
    return TrajectoryRecord(map_id=costmap.map_id, poses=poses, source_seed=traj_seed)


def collect(
    maps: Sequence[Costmap],
    n_trajectories: int,
    model: VehicleModel,
    config: RRTStarConfig,
    seed: int,
    workers: int = 1,
    collect_config: Optional[CollectConfig] = None,
) -> List[TrajectoryRecord]:
    """
    Plan n_trajectories random start/goal problems with RRT*, keeping the
    successes. Problem i runs on maps[i % len(maps)] with a seed derived
    from (seed, i), so the result does not depend on the worker count.
    """
    if n_trajectories < 0 or workers < 1:
        raise InvalidInputError("n_trajectories must be >= 0 and workers >= 1")
    if n_trajectories == 0:
        return []
    if not maps:
        raise DatasetError("collect needs at least one map")
    for m in maps:
        if len(m.free_cells()) < 2:
            raise DatasetError(f"map '{m.map_id}' has fewer than 2 free cells")
    cc = collect_config or CollectConfig()
    jobs = [(maps[i % len(maps)], derive_seed(seed, i), model, config, cc) for i in range(n_trajectories)]

    if workers == 1:
        results = [_collect_one(j) for j in tqdm(jobs, desc="collect", leave=False)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(tqdm(pool.map(_collect_one, jobs, chunksize=4), total=len(jobs), desc="collect", leave=False))

    records = [r for r in results if r is not None]
    records.sort(key=lambda r: (r.map_id, r.source_seed))
    _logger.info("collected %d/%d trajectories", len(records), n_trajectories)
    return records


# ---- Augmentation ----
def augment(record: TrajectoryRecord, window_extent: float = 4.0) -> List[TrajectoryRecord]:
    """
    Every contiguous sub-path (i, j) with j - i >= 2 whose bounding box fits
    inside one window_extent x window_extent local window.
    """
    xy = np.array([[p.x, p.y] for p in record.poses])
    n = len(xy)
    out = []
    for i in range(n):
        lo, hi = xy[i].copy(), xy[i].copy()
        for j in range(i + 1, n):
            lo = np.minimum(lo, xy[j])
            hi = np.maximum(hi, xy[j])
            if np.any(hi - lo > window_extent):
                break
            if j - i >= 2:
                out.append(TrajectoryRecord(
                    map_id=record.map_id, poses=record.poses[i:j + 1], source_seed=record.source_seed,
                ))
    return out


# ---- Tuple extraction ----
def encode_sample(record: TrajectoryRecord, t: int, costmap: Costmap, l: int) -> TrainingTuple:
    """
    Training tuple (s_t, s_T, patch_t, s_t+1) in the frame centered on s_t.
    The l x l local window is cropped around s_t, the pose the planner holds
    when it asks for the next state, and padded to 2l x 2l.
    Raises SampleOutsideWindowError when s_T or s_t+1 leaves the padded window.
    """
    T = len(record.poses) - 1
    if not 0 <= t < T:
        raise InvalidInputError(f"step {t} outside [0, {T})")
    s_t, s_next, s_goal = record.poses[t], record.poses[t + 1], record.poses[-1]
    padded = transform_egocentric(pad(crop_window(costmap, s_t, l)), s_t)
    half = padded.half_extent
    goal = encode_state(s_goal, s_t, half)
    target = encode_state(s_next, s_t, half)
    if np.any(np.abs(goal[:2]) > 1.0) or np.any(np.abs(target[:2]) > 1.0):
        raise SampleOutsideWindowError(f"goal of record '{record.map_id}' leaves the padded window at step {t}")
    return TrainingTuple(
        current=encode_state(s_t, s_t, half),
        goal=goal,
        patch_raw=np.array(padded.cells),
        target=target,
    )


def encode_records(
    records: Sequence[TrajectoryRecord],
    maps: Dict[str, Costmap],
    l: int,
    augment_paths: bool = True,
    augment_limit: Optional[int] = None,
) -> Dataset:
    """
    Augment (optionally), encode every step, and stack into a float32 Dataset.
    Each (sub-)path gets its own trajectory id for the loss weighting.
    """
    if not records:
        res = next(iter(maps.values())).resolution if maps else 0.1
        return Dataset.empty(l, res)
    tuples: List[TrainingTuple] = []
    skipped = 0
    traj_id = 0
    resolution = maps[records[0].map_id].resolution
    for record in tqdm(records, desc="encode", leave=False):
        costmap = maps[record.map_id]
        # sub-paths whose extent fits one local window
        paths = augment(record, 0.5 * l * costmap.resolution) if augment_paths else [record]
        if augment_limit is not None and len(paths) > augment_limit:
            rng = np.random.default_rng(record.source_seed)
            keep = np.sort(rng.choice(len(paths), size=augment_limit, replace=False))
            paths = [paths[k] for k in keep]
        for sub in paths:
            for t in range(len(sub.poses) - 1):
                try:
                    tt = encode_sample(sub, t, costmap, l)
                except SampleOutsideWindowError:
                    skipped += 1
                    continue
                tuples.append(tt.model_copy(update={"trajectory_id": traj_id}))
            traj_id += 1
    if skipped:
        _logger.warning("skipped %d samples whose goal left the padded window", skipped)
    return Dataset.from_tuples(tuples, l, resolution)
