"""Reference-path geometry for the tracker: projection and arc-length interpolation."""
from __future__ import annotations

from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, PrivateAttr

from kinoplan.errors import InvalidInputError
from planning.geometry.core import Pose2D, Trajectory, resample_trajectory, wrap_angles


class ReferencePath(BaseModel):
    nodes: List[Pose2D]
    spacing: float

    _xy: np.ndarray = PrivateAttr()
    _theta: np.ndarray = PrivateAttr()
    _s: np.ndarray = PrivateAttr()

    def model_post_init(self, __context) -> None:
        if len(self.nodes) < 2:
            raise InvalidInputError("a reference path needs at least 2 nodes")
        self._xy = np.array([[p.x, p.y] for p in self.nodes])
        self._theta = np.unwrap([p.theta for p in self.nodes])
        seg = np.hypot(*np.diff(self._xy, axis=0).T)
        self._s = np.concatenate([[0.0], np.cumsum(seg)])

    @property
    def arc_lengths(self) -> np.ndarray:
        return self._s

    @property
    def total_length(self) -> float:
        return float(self._s[-1])

    def project(self, x: float, y: float, s_min: Optional[float] = None, s_max: Optional[float] = None) -> Tuple[float, float]:
        """(arc length, distance) of the closest polyline point, optionally restricted to [s_min, s_max]."""
        a, ab = self._xy[:-1], np.diff(self._xy, axis=0)
        seg_len = np.hypot(ab[:, 0], ab[:, 1])
        safe = np.where(seg_len > 0, seg_len, 1.0)
        p = np.array([x, y])
        t = np.clip(np.einsum("ij,ij->i", p - a, ab) / (safe * safe), 0.0, 1.0)
        valid = np.ones(len(seg_len), dtype=bool)
        if s_min is not None or s_max is not None:
            lo = -np.inf if s_min is None else s_min
            hi = np.inf if s_max is None else s_max
            window = (self._s[1:] >= lo) & (self._s[:-1] <= hi)
            if window.any():
                valid = window
                s = np.clip(self._s[:-1] + t * seg_len, lo, hi)
                t = np.clip((s - self._s[:-1]) / safe, 0.0, 1.0)
        s = self._s[:-1] + t * seg_len
        pts = a + t[:, None] * ab
        dist = np.where(valid, np.hypot(*(pts - p).T), np.inf)
        k = int(np.argmin(dist))
        return float(s[k]), float(dist[k])

    def interpolate(self, s: np.ndarray) -> np.ndarray:
        s = np.clip(np.asarray(s, dtype=np.float64), 0.0, self.total_length)
        out = np.empty((s.size, 3))
        out[:, 0] = np.interp(s, self._s, self._xy[:, 0])
        out[:, 1] = np.interp(s, self._s, self._xy[:, 1])
        out[:, 2] = wrap_angles(np.interp(s, self._s, self._theta))
        return out

    def mean_curvature(self, s0: float, s1: float) -> float:
        if s1 - s0 <= 1e-9:
            return 0.0
        th = np.interp([s0, s1], self._s, self._theta)
        return float(abs(th[1] - th[0]) / (s1 - s0))


def resample_reference(traj: Trajectory, spacing: float) -> ReferencePath:
    """
    Arc-length resampling along the Dubins segments; endpoints preserved
    exactly. A trajectory shorter than the spacing gives its two endpoints.
    """
    if not spacing > 0:
        raise InvalidInputError(f"spacing must be > 0, got {spacing}")
    return ReferencePath(nodes=resample_trajectory(traj, spacing), spacing=spacing)
