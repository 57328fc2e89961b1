# planning/geometry/core.py
"""
Dubins-car kinematics and Dubins shortest-path steering curves.

State is (x, y, theta) in meters / radians with theta wrapped to [-pi, pi).
The car moves forward at constant speed v_s; steering angle phi gives a yaw
rate v_s * tan(phi) / d, so the minimum turning radius is d / tan(max_phi).
"""
from __future__ import annotations

import math
from typing import List, Literal, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, field_validator, model_validator

from kinoplan.errors import InvalidInputError
from planning.geometry.helpers import WORD_SOLVERS, dubins_lengths

DEFAULT_DT = 0.02
Word = Literal["LSL", "RSR", "LSR", "RSL", "RLR", "LRL"]
WORDS: Tuple[str, ...] = tuple(WORD_SOLVERS)


def wrap_angle(a: float) -> float:
    w = (a + math.pi) % (2.0 * math.pi) - math.pi
    if w >= math.pi:
        w -= 2.0 * math.pi
    return w


def wrap_angles(a: np.ndarray) -> np.ndarray:
    w = np.mod(np.asarray(a, dtype=np.float64) + math.pi, 2.0 * math.pi) - math.pi
    return np.where(w >= math.pi, w - 2.0 * math.pi, w)


def _require_finite(**values: float) -> None:
    for name, v in values.items():
        if not math.isfinite(v):
            raise InvalidInputError(f"{name} must be finite, got {v}")


# ---- Models ----
class Pose2D(BaseModel):
    x: float
    y: float
    theta: float

    model_config = {"frozen": True}

    @field_validator("x", "y", "theta")
    @classmethod
    def _finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("pose fields must be finite")
        return v

    @field_validator("theta")
    @classmethod
    def _wrap(cls, v: float) -> float:
        return wrap_angle(v)

    @classmethod
    def of(cls, x: float, y: float, theta: float = 0.0) -> "Pose2D":
        return cls(x=float(x), y=float(y), theta=float(theta))

    @classmethod
    def from_array(cls, a: Sequence[float]) -> "Pose2D":
        return cls(x=float(a[0]), y=float(a[1]), theta=float(a[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta], dtype=np.float64)

    def distance_to(self, other: "Pose2D") -> float:
        return math.hypot(other.x - self.x, other.y - self.y)

    def heading_error(self, other: "Pose2D") -> float:
        return abs(wrap_angle(other.theta - self.theta))

    def within(self, other: "Pose2D", pos_tol: float, ang_tol: float) -> bool:
        return self.distance_to(other) <= pos_tol and self.heading_error(other) <= ang_tol


class VehicleModel(BaseModel):
    speed_vs: float = 0.5
    wheelbase_d: float = 0.3
    max_steer_phi: float = 0.5

    model_config = {"extra": "ignore", "frozen": True}

    @model_validator(mode="after")
    def _check(self) -> "VehicleModel":
        if not self.speed_vs > 0:
            raise ValueError("speed_vs must be > 0")
        if not self.wheelbase_d > 0:
            raise ValueError("wheelbase_d must be > 0")
        if not 0 < self.max_steer_phi < math.pi / 2:
            raise ValueError("max_steer_phi must lie in (0, pi/2)")
        return self

    @property
    def rho(self) -> float:
        return self.wheelbase_d / math.tan(self.max_steer_phi)

    def yaw_rate(self, phi: float) -> float:
        return self.speed_vs * math.tan(phi) / self.wheelbase_d


class DubinsPath(BaseModel):
    word: Word
    segment_params: Tuple[float, float, float]
    rho: float
    start: Pose2D
    end: Pose2D

    model_config = {"frozen": True}

    @property
    def segment_lengths(self) -> Tuple[float, float, float]:
        # arcs are stored in radians, the straight of a CSC word in meters
        return tuple(
            p if kind == "S" else p * self.rho
            for kind, p in zip(self.word, self.segment_params)
        )

    @property
    def length(self) -> float:
        return float(sum(self.segment_lengths))


class Trajectory(BaseModel):
    """
    Dense pose sequence built from Dubins segments. waypoint_indices[k] is the
    index in poses where segments[k] starts; the final index is len(poses) - 1.
    """
    poses: List[Pose2D]
    segments: List[DubinsPath]
    waypoint_indices: List[int]

    model_config = {"frozen": True}

    @property
    def start(self) -> Pose2D:
        return self.poses[0]

    @property
    def end(self) -> Pose2D:
        return self.poses[-1]

    @property
    def total_length(self) -> float:
        return float(sum(s.length for s in self.segments))

    @property
    def words(self) -> List[str]:
        return [s.word for s in self.segments]

    def waypoints(self) -> List[Pose2D]:
        return [self.poses[i] for i in self.waypoint_indices]

    def as_array(self) -> np.ndarray:
        return np.array([[p.x, p.y, p.theta] for p in self.poses], dtype=np.float64)

    @classmethod
    def from_path(cls, path: DubinsPath, step: float) -> "Trajectory":
        poses = sample_dubins(path, step)
        return cls(poses=poses, segments=[path], waypoint_indices=[0, len(poses) - 1])

    def concat(self, other: "Trajectory") -> "Trajectory":
        if self.end.distance_to(other.start) > 1e-9 or self.end.heading_error(other.start) > 1e-9:
            raise InvalidInputError("trajectories do not join")
        offset = len(self.poses) - 1
        indices = self.waypoint_indices[:-1] + [i + offset for i in other.waypoint_indices]
        return Trajectory(
            poses=self.poses + other.poses[1:],
            segments=self.segments + other.segments,
            waypoint_indices=indices,
        )


# ---- Kinematics ----
def _dynamics(theta: float, v: float, omega: float) -> Tuple[float, float, float]:
    return v * math.cos(theta), v * math.sin(theta), omega


def _check_step(pose: Pose2D, model: VehicleModel, phi: float, dt: float) -> None:
    _require_finite(phi=phi, dt=dt)
    if dt <= 0:
        raise InvalidInputError(f"dt must be > 0, got {dt}")
    if abs(phi) > model.max_steer_phi + 1e-12:
        raise InvalidInputError(f"|phi|={abs(phi)} exceeds max_steer_phi={model.max_steer_phi}")


def integrate_kinematics(pose: Pose2D, model: VehicleModel, phi: float, dt: float = DEFAULT_DT) -> Pose2D:
    """
    Advance the Dubins car by dt holding steering phi, one classical RK4 step.
    """
    _check_step(pose, model, phi, dt)
    v, omega = model.speed_vs, model.yaw_rate(phi)
    x, y, th = pose.x, pose.y, pose.theta
    k1 = _dynamics(th, v, omega)
    k2 = _dynamics(th + 0.5 * dt * k1[2], v, omega)
    k3 = _dynamics(th + 0.5 * dt * k2[2], v, omega)
    k4 = _dynamics(th + dt * k3[2], v, omega)
    x += dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    y += dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    th += dt / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
    return Pose2D(x=x, y=y, theta=th)


def euler_update(x: float, y: float, theta: float, v: float, omega: float, dt: float) -> Tuple[float, float, float]:
    # shared by euler_step and the NMPC transcription; theta is left unwrapped
    return x + dt * v * math.cos(theta), y + dt * v * math.sin(theta), theta + dt * omega


def euler_step(pose: Pose2D, model: VehicleModel, phi: float, dt: float) -> Pose2D:
    _check_step(pose, model, phi, dt)
    x, y, th = euler_update(pose.x, pose.y, pose.theta, model.speed_vs, model.yaw_rate(phi), dt)
    return Pose2D(x=x, y=y, theta=th)


def rollout(pose: Pose2D, model: VehicleModel, phis: Sequence[float], dt: float = DEFAULT_DT) -> List[Pose2D]:
    out = [pose]
    for phi in phis:
        out.append(integrate_kinematics(out[-1], model, phi, dt))
    return out


# ---- Dubins ----
def dubins_shortest(start: Pose2D, goal: Pose2D, rho: float) -> DubinsPath:
    """
    Shortest of the six Dubins words from start to goal. Equal lengths keep
    the earlier word in LSL, RSR, LSR, RSL, RLR, LRL order.
    """
    _require_finite(rho=rho)
    if rho <= 0:
        raise InvalidInputError(f"rho must be > 0, got {rho}")
    dx, dy = goal.x - start.x, goal.y - start.y
    dist = math.hypot(dx, dy)
    if dist < 1e-12 and start.heading_error(goal) < 1e-12:
        return DubinsPath(word="LSL", segment_params=(0.0, 0.0, 0.0), rho=rho, start=start, end=goal)

    d = dist / rho
    phi = math.atan2(dy, dx)
    alpha = (start.theta - phi) % (2 * math.pi)
    beta = (goal.theta - phi) % (2 * math.pi)

    best_word, best_params, best_len = None, None, math.inf
    for word, solver in WORD_SOLVERS.items():
        res = solver(alpha, beta, d)
        if res is None:
            continue
        t, p, q = res
        total = (t + p + q) * rho
        if total < best_len - 1e-12:
            best_word, best_params, best_len = word, (t, p, q), total

    t, p, q = best_params
    if best_word[1] == "S":
        p = p * rho
    return DubinsPath(word=best_word, segment_params=(t, p, q), rho=rho, start=start, end=goal)


def dubins_length(start: Pose2D, goal: Pose2D, rho: float) -> float:
    return float(dubins_lengths(start.as_array(), goal.as_array(), rho)[0])


def _advance(x, y, th, kind: str, s, rho: float):
    # closed-form motion along one segment; works on floats or arrays of s
    if kind == "S":
        return x + s * np.cos(th), y + s * np.sin(th), th + 0.0 * s
    if kind == "L":
        th2 = th + s / rho
        return x + rho * (np.sin(th2) - np.sin(th)), y + rho * (np.cos(th) - np.cos(th2)), th2
    th2 = th - s / rho
    return x + rho * (np.sin(th) - np.sin(th2)), y + rho * (np.cos(th2) - np.cos(th)), th2


def _segment_starts(path: DubinsPath) -> List[Tuple[float, float, float]]:
    x, y, th = path.start.x, path.start.y, path.start.theta
    starts = []
    for kind, seg_len in zip(path.word, path.segment_lengths):
        starts.append((x, y, th))
        x, y, th = (float(v) for v in _advance(x, y, th, kind, seg_len, path.rho))
    return starts


def pose_at(path: DubinsPath, s: float) -> Pose2D:
    """Pose at arc length s along the path (clamped to [0, length])."""
    return Pose2D.from_array(poses_at(path, np.array([s]))[0])


def poses_at(path: DubinsPath, s: np.ndarray) -> np.ndarray:
    s = np.clip(np.asarray(s, dtype=np.float64), 0.0, path.length)
    out = np.empty((s.size, 3), dtype=np.float64)
    offset = 0.0
    lengths = path.segment_lengths
    for k, ((x, y, th), kind, seg_len) in enumerate(zip(_segment_starts(path), path.word, lengths)):
        last = k == 2
        mask = (s >= offset) & ((s < offset + seg_len) | last)
        if np.any(mask):
            px, py, pth = _advance(x, y, th, kind, s[mask] - offset, path.rho)
            out[mask] = np.column_stack([px, py, pth])
        offset += seg_len
    out[:, 2] = wrap_angles(out[:, 2])
    return out


def sample_dubins_array(path: DubinsPath, step: float) -> np.ndarray:
    if not step > 0:
        raise InvalidInputError(f"step must be > 0, got {step}")
    total = path.length
    if total <= 0.0:
        return path.start.as_array()[None, :]
    n = max(1, math.ceil(total / step - 1e-9))
    out = poses_at(path, np.linspace(0.0, total, n + 1))
    out[0] = path.start.as_array()
    out[-1] = path.end.as_array()
    return out


def sample_dubins(path: DubinsPath, step: float) -> List[Pose2D]:
    """
    Uniformly spaced samples, no two more than step apart in arc length;
    first and last samples are the path's start and end poses exactly.
    """
    arr = sample_dubins_array(path, step)
    if len(arr) == 1:
        return [path.start]
    return [path.start] + [Pose2D.from_array(row) for row in arr[1:-1]] + [path.end]


def resample_trajectory(traj: Trajectory, spacing: float) -> List[Pose2D]:
    """
    Arc-length resampling along the trajectory's Dubins segments into
    round(L / spacing) equal pieces (at least one). Endpoints are kept exactly.
    """
    if not spacing > 0:
        raise InvalidInputError(f"spacing must be > 0, got {spacing}")
    total = traj.total_length
    n = max(1, int(round(total / spacing)))
    targets = np.linspace(0.0, total, n + 1)
    rows = np.empty((n + 1, 3))
    offset = 0.0
    for k, seg in enumerate(traj.segments):
        last = k == len(traj.segments) - 1
        mask = (targets >= offset) & ((targets < offset + seg.length) | last)
        if np.any(mask):
            rows[mask] = poses_at(seg, targets[mask] - offset)
        offset += seg.length
    poses = [Pose2D.from_array(r) for r in rows[1:-1]]
    return [traj.start] + poses + [traj.end]
