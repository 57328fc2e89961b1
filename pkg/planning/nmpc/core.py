# planning/nmpc/core.py
"""
Finite-horizon tracking of a planned trajectory.

The horizon is transcribed by single shooting over the Euler update shared
with geometry.euler_step, and minimized by projected gradient descent with
an Armijo backtracking line search on the analytic adjoint gradient.

    J = sum_t w_s |s(t) - s_ref(t)| + w_u |phi(t)| + w_a |phi(t) - phi(t-1)|

Norms are smoothed as sqrt(|.|^2 + eps^2) unless squared_norms is set.
"""
from __future__ import annotations

import math
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, model_validator

from kinoplan.errors import InvalidInputError
from kinoplan.log import get_logger
from planning.geometry.core import (
    DEFAULT_DT,
    Pose2D,
    Trajectory,
    VehicleModel,
    euler_update,
    integrate_kinematics,
    wrap_angles,
)
from planning.nmpc.helpers import ReferencePath, resample_reference

_logger = get_logger("kinoplan.nmpc")

CSV_COLUMNS = ["t", "x", "y", "theta", "phi", "cross_track_err", "objective"]


# ---- Models ----
class NMPCConfig(BaseModel):
    horizon_N: int = 10
    dt: float = 0.1
    w_s: float = 1.0
    w_u: float = 0.1
    w_a: float = 0.5
    v_s: float = 0.5
    phi_bounds: Tuple[float, float] = (-0.5, 0.5)
    max_solver_iters: int = 60
    convergence_tol: float = 1e-7
    squared_norms: bool = False
    norm_eps: float = 1e-6
    initial_step: float = 0.5
    armijo_c: float = 1e-4
    multi_start: int = 5
    adaptive_horizon: bool = False
    min_horizon: int = 4
    ref_spacing: Optional[float] = None
    divergence_threshold: float = 4.0

    model_config = {"extra": "ignore"}

    @model_validator(mode="after")
    def _check(self) -> "NMPCConfig":
        if self.horizon_N < 1 or not self.dt > 0:
            raise ValueError("horizon_N >= 1 and dt > 0 are required")
        if min(self.w_s, self.w_u, self.w_a) < 0:
            raise ValueError("weights must be >= 0")
        lo, hi = self.phi_bounds
        if not -math.pi / 2 < lo <= hi < math.pi / 2:
            raise ValueError("phi_bounds must lie inside (-pi/2, pi/2)")
        if self.max_solver_iters < 0 or self.multi_start < 0:
            raise ValueError("max_solver_iters and multi_start must be >= 0")
        return self

    @property
    def spacing(self) -> float:
        return self.ref_spacing or self.v_s * self.dt


class NMPCSolution(BaseModel):
    phi: np.ndarray
    predicted: np.ndarray
    references: np.ndarray
    objective: float
    iterations: int
    degraded: bool
    horizon: int

    model_config = {"arbitrary_types_allowed": True}

    @property
    def first_phi(self) -> float:
        return float(self.phi[0])


class DisturbanceSpec(BaseModel):
    heading_noise_std: float = 0.0
    seed: int = 0

    model_config = {"extra": "ignore"}


class EpisodeLog(BaseModel):
    rows: List[Dict[str, float]] = Field(default_factory=list)
    success: bool = False
    failure_reason: Optional[str] = None
    degraded_solves: int = 0
    final_pose: Optional[Pose2D] = None

    @property
    def max_cross_track(self) -> float:
        return max((r["cross_track_err"] for r in self.rows), default=0.0)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=CSV_COLUMNS)


# ---- Transcription ----
def _norm_terms(v: np.ndarray, config: NMPCConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Row-wise norm value and its derivative w.r.t. v (v is (n,) or (n, k))."""
    vv = v if v.ndim == 2 else v[:, None]
    sq = np.sum(vv * vv, axis=1)
    if config.squared_norms:
        return sq, (2.0 * vv).reshape(v.shape)
    n = np.sqrt(sq + config.norm_eps ** 2)
    return n, (vv / n[:, None]).reshape(v.shape)


def predict_states(state: Pose2D, phis: np.ndarray, config: NMPCConfig, model: VehicleModel) -> np.ndarray:
    v, d, dt = config.v_s, model.wheelbase_d, config.dt
    states = np.empty((len(phis) + 1, 3))
    states[0] = (state.x, state.y, state.theta)
    for t, phi in enumerate(phis):
        x, y, th = states[t]
        states[t + 1] = euler_update(x, y, th, v, v * math.tan(phi) / d, dt)
    return states


def objective(
    phis: np.ndarray, state: Pose2D, refs: np.ndarray, config: NMPCConfig, model: VehicleModel, prev_phi: float = 0.0
) -> float:
    return objective_and_gradient(phis, state, refs, config, model, prev_phi, need_grad=False)[0]


def objective_and_gradient(
    phis: np.ndarray,
    state: Pose2D,
    refs: np.ndarray,
    config: NMPCConfig,
    model: VehicleModel,
    prev_phi: float = 0.0,
    need_grad: bool = True,
) -> Tuple[float, Optional[np.ndarray], np.ndarray]:
    """
    Objective, d objective / d phis and the predicted states. refs holds the
    N + 1 reference poses; s(0) is the current state.
    """
    phis = np.asarray(phis, dtype=np.float64)
    N = len(phis)
    if refs.shape != (N + 1, 3):
        raise InvalidInputError(f"refs must be ({N + 1}, 3), got {refs.shape}")
    states = predict_states(state, phis, config, model)

    err = states - refs
    err[:, 2] = wrap_angles(err[:, 2])
    s_val, s_der = _norm_terms(err, config)
    prev = np.concatenate([[prev_phi], phis[:-1]])
    delta = phis - prev
    u_val, u_der = _norm_terms(phis, config)
    a_val, a_der = _norm_terms(delta, config)
    J = float(config.w_s * s_val.sum() + config.w_u * u_val.sum() + config.w_a * a_val.sum())
    if not need_grad:
        return J, None, states

    v, d, dt = config.v_s, model.wheelbase_d, config.dt
    grad = config.w_u * u_der + config.w_a * a_der
    grad[:-1] -= config.w_a * a_der[1:]
    lam = config.w_s * s_der[N].copy()
    for t in range(N - 1, -1, -1):
        grad[t] += lam[2] * dt * v / (d * math.cos(phis[t]) ** 2)
        if t == 0:
            break
        th = states[t, 2]
        lam[2] += dt * v * (-math.sin(th) * lam[0] + math.cos(th) * lam[1])
        lam += config.w_s * s_der[t]
    return J, grad, states


# ---- Reference window ----
def effective_horizon(ref: ReferencePath, s0: float, config: NMPCConfig, model: VehicleModel) -> int:
    N = config.horizon_N
    if not config.adaptive_horizon:
        return N
    kappa = ref.mean_curvature(s0, s0 + N * config.v_s * config.dt)
    shrink = 0.5 * min(1.0, kappa * model.rho)
    return max(min(config.min_horizon, N), int(round(N * (1.0 - shrink))))


def reference_window(
    state: Pose2D, ref: ReferencePath, config: NMPCConfig, model: VehicleModel, progress: Optional[float] = None,
) -> Tuple[float, np.ndarray]:
    """
    Arc length of the projected state and the N + 1 reference poses spaced
    v_s * dt apart from it. `progress` limits the projection to the stretch
    just behind and ahead of the previous projection.
    """
    if progress is None:
        s0, _ = ref.project(state.x, state.y)
    else:
        reach = config.horizon_N * config.v_s * config.dt + 2.0 * ref.spacing
        s0, _ = ref.project(state.x, state.y, progress - ref.spacing, progress + reach)
    N = effective_horizon(ref, s0, config, model)
    return s0, ref.interpolate(s0 + np.arange(N + 1) * config.v_s * config.dt)


# ---- Solver ----
def _starts(N: int, config: NMPCConfig, warm_start: Optional[np.ndarray]) -> List[np.ndarray]:
    lo, hi = config.phi_bounds
    starts = [np.zeros(N)]
    if config.multi_start > 0:
        starts += [np.full(N, c) for c in np.linspace(lo, hi, config.multi_start)]
    if warm_start is not None and len(warm_start) > 0:
        w = np.asarray(warm_start, dtype=np.float64)
        w = np.concatenate([w[1:], w[-1:]]) if len(w) > 1 else w
        w = np.resize(w, N) if len(w) != N else w
        starts.append(np.clip(w, lo, hi))
    return starts


def solve_nmpc(
    state: Pose2D,
    ref: ReferencePath,
    config: NMPCConfig,
    model: Optional[VehicleModel] = None,
    prev_phi: float = 0.0,
    warm_start: Optional[np.ndarray] = None,
    progress: Optional[float] = None,
) -> NMPCSolution:
    """
    Best control sequence over the horizon. Never raises for slow convergence:
    hitting max_solver_iters returns the best iterate flagged degraded.
    """
    model = model or VehicleModel(speed_vs=config.v_s)
    if len(ref.nodes) < 2:
        raise InvalidInputError("reference needs at least 2 nodes")
    _, refs = reference_window(state, ref, config, model, progress)
    N = len(refs) - 1
    lo, hi = config.phi_bounds

    def f(p: np.ndarray) -> float:
        return objective(p, state, refs, config, model, prev_phi)

    phi = min(_starts(N, config, warm_start), key=f)
    J, g, _ = objective_and_gradient(phi, state, refs, config, model, prev_phi)
    step = config.initial_step
    converged = False
    iterations = 0
    for iterations in range(1, config.max_solver_iters + 1):
        if np.linalg.norm(np.clip(phi - g, lo, hi) - phi) < 1e-12:
            converged = True
            break
        alpha, accepted = step, False
        for _ in range(40):
            cand = np.clip(phi - alpha * g, lo, hi)
            J_cand = f(cand)
            if J_cand <= J + config.armijo_c * float(g @ (cand - phi)):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            converged = True
            break
        decrease = J - J_cand
        phi = cand
        J, g, _ = objective_and_gradient(phi, state, refs, config, model, prev_phi)
        step = min(2.0 * alpha, config.initial_step)
        if decrease < config.convergence_tol:
            converged = True
            break
    else:
        converged = config.max_solver_iters == 0

    return NMPCSolution(
        phi=phi,
        predicted=predict_states(state, phi, config, model),
        references=refs,
        objective=J,
        iterations=iterations,
        degraded=not converged,
        horizon=N,
    )


# ---- Closed loop ----
class NMPCTracker:
    """Receding-horizon controller that keeps the warm start and progress between calls."""

    def __init__(self, config: NMPCConfig, model: VehicleModel):
        self.config = config
        self.model = model
        self.ref: Optional[ReferencePath] = None
        self.prev_phi = 0.0
        self.progress: Optional[float] = None
        self._warm: Optional[np.ndarray] = None
        self.degraded_solves = 0

    def set_reference(self, traj: Trajectory) -> None:
        self.ref = resample_reference(traj, self.config.spacing)
        self.progress = None
        self._warm = None

    def control(self, pose: Pose2D) -> NMPCSolution:
        if self.ref is None:
            raise InvalidInputError("no reference set")
        sol = solve_nmpc(pose, self.ref, self.config, self.model, self.prev_phi, self._warm, self.progress)
        if sol.degraded:
            self.degraded_solves += 1
            _logger.debug("NMPC solve hit the iteration cap (objective %.4g)", sol.objective)
        self._warm = sol.phi
        self.prev_phi = sol.first_phi
        self.progress = self.ref.project(pose.x, pose.y, *self._window())[0]
        return sol

    def _window(self) -> Tuple[Optional[float], Optional[float]]:
        if self.progress is None:
            return None, None
        reach = self.config.horizon_N * self.config.v_s * self.config.dt + 2.0 * self.ref.spacing
        return self.progress - self.ref.spacing, self.progress + reach

    def cross_track(self, pose: Pose2D) -> float:
        return self.ref.project(pose.x, pose.y, *self._window())[1]

    def lookahead(self, pose: Pose2D, distance: float) -> Pose2D:
        """Reference pose `distance` past the projection of `pose`, clamped to the end."""
        s0 = self.ref.project(pose.x, pose.y, *self._window())[0]
        x, y, th = self.ref.interpolate(np.array([s0 + distance]))[0]
        return Pose2D.of(x, y, th)

    @property
    def finished(self) -> bool:
        return self.progress is not None and self.progress >= self.ref.total_length - 0.5 * self.config.spacing


def apply_control(pose: Pose2D, model: VehicleModel, phi: float, dt: float, sim_dt: float = DEFAULT_DT) -> Pose2D:
    """Hold phi for dt, integrated with RK4 substeps of at most sim_dt."""
    phi = float(np.clip(phi, -model.max_steer_phi, model.max_steer_phi))
    n = max(1, int(math.ceil(dt / sim_dt - 1e-9)))
    for _ in range(n):
        pose = integrate_kinematics(pose, model, phi, dt / n)
    return pose


def track_episode(
    traj: Trajectory,
    start: Pose2D,
    config: NMPCConfig,
    model: Optional[VehicleModel] = None,
    disturbance: Optional[DisturbanceSpec] = None,
    goal_pos_tol: float = 0.2,
    goal_ang_tol: float = math.radians(15.0),
    max_steps: Optional[int] = None,
) -> EpisodeLog:
    """
    Closed-loop tracking of `traj` from `start`. Ends on reaching the final
    pose within tolerance, on divergence, or at the step cap; failures are
    reported in the log, never raised.
    """
    base = model or VehicleModel(speed_vs=config.v_s)
    sim_model = base.model_copy(update={"speed_vs": config.v_s})
    disturbance = disturbance or DisturbanceSpec()
    rng = np.random.default_rng(disturbance.seed)
    log = EpisodeLog(final_pose=start)
    if traj.total_length <= 1e-9:
        log.success = True
        return log

    tracker = NMPCTracker(config, sim_model)
    tracker.set_reference(traj)
    goal = traj.end
    if max_steps is None:
        max_steps = int(math.ceil(2.0 * traj.total_length / (config.v_s * config.dt))) + 20
    pose = start
    for k in range(max_steps):
        if pose.within(goal, goal_pos_tol, goal_ang_tol):
            log.success = True
            break
        sol = tracker.control(pose)
        pose = apply_control(pose, sim_model, sol.first_phi, config.dt)
        if disturbance.heading_noise_std > 0:
            pose = Pose2D.of(pose.x, pose.y, pose.theta + rng.normal(0.0, disturbance.heading_noise_std))
        cte = tracker.cross_track(pose)
        log.rows.append({
            "t": (k + 1) * config.dt, "x": pose.x, "y": pose.y, "theta": pose.theta,
            "phi": sol.first_phi, "cross_track_err": cte, "objective": sol.objective,
        })
        if cte > config.divergence_threshold:
            log.failure_reason = "diverged"
            break
    else:
        if pose.within(goal, goal_pos_tol, goal_ang_tol):
            log.success = True
        else:
            log.failure_reason = "step_cap"
    log.final_pose = pose
    log.degraded_solves = tracker.degraded_solves
    return log


def export_episode_csv(log: EpisodeLog, path: str | Path) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    log.to_frame().to_csv(p, index=False)
