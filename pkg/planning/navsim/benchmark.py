# planning/navsim/benchmark.py
"""
Benchmark harness: runs every (planner, task) episode, merges the results in
task order, and reports success rate, per-cycle latency and average speed.

Average speed is the slope of the least-squares line through the origin of
distance against time over the successful episodes.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np
import pandas as pd
from pydantic import BaseModel, Field
from tqdm import tqdm

from kinoplan.errors import InvalidInputError
from kinoplan.log import get_logger
from planning.costmap.core import crop_window, pad
from planning.geometry.core import VehicleModel
from planning.mpnet.core import DEFAULT_SAMPLE_COUNTS, PlannerConfig, latency_samples
from planning.navsim.core import PLANNER_KINDS, EpisodeResult, NavSimConfig, NavTask, run_episode
from planning.navsim.gridworld import WorldMap
from planning.neuralnet.core import NetworkParams, Proposer, RandomProposer
from planning.nmpc.core import NMPCConfig
from planning.rrtstar.core import RRTStarConfig

_logger = get_logger("kinoplan.benchmark")

MIN_TASKS = 10
CSV_COLUMNS = ["planner", "task_id", "success", "distance_m", "time_s", "replans", "mean_cycle_ms"]

# Values measured on the physical vehicle, kept for side-by-side reading only.
REFERENCE_NOTES = {
    "success_rate_unseen_map": {"mpnet": 0.80, "anytime_rrt_star": 0.74, "dwa": 0.47},
    "average_speed_mps": {"mpnet": 0.340, "anytime_rrt_star": 0.211},
    "latency_median_ms": {"5": 11.33, "10": 15.29, "25": 22.07, "50": 44.67},
}


class SpeedFit(BaseModel):
    slope: float
    stderr: float
    n: int


class PlannerSummary(BaseModel):
    planner: str
    n_tasks: int
    n_success: int
    success_rate: float
    speed: Optional[SpeedFit] = None
    mean_cycle_ms: float = 0.0
    replans: int = 0
    latency_quartiles_ms: Dict[int, Tuple[float, float, float]] = Field(default_factory=dict)


class BenchmarkConfig(BaseModel):
    nav: NavSimConfig = Field(default_factory=NavSimConfig)
    nmpc: NMPCConfig = Field(default_factory=NMPCConfig)
    planner: PlannerConfig = Field(default_factory=PlannerConfig)
    rrt: RRTStarConfig = Field(default_factory=RRTStarConfig)
    model: VehicleModel = Field(default_factory=VehicleModel)
    latency_counts: List[int] = Field(default_factory=lambda: list(DEFAULT_SAMPLE_COUNTS))
    latency_runs: int = 10

    model_config = {"extra": "ignore"}


class BenchmarkReport(BaseModel):
    summaries: Dict[str, PlannerSummary]
    results: List[EpisodeResult]
    csv_path: Optional[str] = None
    svg_path: Optional[str] = None
    summary_path: Optional[str] = None


# ---- Regression ----
def fit_average_speed(distances: Sequence[float], times: Sequence[float]) -> Optional[SpeedFit]:
    """
    Slope of distance = speed * time (no intercept) with its standard error.
    None when there is nothing to fit.
    """
    d = np.asarray(distances, dtype=np.float64)
    t = np.asarray(times, dtype=np.float64)
    if d.shape != t.shape:
        raise InvalidInputError(f"distances and times differ in length: {d.shape} vs {t.shape}")
    tt = float(t @ t)
    if d.size == 0 or tt <= 0.0:
        return None
    slope = float(t @ d) / tt
    resid = d - slope * t
    n = int(d.size)
    sigma2 = float(resid @ resid) / (n - 1) if n > 1 else 0.0
    return SpeedFit(slope=slope, stderr=math.sqrt(sigma2 / tt), n=n)


# ---- Episodes ----
def _run_job(job: Tuple[NavTask, WorldMap, str, Union[Proposer, NetworkParams, None], BenchmarkConfig]) -> EpisodeResult:
    task, world, kind, net, cfg = job
    return run_episode(task, world, kind, cfg.nav, cfg.nmpc, cfg.model, net=net, planner=cfg.planner, rrt=cfg.rrt)


def run_all(
    tasks: Sequence[NavTask],
    planners: Sequence[str],
    worlds: Dict[str, WorldMap],
    net: Union[Proposer, NetworkParams, None],
    cfg: BenchmarkConfig,
    workers: int = 1,
) -> List[EpisodeResult]:
    """Results ordered by planner then task, independent of the worker count."""
    jobs = []
    for kind in planners:
        if kind not in PLANNER_KINDS:
            raise InvalidInputError(f"unknown planner '{kind}'")
        for task in tasks:
            if task.map_id not in worlds:
                raise InvalidInputError(f"task {task.task_id} refers to unknown map '{task.map_id}'")
            jobs.append((task, worlds[task.map_id], kind, net, cfg))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(tqdm(pool.map(_run_job, jobs), total=len(jobs), desc="episodes"))
    return [_run_job(j) for j in tqdm(jobs, desc="episodes")]


def summarize(results: Sequence[EpisodeResult], planner: str) -> PlannerSummary:
    mine = [r for r in results if r.planner == planner]
    ok = [r for r in mine if r.success]
    cycles = [ms for r in mine for ms in r.cycle_ms]
    return PlannerSummary(
        planner=planner,
        n_tasks=len(mine),
        n_success=len(ok),
        success_rate=len(ok) / len(mine) if mine else 0.0,
        speed=fit_average_speed([r.total_distance for r in ok], [r.total_time for r in ok]),
        mean_cycle_ms=float(np.mean(cycles)) if cycles else 0.0,
        replans=sum(r.replanner_invocations for r in mine),
    )


def latency_quartiles(
    net: Union[Proposer, NetworkParams, None],
    world: WorldMap,
    task: NavTask,
    cfg: BenchmarkConfig,
) -> Dict[int, Tuple[float, float, float]]:
    """(q1, median, q3) plan time per sample count, measured in the window around the task start."""
    net = net if net is not None else RandomProposer(cfg.nav.window_l)
    padded = pad(crop_window(world.costmap, task.start, cfg.nav.window_l))
    out = {}
    for n in cfg.latency_counts:
        q1, q2, q3 = np.percentile(latency_samples(net, padded, cfg.planner, n, cfg.model, cfg.latency_runs), [25, 50, 75])
        out[int(n)] = (float(q1), float(q2), float(q3))
    return out


# ---- Outputs ----
def results_frame(results: Sequence[EpisodeResult]) -> pd.DataFrame:
    rows = [
        {
            "planner": r.planner,
            "task_id": r.task_id,
            "success": int(r.success),
            "distance_m": round(r.total_distance, 6),
            "time_s": round(r.total_time, 6),
            "replans": r.replanner_invocations,
            "mean_cycle_ms": round(r.mean_cycle_ms, 3),
        }
        for r in results
    ]
    return pd.DataFrame(rows, columns=CSV_COLUMNS)


def plot_speed_fit(results: Sequence[EpisodeResult], summaries: Dict[str, PlannerSummary], path: Path) -> None:
    """Distance-vs-time scatter per planner with the fitted line and a +/- 1 SE band."""
    plt.rcParams["svg.hashsalt"] = "kinoplan"
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    t_max = max((r.total_time for r in results if r.success), default=1.0)
    grid = np.linspace(0.0, t_max, 50)
    for k, (name, summary) in enumerate(summaries.items()):
        ok = [r for r in results if r.planner == name and r.success]
        color = f"C{k}"
        ax.scatter([r.total_time for r in ok], [r.total_distance for r in ok], s=12, color=color, label=name)
        if summary.speed is not None:
            fit = summary.speed
            ax.plot(grid, fit.slope * grid, color=color, lw=1.2,
                    label=f"{name} fit {fit.slope:.3f} m/s")
            ax.fill_between(grid, (fit.slope - fit.stderr) * grid, (fit.slope + fit.stderr) * grid,
                            color=color, alpha=0.2, lw=0)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("distance [m]")
    ax.legend(loc="upper left", fontsize=8)
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def benchmark(
    tasks: Sequence[NavTask],
    planners: Sequence[str],
    worlds: Dict[str, WorldMap],
    out_dir: str | Path,
    net: Union[Proposer, NetworkParams, None] = None,
    cfg: Optional[BenchmarkConfig] = None,
    workers: int = 1,
    measure_latency: bool = True,
) -> BenchmarkReport:
    if len(tasks) < MIN_TASKS:
        raise InvalidInputError(f"benchmark needs at least {MIN_TASKS} tasks, got {len(tasks)}")
    if not planners:
        raise InvalidInputError("no planners given")
    cfg = cfg or BenchmarkConfig()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    results = run_all(tasks, planners, worlds, net, cfg, workers)
    summaries = {p: summarize(results, p) for p in planners}
    if measure_latency and "mpnet" in summaries:
        first = tasks[0]
        summaries["mpnet"].latency_quartiles_ms = latency_quartiles(net, worlds[first.map_id], first, cfg)

    csv_path = out / "benchmark.csv"
    results_frame(results).to_csv(csv_path, index=False)
    svg_path = out / "speed_fit.svg"
    plot_speed_fit(results, summaries, svg_path)
    summary_path = out / "summary.json"
    payload = {
        "planners": {k: v.model_dump() for k, v in summaries.items()},
        "n_tasks": len(tasks),
        "reference_notes": REFERENCE_NOTES,
    }
    summary_path.write_text(json.dumps(payload, indent=2, default=str), encoding="utf-8")

    for s in summaries.values():
        speed = "absent" if s.speed is None else f"{s.speed.slope:.3f} +/- {s.speed.stderr:.3f} m/s"
        _logger.info("%s: success %d/%d, speed %s", s.planner, s.n_success, s.n_tasks, speed)
    return BenchmarkReport(
        summaries=summaries, results=list(results),
        csv_path=str(csv_path), svg_path=str(svg_path), summary_path=str(summary_path),
    )
