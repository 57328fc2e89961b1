# runners/benchmark_runner.py
from __future__ import annotations

import argparse

from kinoplan.config_loader import ConfigModel
from kinoplan.errors import InvalidInputError
from kinoplan.run_log import logged_run
from planning.costmap.helpers import save_costmap
from planning.navsim.benchmark import BenchmarkConfig, benchmark
from planning.navsim.core import PLANNER_KINDS, generate_tasks
from planning.navsim.gridworld import generate_gridworld
from planning.navsim.helpers import load_suite, load_worlds, save_suite
from runners.common import add_out, add_seed, load_net, manifest_meta, out_dir, resolve_seed

NAME = "benchmark"
HELP = "run planners over a task suite and report success, latency and average speed"


def _planners(text: str) -> list:
    names = [p for p in text.split(",") if p]
    bad = [p for p in names if p not in PLANNER_KINDS]
    if bad or not names:
        raise argparse.ArgumentTypeError(f"planners must be drawn from {PLANNER_KINDS}, got {text!r}")
    return names


def add_arguments(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--suite", help="task suite file")
    src.add_argument("--gridworlds", type=int, help="generate a suite over this many seeded grid worlds")
    p.add_argument("--tasks-per-map", type=int, default=10)
    p.add_argument("--planners", type=_planners, default=list(PLANNER_KINDS))
    p.add_argument("--weights", default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--no-latency", action="store_true", help="skip the wall-clock latency table")
    add_seed(p)
    add_out(p, "runs/benchmark")


def run(args: argparse.Namespace, cfg: ConfigModel) -> int:
    seed = resolve_seed(args, cfg)
    workers = args.workers or cfg.navsim.workers
    out = out_dir(args)
    if args.suite:
        tasks = load_suite(args.suite)
    else:
        tasks = []
        for k in range(args.gridworlds):
            world = generate_gridworld(cfg.gridworld.model_copy(update={"seed": seed + k}), cfg.costmap.footprint)
            path = out / "maps" / f"{world.map_id}.txt"
            save_costmap(world.costmap, path)
            world = world.model_copy(update={"source_path": str(path)})
            for t in generate_tasks(world, args.tasks_per_map, seed + k, footprint=cfg.navsim.footprint):
                tasks.append(t.model_copy(update={"task_id": len(tasks)}))
        save_suite(tasks, out / "suite.txt")
    if not tasks:
        raise InvalidInputError("empty task suite")
    worlds = load_worlds(tasks)
    net = load_net(args.weights, cfg.navsim.window_l) if "mpnet" in args.planners else None
    bcfg = BenchmarkConfig(
        nav=cfg.navsim, nmpc=cfg.nmpc, planner=cfg.planner, rrt=cfg.rrtstar, model=cfg.vehicle,
    )
    with logged_run(NAME, out, manifest_meta(args, cfg, {"suite": seed, "tasks": [t.seed for t in tasks]})) as details:
        report = benchmark(
            tasks, args.planners, worlds, out, net=net, cfg=bcfg, workers=workers,
            measure_latency=not args.no_latency,
        )
        details.update({
            name: {"success_rate": s.success_rate, "speed": None if s.speed is None else s.speed.slope}
            for name, s in report.summaries.items()
        })
    rates = ", ".join(f"{n} {s.n_success}/{s.n_tasks}" for n, s in report.summaries.items())
    print(f"benchmark complete: {rates}; outputs in {out}")
    return 0
