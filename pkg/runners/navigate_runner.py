# runners/navigate_runner.py
from __future__ import annotations

import argparse

import pandas as pd

from kinoplan.config_loader import ConfigModel
from kinoplan.errors import InvalidInputError
from kinoplan.run_log import logged_run, write_json
from planning.costmap.helpers import load_costmap
from planning.navsim.core import PLANNER_KINDS, NavTask, generate_tasks, run_episode
from planning.navsim.gridworld import WorldMap, generate_gridworld
from runners.common import add_out, add_seed, load_net, manifest_meta, out_dir, pose_arg, resolve_seed

NAME = "navigate"
HELP = "run one closed-loop navigation episode"


def add_arguments(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--map", help="map file")
    src.add_argument("--gridworld-seed", type=int, help="generate the grid world with this seed")
    p.add_argument("--start", type=pose_arg, default=None, help="x,y,deg; random task when omitted")
    p.add_argument("--goal", type=pose_arg, default=None, help="x,y,deg; random task when omitted")
    p.add_argument("--planner", choices=PLANNER_KINDS, default="mpnet")
    p.add_argument("--weights", default=None)
    add_seed(p)
    add_out(p, "runs/navigate")


def _world(args: argparse.Namespace, cfg: ConfigModel) -> WorldMap:
    if args.map:
        return WorldMap.from_costmap(load_costmap(args.map), source_path=args.map)
    return generate_gridworld(cfg.gridworld.model_copy(update={"seed": args.gridworld_seed}), cfg.costmap.footprint)


def run(args: argparse.Namespace, cfg: ConfigModel) -> int:
    seed = resolve_seed(args, cfg)
    if (args.start is None) != (args.goal is None):
        raise InvalidInputError("--start and --goal go together")
    world = _world(args, cfg)
    if args.start is not None:
        task = NavTask(map_id=world.map_id, map_path=world.source_path, start=args.start, goal=args.goal, seed=seed)
    else:
        found = generate_tasks(world, 1, seed, footprint=cfg.navsim.footprint)
        if not found:
            raise InvalidInputError(f"no solvable task found on {world.map_id}")
        task = found[0]
    net = load_net(args.weights, cfg.navsim.window_l) if args.planner == "mpnet" else None
    out = out_dir(args)
    with logged_run(NAME, out, manifest_meta(args, cfg, {"episode": task.seed})) as details:
        result = run_episode(
            task, world, args.planner, cfg.navsim, cfg.nmpc, cfg.vehicle,
            net=net, planner=cfg.planner, rrt=cfg.rrtstar,
        )
        pd.DataFrame(result.trace, columns=["x", "y", "theta"]).to_csv(out / "trace.csv", index=False)
        write_json(
            {"task": task.model_dump(mode="json"), "result": result.model_dump(mode="json", exclude={"trace"})},
            out / "episode.json",
        )
        details.update({"success": result.success, "failure_reason": result.failure_reason})
    status = "reached goal" if result.success else f"failed ({result.failure_reason})"
    print(
        f"navigate complete: {status}, {result.total_distance:.2f} m in {result.total_time:.1f} s, "
        f"{result.replanner_invocations} replanner calls"
    )
    return 0 if result.success else 1
