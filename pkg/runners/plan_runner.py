# runners/plan_runner.py
from __future__ import annotations

import argparse
import json

import numpy as np
import pandas as pd

from kinoplan.config_loader import ConfigModel
from kinoplan.run_log import logged_run
from planning.costmap.core import Costmap, crop_window
from planning.costmap.helpers import load_costmap
from planning.geometry.core import Pose2D
from planning.mpnet.core import PlannerStats, RRTStarReplanner, dynamic_mpnet
from runners.common import add_out, add_seed, load_net, manifest_meta, out_dir, pose_arg, resolve_seed

NAME = "plan"
HELP = "plan one start/goal problem with the neural planner and RRT* fallback"


def add_arguments(p: argparse.ArgumentParser) -> None:
    p.add_argument("--map", required=True, help="map file")
    p.add_argument("--start", type=pose_arg, required=True, help="x,y,deg")
    p.add_argument("--goal", type=pose_arg, required=True, help="x,y,deg")
    p.add_argument("--weights", default=None, help="KPNN weights; uniform-random proposals when omitted")
    p.add_argument("--no-fallback", action="store_true", help="neural planner only")
    add_seed(p)
    add_out(p, "runs/plan")


def planning_window(costmap: Costmap, start: Pose2D, goal: Pose2D, l: int) -> Costmap:
    """The map itself when it is l x l, else the l x l window centered between start and goal."""
    if costmap.size_l == l:
        return costmap
    mid = Pose2D.of(0.5 * (start.x + goal.x), 0.5 * (start.y + goal.y), 0.0)
    return crop_window(costmap, mid, l)


def run(args: argparse.Namespace, cfg: ConfigModel) -> int:
    seed = resolve_seed(args, cfg)
    costmap = load_costmap(args.map)
    net = load_net(args.weights, cfg.costmap.window_l)
    window = planning_window(costmap, args.start, args.goal, net.l)
    planner = cfg.planner.model_copy(update={"rng_seed": seed})
    replanner = None if args.no_fallback else RRTStarReplanner(
        cfg.vehicle, cfg.rrtstar.model_copy(update={"rng_seed": seed})
    )
    out = out_dir(args)
    stats = PlannerStats()
    with logged_run(NAME, out, manifest_meta(args, cfg, {"planner": seed})) as details:
        traj = dynamic_mpnet(
            args.start, args.goal, window, net, replanner, planner, cfg.vehicle,
            np.random.default_rng(seed), stats,
        )
        (out / "stats.json").write_text(
            json.dumps(stats.model_dump(mode="json", exclude={"transform_centers"}), indent=2), encoding="utf-8"
        )
        if traj is None:
            details["solved"] = False
            print("plan failed: no path found")
            return 1
        pd.DataFrame(traj.as_array(), columns=["x", "y", "theta"]).to_csv(out / "path.csv", index=False)
        details.update({"solved": True, "length_m": traj.total_length, "replanner_calls": stats.replanner_calls})
    print(f"plan complete: path length {traj.total_length:.3f} m written to {out / 'path.csv'}")
    return 0
