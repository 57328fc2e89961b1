# runners/genmap_runner.py
from __future__ import annotations

import argparse

from kinoplan.config_loader import ConfigModel
from kinoplan.run_log import logged_run
from planning.costmap.helpers import save_costmap
from planning.navsim.gridworld import generate_gridworld, obstacle_density
from runners.common import add_out, add_seed, manifest_meta, out_dir, resolve_seed

NAME = "genmap"
HELP = "generate a seeded grid-world map file"


def add_arguments(p: argparse.ArgumentParser) -> None:
    p.add_argument("--size", type=int, default=None, help="map side in cells")
    p.add_argument("--corridor-width", type=int, default=None, help="corridor width in cells")
    p.add_argument("--count", type=int, default=1, help="number of maps, seeds seed .. seed+count-1")
    add_seed(p)
    add_out(p, "runs/maps")


def run(args: argparse.Namespace, cfg: ConfigModel) -> int:
    seed = resolve_seed(args, cfg)
    update = {"seed": seed}
    if args.size is not None:
        update["size"] = args.size
    if args.corridor_width is not None:
        update["corridor_width"] = args.corridor_width
    base = cfg.gridworld.model_copy(update=update)
    out = out_dir(args)
    with logged_run(NAME, out, manifest_meta(args, cfg, {"seed": seed})) as details:
        written = []
        for k in range(max(1, args.count)):
            world = generate_gridworld(base.model_copy(update={"seed": seed + k}), cfg.costmap.footprint)
            path = out / f"{world.map_id}.txt"
            save_costmap(world.costmap, path)
            written.append({"path": str(path), "density": obstacle_density(world.costmap), "connected": world.connected})
        details["maps"] = written
    print(f"genmap complete: {len(written)} map(s) written to {out}")
    return 0
