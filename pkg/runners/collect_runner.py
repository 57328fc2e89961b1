# runners/collect_runner.py
from __future__ import annotations

import argparse
import json

from kinoplan.config_loader import ConfigModel
from kinoplan.run_log import logged_run
from planning.costmap.helpers import load_costmap
from planning.dataset.core import collect, encode_records
from planning.dataset.helpers import save_dataset
from planning.navsim.gridworld import generate_gridworld
from runners.common import add_out, add_seed, manifest_meta, out_dir, resolve_seed

NAME = "collect"
HELP = "collect RRT* expert trajectories and encode them as a training dataset"


def add_arguments(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--maps", nargs="+", help="map files")
    src.add_argument("--gridworlds", type=int, help="generate this many seeded grid worlds")
    p.add_argument("--n", type=int, required=True, help="number of planning problems")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--no-augment", action="store_true", help="skip sub-path augmentation")
    add_seed(p)
    add_out(p, "runs/collect")


def run(args: argparse.Namespace, cfg: ConfigModel) -> int:
    seed = resolve_seed(args, cfg)
    workers = args.workers or cfg.run_settings.workers
    if args.maps:
        maps = [load_costmap(m) for m in args.maps]
    else:
        maps = [
            generate_gridworld(cfg.gridworld.model_copy(update={"seed": seed + k}), cfg.costmap.footprint).costmap
            for k in range(args.gridworlds)
        ]
    out = out_dir(args)
    l = cfg.collect.window_l
    with logged_run(NAME, out, manifest_meta(args, cfg, {"seed": seed})) as details:
        records = collect(maps, args.n, cfg.vehicle, cfg.rrtstar, seed, workers, cfg.collect)
        dataset = encode_records(
            records, {m.map_id: m for m in maps}, l,
            augment_paths=not args.no_augment, augment_limit=cfg.collect.augment_limit,
        )
        path = out / cfg.paths.dataset_name
        save_dataset(path, dataset, version=2)
        (out / "records.json").write_text(
            json.dumps([r.model_dump(mode="json") for r in records], indent=2), encoding="utf-8"
        )
        details.update({"trajectories": len(records), "tuples": len(dataset), "dataset": str(path)})
    print(f"collect complete: {len(records)} trajectories, {len(dataset)} tuples written to {path}")
    return 0
