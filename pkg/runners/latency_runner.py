# runners/latency_runner.py
from __future__ import annotations

import argparse

import numpy as np
import pandas as pd

from kinoplan.config_loader import ConfigModel
from kinoplan.run_log import logged_run
from planning.costmap.core import Costmap, crop_window, pad
from planning.costmap.helpers import load_costmap
from planning.geometry.core import Pose2D
from planning.mpnet.core import DEFAULT_SAMPLE_COUNTS, REFERENCE_LATENCY_MS, latency_samples
from runners.common import add_out, add_seed, int_list_arg, load_net, manifest_meta, out_dir, resolve_seed

NAME = "latency"
HELP = "wall-clock plan time per number of network samples"


def add_arguments(p: argparse.ArgumentParser) -> None:
    p.add_argument("--weights", default=None)
    p.add_argument("--map", default=None, help="map file; an empty window when omitted")
    p.add_argument(
        "--counts", type=int_list_arg, default=None,
        help="e.g. 5,10,25,50; the reference counts plus planner.sample_resolution when omitted",
    )
    p.add_argument("--runs", type=int, default=30)
    add_seed(p)
    add_out(p, "runs/latency")


def run(args: argparse.Namespace, cfg: ConfigModel) -> int:
    seed = resolve_seed(args, cfg)
    net = load_net(args.weights, cfg.costmap.window_l)
    l, res = net.l, cfg.costmap.resolution
    if args.map:
        source = load_costmap(args.map)
        window = crop_window(source, source.center, l)
    else:
        window = Costmap(
            cells=np.zeros((l, l), dtype=np.uint8), resolution=res, origin=Pose2D.of(0.0, 0.0, 0.0), map_id="empty",
        )
    padded = pad(window)
    planner = cfg.planner.model_copy(update={"rng_seed": seed})
    counts = args.counts or sorted({*DEFAULT_SAMPLE_COUNTS, planner.sample_resolution})
    out = out_dir(args)
    with logged_run(NAME, out, manifest_meta(args, cfg, {"planner": seed})) as details:
        rows = []
        for n in counts:
            q1, med, q3 = np.percentile(latency_samples(net, padded, planner, n, cfg.vehicle, args.runs), [25, 50, 75])
            rows.append({
                "n_samples": n, "q1_ms": q1, "median_ms": med, "q3_ms": q3,
                "reference_ms": REFERENCE_LATENCY_MS.get(n, float("nan")),
            })
        table = pd.DataFrame(rows)
        table.to_csv(out / "latency.csv", index=False)
        details["median_ms"] = {int(r["n_samples"]): float(r["median_ms"]) for r in rows}
    summary = ", ".join(f"{r['n_samples']}: {r['median_ms']:.2f} ms" for r in rows)
    print(f"latency complete: {summary}")
    return 0
