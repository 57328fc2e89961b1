# runners/common.py
from __future__ import annotations

import argparse
import math
from pathlib import Path
from typing import Any, Dict, Optional, Union

from kinoplan.config_loader import ConfigModel
from kinoplan.log import get_logger
from planning.geometry.core import Pose2D
from planning.neuralnet.core import NetworkParams, RandomProposer
from planning.neuralnet.helpers import load_weights

_logger = get_logger("kinoplan.cli")


def pose_arg(text: str) -> Pose2D:
    """argparse type for 'x,y,deg'."""
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected x,y,deg, got {text!r}")
    try:
        x, y, deg = (float(p) for p in parts)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from e
    return Pose2D.of(x, y, math.radians(deg))


def int_list_arg(text: str) -> list:
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from e


def add_seed(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="overrides run_settings.seed")


def add_out(parser: argparse.ArgumentParser, default: str) -> None:
    parser.add_argument("--out", default=default, help="output directory")


def resolve_seed(args: argparse.Namespace, cfg: ConfigModel) -> int:
    return cfg.run_settings.seed if getattr(args, "seed", None) is None else int(args.seed)


def load_net(path: Optional[str], window_l: int) -> Union[NetworkParams, RandomProposer]:
    """Trained weights, or the uniform-random proposer when no file is given."""
    if path is None:
        _logger.info("no weights given, proposals are uniform random")
        return RandomProposer(window_l)
    return load_weights(path)


def manifest_meta(args: argparse.Namespace, cfg: ConfigModel, seeds: Dict[str, Any]) -> Dict[str, Any]:
    argv = {k: v for k, v in vars(args).items() if k != "runner"}
    return {"args": argv, "seeds": seeds, "config": cfg.model_dump(mode="json")}


def out_dir(args: argparse.Namespace) -> Path:
    p = Path(args.out)
    p.mkdir(parents=True, exist_ok=True)
    return p
