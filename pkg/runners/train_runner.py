# runners/train_runner.py
from __future__ import annotations

import argparse

import pandas as pd

from kinoplan.config_loader import ConfigModel
from kinoplan.run_log import logged_run
from planning.dataset.helpers import load_dataset
from planning.neuralnet.core import load_checkpoint, train
from planning.neuralnet.helpers import save_weights
from runners.common import add_out, add_seed, manifest_meta, out_dir, resolve_seed

NAME = "train"
HELP = "train the encoder + planner network on a dataset file"


def add_arguments(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", required=True, help="KPDS dataset file")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--resume", default=None, help="checkpoint .npz to resume from")
    add_seed(p)
    add_out(p, "runs/train")


def run(args: argparse.Namespace, cfg: ConfigModel) -> int:
    seed = resolve_seed(args, cfg)
    update = {"seed": seed}
    for field, value in (("epochs", args.epochs), ("lr", args.lr), ("batch_size", args.batch_size)):
        if value is not None:
            update[field] = value
    tcfg = cfg.training.model_copy(update=update)
    network = cfg.network.model_copy(update={"init_seed": seed})
    out = out_dir(args)
    with logged_run(NAME, out, manifest_meta(args, cfg, {"training": seed, "init": seed})) as details:
        dataset = load_dataset(args.dataset)
        state = load_checkpoint(args.resume) if args.resume else None
        state = train(dataset, tcfg, network, state=state, checkpoint_dir=out / "checkpoints")
        weights = out / cfg.paths.weights_name
        save_weights(state.params, weights)
        pd.DataFrame(
            {"epoch": range(1, len(state.epoch_losses) + 1), "loss": state.epoch_losses}
        ).to_csv(out / "losses.csv", index=False)
        final = state.epoch_losses[-1] if state.epoch_losses else float("nan")
        details.update({"tuples": len(dataset), "epochs": state.epoch, "final_loss": final, "weights": str(weights)})
    print(f"train complete: {state.epoch} epochs, final loss {final:.6f}, weights written to {weights}")
    return 0
