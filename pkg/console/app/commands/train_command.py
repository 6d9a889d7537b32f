"""
train - Fit the regressor on a generated dataset
"""

import argparse
from pathlib import Path
from typing import List

from console.app.commands.base_command import BaseCommand
from console.app.commands.gen_command import DATASET_FILE
from tools.evaluation.plots import plot_loss_curve, write_loss_csv
from tools.learning.checkpoint_store import CheckpointMeta, load_checkpoint, save_checkpoint
from tools.learning.regressor import RegressorModel
from tools.learning.training import TrainResult, train
from tools.simulation.dataset_store import read_dataset

CHECKPOINT_FILE = "checkpoint.trjp"


class TrainCommand(BaseCommand):
    name = "train"
    help = "train the pose regressor"

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--dataset", type=Path, help=f"dataset path (default <out>/{DATASET_FILE})")
        parser.add_argument("--resume", type=Path, help="continue from this checkpoint")

    def execute(self) -> List[str]:
        cfg = self.config
        header, samples = read_dataset(self.args.dataset or self.artifact(DATASET_FILE))
        train_cfg = cfg.train_config()
        checkpoint_path = self.artifact(CHECKPOINT_FILE)

        if self.args.resume:
            checkpoint = load_checkpoint(self.args.resume)
            model, adam = checkpoint.model, checkpoint.adam
            start_epoch, history = checkpoint.meta.epoch, checkpoint.meta.history
            self.log.info("training_resumed", checkpoint=str(self.args.resume), epoch=start_epoch)
        else:
            model = RegressorModel(cfg.architecture.build(), seed=cfg.seed)
            adam, start_epoch, history = None, 0, []

        def save_round(round_index: int, result: TrainResult) -> None:
            meta = CheckpointMeta(
                intrinsics=header.intrinsics, grid=header.grid, motion=header.motion, seed=cfg.seed,
                epoch=len(result.history), history=result.history,
            )
            save_checkpoint(result.model, meta, checkpoint_path, adam=result.adam)
            self.log.info("round_checkpointed", round=round_index, epoch=meta.epoch)

        result = train(model, samples, header.intrinsics, train_cfg, start_epoch=start_epoch, adam=adam,
                       history=history, on_round_end=save_round)

        write_loss_csv(result.history, self.artifact("loss.csv"))
        plot_loss_curve(result.history, self.artifact("loss.svg"))
        final = result.history[-1] if result.history else None
        lines = [f"{len(result.history)} epochs on {len(samples)} samples", f"checkpoint: {checkpoint_path}"]
        if final is not None:
            lines.append(
                f"final loss {final.total:.6f} (location {final.location_term:.6f}, "
                f"orientation {final.orientation_term:.6f})"
            )
        return lines
