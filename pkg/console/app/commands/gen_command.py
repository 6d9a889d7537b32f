"""
gen - Generate the labeled synthetic dataset
"""

import argparse
from pathlib import Path
from typing import List

from console.app.commands.base_command import BaseCommand
from tools.simulation.dataset_store import DatasetHeader, write_dataset
from tools.simulation.simulator import GenerationStats, generate_dataset, sample_pose_grid

DATASET_FILE = "dataset.jsonl"


class GenCommand(BaseCommand):
    name = "gen"
    help = "generate a synthetic trajectory dataset"

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--dataset", type=Path, help=f"dataset path (default <out>/{DATASET_FILE})")

    def execute(self) -> List[str]:
        cfg = self.config
        K = cfg.camera()
        spec = cfg.grid_spec()
        speeds = cfg.speed.build()
        motion = cfg.motion.build()

        poses = len(sample_pose_grid(spec))
        stats = GenerationStats()
        samples = generate_dataset(spec, speeds, K, motion, cfg.seed, workers=cfg.workers, stats=stats)

        path = self.args.dataset or self.artifact(DATASET_FILE)
        header = DatasetHeader(intrinsics=K, grid=spec, speeds=speeds, motion=motion, seed=cfg.seed)
        write_dataset(path, header, samples)

        worst = sorted(stats.rejections_by_pose.items(), key=lambda item: (-item[1], item[0]))[:5]
        lines = [
            f"{poses} poses, {len(samples)} samples",
            f"rejections: {stats.rejections}, degenerate (speed 0): {stats.degenerate}",
            f"dataset: {path}",
        ]
        if worst:
            lines.append("most rejections: " + ", ".join(f"pose {p}: {n}" for p, n in worst))
        return lines
