"""
sweep - Train at several synthetic speeds and chart the test error against speed
"""

import argparse
import math
from typing import List

from console.app.commands.base_command import BaseCommand
from tools.core.errors import ConfigError
from tools.evaluation.evaluation import speed_sweep
from tools.evaluation.plots import plot_sweep, write_sweep_csv
from tools.simulation.simulator import SpeedModel, default_sweep_speeds, generate_test_set

TEST_SPEED_MPS = 1.4


def parse_speeds(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(f"--speeds: expected comma-separated numbers, got {text!r}") from exc


class SweepCommand(BaseCommand):
    name = "sweep"
    help = "speed sweep: one model per synthetic training speed"

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--speeds", help="comma-separated training speeds in m/s")

    def execute(self) -> List[str]:
        cfg = self.config
        if self.args.speeds:
            speeds = parse_speeds(self.args.speeds)
        else:
            speeds = cfg.sweep.speeds or default_sweep_speeds()
        if len(speeds) < 2:
            raise ConfigError(f"sweep needs at least 2 speeds, got {len(speeds)}")

        K = cfg.camera()
        motion = cfg.motion.build()
        test_speed = SpeedModel(TEST_SPEED_MPS, cfg.evaluation.test_speed.std_mps, cfg.evaluation.test_count)
        test_set = generate_test_set(cfg.test_pose(), test_speed, K, motion, cfg.evaluation.test_count, cfg.seed)

        result = speed_sweep(
            cfg.grid_spec(), test_set, speeds, cfg.train_config(), K, motion,
            arch=cfg.architecture.build(), samples_per_pose=cfg.speed.samples_per_pose,
            speed_std=cfg.speed.std_mps, seed=cfg.seed, workers=cfg.workers,
            continue_on_error=cfg.sweep.continue_on_error,
        )
        csv_path = write_sweep_csv(result, self.artifact("sweep.csv"))
        plot_sweep(result, self.artifact("sweep.svg"))

        lines = [f"{len(result.points)} speeds against test set {result.test_set_id}"]
        for point in result.points:
            if math.isnan(point.t_err_m):
                lines.append(f"  {point.speed_mps:g} m/s: failed ({point.error})")
            else:
                lines.append(f"  {point.speed_mps:g} m/s: t_err {point.t_err_m:.3f} m, r_err {point.r_err_deg:.3f} deg")
        lines.append(f"sweep: {csv_path}")
        return lines
