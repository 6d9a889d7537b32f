"""
eval - Predict the camera pose from test trajectories and score it
"""

import argparse
from pathlib import Path
from typing import List

from console.app.commands.base_command import BaseCommand
from console.app.commands.train_command import CHECKPOINT_FILE
from tools.core.errors import ConfigError
from tools.evaluation.evaluation import evaluate, predict_pose
from tools.evaluation.track_ingest import ingest_tracks
from tools.learning.checkpoint_store import load_checkpoint
from tools.simulation.simulator import generate_test_set, trajectory_set_id

REPORT_FILE = "report.json"


class EvalCommand(BaseCommand):
    name = "eval"
    help = "evaluate a checkpoint on real tracks or a synthetic test set"

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--checkpoint", type=Path, help=f"checkpoint (default <out>/{CHECKPOINT_FILE})")
        parser.add_argument("--tracks", type=Path, help="track CSV (track_id,frame,u,v); synthetic test set if omitted")
        parser.add_argument("--fps", type=float, help="frame rate of the tracked video")

    def execute(self) -> List[str]:
        cfg = self.config
        checkpoint = load_checkpoint(self.args.checkpoint or self.artifact(CHECKPOINT_FILE))
        K, motion = checkpoint.meta.intrinsics, checkpoint.meta.motion

        if self.args.tracks:
            fps = self.args.fps or cfg.evaluation.fps
            if fps is None:
                raise ConfigError("evaluation.fps: required when evaluating real tracks (or pass --fps)")
            trajectories = ingest_tracks(self.args.tracks, fps, motion.dt, motion, K, cfg.evaluation.window_overlap)
            truth = cfg.truth.build() if cfg.truth is not None else None
            source = str(self.args.tracks)
        else:
            truth = cfg.test_pose()
            test_set = generate_test_set(truth, cfg.evaluation.test_speed.build(), K, motion,
                                         cfg.evaluation.test_count, cfg.seed)
            trajectories = [sample.trajectory for sample in test_set]
            source = f"synthetic test set {trajectory_set_id(trajectories)}"

        yaw_ref = truth.yaw_ref if truth is not None else cfg.nominal.angles.yaw
        report = predict_pose(checkpoint.model, trajectories, K, yaw_ref, motion)
        if truth is not None:
            report = evaluate(report, truth)
        payload = report.to_dict(timing=False)
        payload["source"] = source
        path = self.write_json(REPORT_FILE, payload)

        yaw, pitch, roll = report.euler().to_degrees()
        lines = [
            f"K = {report.count} trajectories ({len(report.skipped)} skipped) from {source}",
            f"height {report.height_m:.3f} m, yaw {yaw:.2f} deg, pitch {pitch:.2f} deg, roll {roll:.2f} deg",
            f"inference {report.inference_seconds / report.count * 1e3:.3f} ms per trajectory",
        ]
        if truth is not None:
            lines.append(f"t_err {report.t_err_m:.3f} m, r_err {report.r_err_deg:.3f} deg")
        lines.append(f"report: {path}")
        return lines
