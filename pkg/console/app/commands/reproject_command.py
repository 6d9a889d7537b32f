"""
reproject - Overlay a ground polygon reprojected through the predicted pose
"""

import argparse
import json
import math
from pathlib import Path
from typing import List

import numpy as np

from console.app.commands.base_command import BaseCommand
from tools.core.errors import ConfigError
from tools.core.geometry import CameraPose, EulerAngles, Quaternion
from tools.evaluation.evaluation import pin_yaw, reproject_polygon
from tools.evaluation.plots import plot_reprojection


def parse_polygon(text: str) -> np.ndarray:
    """'u1,v1;u2,v2;...' -> (M, 2)"""
    try:
        vertices = [[float(c) for c in vertex.split(",")] for vertex in text.split(";") if vertex.strip()]
        polygon = np.array(vertices, dtype=np.float64)
    except ValueError as exc:
        raise ConfigError(f"--polygon: expected 'u,v;u,v;...', got {text!r}") from exc
    if polygon.ndim != 2 or polygon.shape[1] != 2:
        raise ConfigError("--polygon: every vertex needs exactly two coordinates")
    return polygon


class ReprojectCommand(BaseCommand):
    name = "reproject"
    help = "draw a ground polygon under the true pose and reprojected through the predicted pose"

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--report", type=Path, help="eval report whose aggregate is the predicted pose")
        parser.add_argument("--height", type=float, help="predicted height in meters")
        parser.add_argument("--pitch", type=float, help="predicted pitch in degrees")
        parser.add_argument("--roll", type=float, default=0.0, help="predicted roll in degrees")
        parser.add_argument("--polygon", help="vertices 'u,v;u,v;...' in image coordinates")

    def _predicted_pose(self, truth: CameraPose) -> CameraPose:
        if self.args.report:
            try:
                aggregate = json.loads(Path(self.args.report).read_text(encoding="utf-8"))["aggregate"]
                height = float(aggregate["height_m"])
                orientation = Quaternion.from_array(aggregate["quat"])
            except (OSError, KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"--report: cannot read aggregate pose from {self.args.report}: {exc}") from exc
            return CameraPose(height, pin_yaw(orientation.normalized(), truth.yaw_ref), yaw_ref=truth.yaw_ref)
        if self.args.height is None or self.args.pitch is None:
            raise ConfigError("predicted pose: pass --report, or --height and --pitch")
        angles = EulerAngles(truth.yaw_ref, math.radians(self.args.pitch), math.radians(self.args.roll))
        return CameraPose.from_euler(self.args.height, angles)

    def execute(self) -> List[str]:
        cfg = self.config
        if cfg.truth is None:
            raise ConfigError("truth: required for reprojection")
        truth = cfg.truth.build()
        K = cfg.camera()
        predicted = self._predicted_pose(truth)

        if self.args.polygon:
            polygon = parse_polygon(self.args.polygon)
        elif cfg.reproject.polygon:
            polygon = np.array(cfg.reproject.polygon, dtype=np.float64)
        else:
            raise ConfigError("reproject.polygon: required (or pass --polygon)")
        if len(polygon) < 3:
            raise ConfigError(f"polygon needs at least 3 vertices, got {len(polygon)}")

        reprojected = reproject_polygon(truth, predicted, K, polygon)
        svg_path = plot_reprojection(polygon, reprojected, K, self.artifact("reproject.svg"))
        self.write_json("reproject.json", {
            "truth": truth.to_dict(),
            "predicted": predicted.to_dict(),
            "polygon": polygon.tolist(),
            "reprojected": reprojected.tolist(),
        })
        shift = float(np.max(np.linalg.norm(reprojected - polygon, axis=1)))
        return [f"{len(polygon)} vertices, max shift {shift:.3f} px", f"overlay: {svg_path}"]
