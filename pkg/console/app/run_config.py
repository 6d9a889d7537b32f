"""
Run Configuration - Validated experiment settings shared by every command

A run config is one YAML or JSON document. Only ``intrinsics`` and ``nominal`` are required;
unknown keys are rejected. Angles are given in degrees and converted to radians when the
library objects are built.
"""

import math
from pathlib import Path
from typing import List, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from tools.core.errors import ConfigError
from tools.core.geometry import CameraIntrinsics, CameraPose, EulerAngles
from tools.learning.regressor import ArchitectureConfig
from tools.learning.training import TrainConfig
from tools.simulation.simulator import MotionConfig, PoseGridSpec, SpeedModel


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class IntrinsicsSection(_Section):
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def build(self) -> CameraIntrinsics:
        return CameraIntrinsics(self.fx, self.fy, self.cx, self.cy, self.width, self.height)


class PoseSection(_Section):
    """Camera height in meters and yaw/pitch/roll in degrees"""
    height_m: float
    yaw_deg: float = 0.0
    pitch_deg: float
    roll_deg: float = 0.0

    @property
    def angles(self) -> EulerAngles:
        return EulerAngles.from_degrees(self.yaw_deg, self.pitch_deg, self.roll_deg)

    def build(self) -> CameraPose:
        return CameraPose.from_euler(self.height_m, self.angles)


class GridSection(_Section):
    height_span_m: float = 3.0
    height_step_m: float = 0.4
    angle_span_deg: float = 15.0
    angle_step_deg: float = 2.0


class SpeedSection(_Section):
    mean_mps: float = 1.4
    std_mps: float = 0.1
    samples_per_pose: int = 10

    def build(self) -> SpeedModel:
        return SpeedModel(self.mean_mps, self.std_mps, self.samples_per_pose)


class MotionSection(_Section):
    dt: float = 0.5
    min_len: int = 11
    max_len: int = 31
    heading_jitter_deg: float = 0.0
    max_retries: int = 100
    max_range_m: float = 100.0

    def build(self) -> MotionConfig:
        return MotionConfig(
            dt=self.dt,
            max_len=self.max_len,
            min_len=self.min_len,
            heading_jitter_std=math.radians(self.heading_jitter_deg),
            max_retries=self.max_retries,
            max_range_m=self.max_range_m,
        )


class ArchitectureSection(_Section):
    hidden_size: int = 64
    joint_sizes: List[int] = Field(default_factory=lambda: [256, 1024, 512])
    branch_sizes: List[int] = Field(default_factory=lambda: [256, 128])
    bidirectional: bool = True

    def build(self) -> ArchitectureConfig:
        return ArchitectureConfig(self.hidden_size, tuple(self.joint_sizes), tuple(self.branch_sizes),
                                  self.bidirectional)


class TrainingSection(_Section):
    batch_size: int = 1024
    epochs_per_round: int = 50
    rounds: int = 1
    alpha: float = 1.0
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    shuffle: bool = True
    clip_norm: Optional[float] = None

    def build(self, seed: int) -> TrainConfig:
        return TrainConfig(
            batch_size=self.batch_size, epochs_per_round=self.epochs_per_round, rounds=self.rounds,
            alpha=self.alpha, seed=seed, shuffle=self.shuffle, lr=self.lr, beta1=self.beta1,
            beta2=self.beta2, eps=self.eps, clip_norm=self.clip_norm,
        )


class EvaluationSection(_Section):
    """Synthetic test set (pose defaults to the nominal pose) and real-track ingestion settings"""
    test_pose: Optional[PoseSection] = None
    test_count: int = 100
    test_speed: SpeedSection = Field(default_factory=SpeedSection)
    fps: Optional[float] = None
    window_overlap: int = 0


class ReprojectSection(_Section):
    polygon: List[Tuple[float, float]] = Field(default_factory=list)


class SweepSection(_Section):
    speeds: Optional[List[float]] = None
    continue_on_error: bool = True


class RunConfig(_Section):
    """Top-level run configuration"""
    intrinsics: IntrinsicsSection
    nominal: PoseSection
    grid: GridSection = Field(default_factory=GridSection)
    speed: SpeedSection = Field(default_factory=SpeedSection)
    motion: MotionSection = Field(default_factory=MotionSection)
    architecture: ArchitectureSection = Field(default_factory=ArchitectureSection)
    training: TrainingSection = Field(default_factory=TrainingSection)
    evaluation: EvaluationSection = Field(default_factory=EvaluationSection)
    sweep: SweepSection = Field(default_factory=SweepSection)
    truth: Optional[PoseSection] = None
    reproject: ReprojectSection = Field(default_factory=ReprojectSection)
    seed: int = Field(default=0, ge=0)
    output_dir: str = "runs"
    workers: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _check_sections(self) -> "RunConfig":
        # surface library validation as field errors
        self.intrinsics.build()
        self.motion.build()
        return self

    def camera(self) -> CameraIntrinsics:
        return self.intrinsics.build()

    def grid_spec(self) -> PoseGridSpec:
        return PoseGridSpec(
            nominal_height_m=self.nominal.height_m,
            nominal_angles=self.nominal.angles,
            height_span=self.grid.height_span_m,
            height_step=self.grid.height_step_m,
            angle_span=math.radians(self.grid.angle_span_deg),
            angle_step=math.radians(self.grid.angle_step_deg),
        )

    def test_pose(self) -> CameraPose:
        return (self.evaluation.test_pose or self.nominal).build()

    def train_config(self) -> TrainConfig:
        return self.training.build(self.seed)


def _describe(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"]) or "config"
        parts.append(f"{location}: {item['msg']}")
    return "; ".join(parts)


def parse_config(data: dict) -> RunConfig:
    """Validate a config mapping, turning validation failures into ConfigError"""
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_describe(exc)) from exc
    except ConfigError as exc:
        raise ConfigError(f"invalid config: {exc.message}") from exc


def load_config(path: Union[str, Path]) -> RunConfig:
    """Read a YAML or JSON config file"""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path.name}: {exc}") from exc
    return parse_config(data or {})
