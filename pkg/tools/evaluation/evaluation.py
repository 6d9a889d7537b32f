"""
Evaluation - Test-time inference, pose aggregation and error reporting

Responsibilities:
- Predict a pose for every test trajectory and average them into one camera pose
- Score the aggregate (and each trajectory) against a known true pose
- Run the synthetic-speed sweep experiment
- Reproject an image-space ground polygon through a predicted pose
"""

import math
import statistics
import time
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
import structlog

from tools.core.errors import BehindCameraError, ConfigError, InputDomainError, NoPredictionError, TrajPoseError
from tools.core.geometry import (
    MIN_DEPTH,
    CameraIntrinsics,
    CameraPose,
    EulerAngles,
    Quaternion,
    aggregate_quaternions,
    backproject_pixels,
    euler_to_quat,
    euler_with_yaw,
    orientation_error,
    position_error,
    project_ground_points,
)
from tools.learning.regressor import (
    ArchitectureConfig,
    PosePrediction,
    RegressorModel,
    forward,
    predict_batch,
)
from tools.learning.training import TrainConfig, train
from tools.simulation.simulator import (
    LabeledSample,
    MotionConfig,
    PoseGridSpec,
    SpeedModel,
    Trajectory2D,
    generate_dataset,
    trajectory_set_id,
)

logger = structlog.get_logger(__name__)


def pin_yaw(q: Quaternion, yaw_ref: float) -> Quaternion:
    """Same pitch and roll as q with the yaw replaced by yaw_ref"""
    angles = euler_with_yaw(q, yaw_ref)
    return euler_to_quat(EulerAngles(yaw=yaw_ref, pitch=angles.pitch, roll=angles.roll)).canonical()


@dataclass(frozen=True)
class TrajectoryPrediction:
    """Prediction for one accepted test trajectory"""
    index: int
    height_m: float
    orientation: Quaternion
    t_err_m: Optional[float] = None
    r_err_deg: Optional[float] = None

    def to_dict(self) -> Dict:
        data = {
            "index": self.index,
            "height_m": self.height_m,
            "quat": self.orientation.as_array().tolist(),
        }
        if self.t_err_m is not None:
            data["t_err_m"] = self.t_err_m
            data["r_err_deg"] = self.r_err_deg
        return data


@dataclass(frozen=True)
class SkippedTrajectory:
    index: int
    error: str


@dataclass(frozen=True)
class EvaluationReport:
    """
    Per-trajectory predictions and their aggregate

    Error fields stay None until evaluate() is given the true pose.
    """
    predictions: List[TrajectoryPrediction]
    height_m: float
    orientation: Quaternion
    yaw_ref: float
    skipped: List[SkippedTrajectory] = field(default_factory=list)
    inference_seconds: float = 0.0
    truth: Optional[CameraPose] = None
    t_err_m: Optional[float] = None
    r_err_rad: Optional[float] = None
    median_t_err_m: Optional[float] = None
    median_r_err_deg: Optional[float] = None

    @property
    def count(self) -> int:
        """K, the number of accepted trajectories"""
        return len(self.predictions)

    @property
    def r_err_deg(self) -> Optional[float]:
        return None if self.r_err_rad is None else math.degrees(self.r_err_rad)

    def euler(self) -> EulerAngles:
        return euler_with_yaw(self.orientation, self.yaw_ref)

    def to_dict(self, timing: bool = True) -> Dict:
        data = {
            "count": self.count,
            "aggregate": {
                "height_m": self.height_m,
                "quat": self.orientation.as_array().tolist(),
                "euler_deg": list(self.euler().to_degrees()),
            },
            "skipped": [{"index": s.index, "error": s.error} for s in self.skipped],
            "predictions": [p.to_dict() for p in self.predictions],
        }
        if timing:
            data["inference_seconds"] = self.inference_seconds
            data["inference_seconds_per_trajectory"] = self.inference_seconds / max(self.count, 1)
        if self.truth is not None:
            data["truth"] = self.truth.to_dict()
            data["t_err_m"] = self.t_err_m
            data["r_err_rad"] = self.r_err_rad
            data["r_err_deg"] = self.r_err_deg
            data["median_t_err_m"] = self.median_t_err_m
            data["median_r_err_deg"] = self.median_r_err_deg
        return data


def _predict_group(model: RegressorModel, indices: List[int], trajectories: Sequence[Trajectory2D],
                   K: CameraIntrinsics, skipped: List[SkippedTrajectory]) -> Dict[int, PosePrediction]:
    try:
        predictions = predict_batch(model, [trajectories[i] for i in indices], K)
        return dict(zip(indices, predictions))
    except TrajPoseError:
        pass

    # isolate the failing trajectories
    results = {}
    for i in indices:
        try:
            results[i] = forward(model, trajectories[i], K)
        except TrajPoseError as exc:
            skipped.append(SkippedTrajectory(index=i, error=exc.one_line()))
    return results


def predict_pose(model: RegressorModel, trajectories: Sequence[Trajectory2D], K: CameraIntrinsics,
                 yaw_ref: float = 0.0, motion: Optional[MotionConfig] = None) -> EvaluationReport:
    """
    Predict every trajectory and aggregate into one pose

    Heights are averaged; orientations are yaw-pinned, then averaged with aggregate_quaternions.
    Trajectories that fail validation or inference are skipped and listed in the report.

    Args:
        model: Trained regressor
        trajectories: Test trajectories
        K: Camera intrinsics
        yaw_ref: Yaw of the nominal pose (not observable from trajectories)
        motion: When given, trajectory lengths outside [min_len, max_len] are skipped

    Raises:
        NoPredictionError: If no trajectory produced a prediction
    """
    skipped: List[SkippedTrajectory] = []
    groups: Dict[int, List[int]] = defaultdict(list)
    for i, trajectory in enumerate(trajectories):
        try:
            if motion is not None:
                trajectory.validate(K, motion)
            elif not np.all(K.contains(trajectory.points)):
                raise InputDomainError("trajectory has points outside the image")
        except TrajPoseError as exc:
            skipped.append(SkippedTrajectory(index=i, error=exc.one_line()))
            continue
        groups[len(trajectory)].append(i)

    started = time.perf_counter()
    raw: Dict[int, PosePrediction] = {}
    for length in sorted(groups):
        raw.update(_predict_group(model, groups[length], trajectories, K, skipped))
    elapsed = time.perf_counter() - started

    for s in skipped:
        logger.warning("trajectory_skipped", index=s.index, error=s.error)
    if not raw:
        raise NoPredictionError(f"none of the {len(trajectories)} trajectories produced a prediction")

    predictions = [
        TrajectoryPrediction(index=i, height_m=raw[i].height_m, orientation=pin_yaw(raw[i].orientation, yaw_ref))
        for i in sorted(raw)
    ]
    height = float(np.mean([p.height_m for p in predictions]))
    orientation = pin_yaw(aggregate_quaternions(p.orientation for p in predictions), yaw_ref)

    logger.info("pose_predicted", count=len(predictions), skipped=len(skipped), height_m=round(height, 4),
                seconds=round(elapsed, 4), seconds_per_trajectory=round(elapsed / len(predictions), 6))
    return EvaluationReport(
        predictions=predictions,
        height_m=height,
        orientation=orientation,
        yaw_ref=yaw_ref,
        skipped=sorted(skipped, key=lambda s: s.index),
        inference_seconds=elapsed,
    )


def evaluate(report: EvaluationReport, true_pose: CameraPose) -> EvaluationReport:
    """Fill location/orientation errors of the aggregate and of every trajectory"""
    scored = [
        replace(p, t_err_m=position_error(true_pose.height_m, p.height_m),
                r_err_deg=math.degrees(orientation_error(true_pose.orientation, p.orientation)))
        for p in report.predictions
    ]
    t_err = position_error(true_pose.height_m, report.height_m)
    r_err = orientation_error(true_pose.orientation, report.orientation)
    logger.info("pose_evaluated", t_err_m=round(t_err, 4), r_err_deg=round(math.degrees(r_err), 4))
    return replace(
        report,
        predictions=scored,
        truth=true_pose,
        t_err_m=t_err,
        r_err_rad=r_err,
        median_t_err_m=statistics.median(p.t_err_m for p in scored),
        median_r_err_deg=statistics.median(p.r_err_deg for p in scored),
    )


@dataclass(frozen=True)
class SweepPoint:
    """Errors of the model trained at one synthetic speed; NaN errors when that run failed"""
    speed_mps: float
    t_err_m: float
    r_err_deg: float
    error: Optional[str] = None


@dataclass(frozen=True)
class SpeedSweepResult:
    points: List[SweepPoint]
    test_set_id: str

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(p.speed_mps, p.t_err_m, p.r_err_deg) for p in self.points],
            columns=["speed_mps", "t_err_m", "r_err_deg"],
        )


def speed_sweep(grid: PoseGridSpec, test_set: Sequence[LabeledSample], speeds: Sequence[float],
                train_cfg: TrainConfig, K: CameraIntrinsics, motion: MotionConfig,
                arch: Optional[ArchitectureConfig] = None, samples_per_pose: int = 10,
                speed_std: float = 0.1, seed: int = 0, workers: int = 1,
                continue_on_error: bool = False) -> SpeedSweepResult:
    """
    Train one model per synthetic speed and score each on a shared test set

    Every model starts from the same initialization (seed train_cfg.seed) and every training set
    reuses the dataset seed, so only the speed differs between runs.

    Raises:
        ConfigError: If speeds are empty or not strictly increasing
        TrajPoseError: The first failing run, prefixed with its speed, unless continue_on_error
    """
    if not speeds:
        raise ConfigError("speed sweep needs at least one speed")
    if any(b <= a for a, b in zip(speeds, speeds[1:])):
        raise ConfigError(f"sweep speeds must be strictly increasing, got {list(speeds)}")
    if not test_set:
        raise ConfigError("speed sweep needs a non-empty test set")

    truth = test_set[0].pose
    trajectories = [sample.trajectory for sample in test_set]
    set_id = trajectory_set_id(trajectories)
    log = logger.bind(test_set_id=set_id, runs=len(speeds))

    points = []
    for speed in speeds:
        try:
            dataset = generate_dataset(grid, SpeedModel(mean=speed, std=speed_std, samples_per_pose=samples_per_pose),
                                       K, motion, seed, workers=workers)
            model = RegressorModel(arch, seed=train_cfg.seed)
            train(model, dataset, K, train_cfg)
            report = evaluate(predict_pose(model, trajectories, K, truth.yaw_ref, motion), truth)
        except TrajPoseError as exc:
            exc.annotate(f"speed {speed:g} m/s")
            if not continue_on_error:
                raise
            log.warning("sweep_run_failed", speed_mps=speed, error=exc.one_line())
            points.append(SweepPoint(speed, math.nan, math.nan, error=exc.one_line()))
            continue
        log.info("sweep_run_finished", speed_mps=speed, t_err_m=round(report.t_err_m, 4),
                 r_err_deg=round(report.r_err_deg, 4))
        points.append(SweepPoint(speed, report.t_err_m, report.r_err_deg))

    return SpeedSweepResult(points=points, test_set_id=set_id)


def reproject_polygon(true_pose: CameraPose, pred_pose: CameraPose, K: CameraIntrinsics,
                      polygon: np.ndarray) -> np.ndarray:
    """
    Lift an image polygon to the ground with the true pose, then project it with the predicted pose

    Args:
        polygon: (M, 2) pixel vertices seen under the true pose

    Raises:
        HorizonError: If a vertex ray misses the ground under the true pose
        BehindCameraError: If a ground vertex is behind the predicted camera
    """
    ground = backproject_pixels(true_pose, K, polygon)
    pixels, depth = project_ground_points(pred_pose, K, ground)
    if np.any(depth <= MIN_DEPTH):
        raise BehindCameraError("reprojected polygon has a vertex behind the predicted camera")
    return pixels
