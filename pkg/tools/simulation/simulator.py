"""
Simulator - Synthetic pedestrian trajectories labeled with the camera pose that saw them

Responsibilities:
- Sample a pose grid (height x pitch x roll) around a nominal pose, nominal excluded
- Sample Gaussian pedestrian walking speeds
- Find the ground region a camera can see
- Walk a pedestrian across that region and project the walk into the image
- Build the labeled training set: one trajectory per (pose, speed) pair

Every random draw comes from a stream derived from (seed, pose index, speed index), so the
dataset is identical whatever the number of worker threads.
"""

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np
import structlog

from tools.core.errors import (
    ConfigError,
    EmptyGridError,
    GenerationFailureError,
    InputDomainError,
    NoGroundVisibleError,
    TrajPoseError,
)
from tools.core.geometry import (
    MIN_DEPTH,
    CameraIntrinsics,
    CameraPose,
    EulerAngles,
    project_ground_points,
)

logger = structlog.get_logger(__name__)

# Stream tags keep derived RNG streams from colliding.
_SPEED_STREAM = 0
_WALK_STREAM = 1
_TEST_SPEED_STREAM = 2
_TEST_WALK_STREAM = 3


@dataclass(frozen=True)
class PoseGridSpec:
    """Grid of camera poses around the nominal pose P^o"""
    nominal_height_m: float
    nominal_angles: EulerAngles
    height_span: float = 3.0
    height_step: float = 0.4
    angle_span: float = math.radians(15.0)
    angle_step: float = math.radians(2.0)

    def __post_init__(self):
        if self.height_span < 0 or self.angle_span < 0:
            raise ConfigError("grid spans must not be negative")
        if self.height_step <= 0 or self.angle_step <= 0:
            raise ConfigError("grid steps must be positive")

    @property
    def nominal(self) -> CameraPose:
        return CameraPose.from_euler(self.nominal_height_m, self.nominal_angles)

    def to_dict(self) -> Dict:
        return {
            "nominal_height_m": self.nominal_height_m,
            "nominal_yaw_rad": self.nominal_angles.yaw,
            "nominal_pitch_rad": self.nominal_angles.pitch,
            "nominal_roll_rad": self.nominal_angles.roll,
            "height_span_m": self.height_span,
            "height_step_m": self.height_step,
            "angle_span_rad": self.angle_span,
            "angle_step_rad": self.angle_step,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "PoseGridSpec":
        return cls(
            nominal_height_m=float(data["nominal_height_m"]),
            nominal_angles=EulerAngles(
                yaw=float(data["nominal_yaw_rad"]),
                pitch=float(data["nominal_pitch_rad"]),
                roll=float(data["nominal_roll_rad"]),
            ),
            height_span=float(data["height_span_m"]),
            height_step=float(data["height_step_m"]),
            angle_span=float(data["angle_span_rad"]),
            angle_step=float(data["angle_step_rad"]),
        )


@dataclass(frozen=True)
class SpeedModel:
    """Gaussian walking-speed model N(mean, std^2)"""
    mean: float = 1.4
    std: float = 0.1
    samples_per_pose: int = 10

    def __post_init__(self):
        if not self.mean > 0:
            raise ConfigError(f"speed mean must be positive, got {self.mean}")
        if self.std < 0:
            raise ConfigError(f"speed std must not be negative, got {self.std}")
        if self.samples_per_pose < 1:
            raise ConfigError("samples_per_pose must be at least 1")

    def to_dict(self) -> Dict:
        return {"mean": self.mean, "std": self.std, "samples_per_pose": self.samples_per_pose}

    @classmethod
    def from_dict(cls, data: Dict) -> "SpeedModel":
        return cls(float(data["mean"]), float(data["std"]), int(data["samples_per_pose"]))


@dataclass(frozen=True)
class MotionConfig:
    """Human motion model and trajectory length limits"""
    dt: float = 0.5
    max_len: int = 31
    min_len: int = 11
    heading_jitter_std: float = 0.0
    max_retries: int = 100
    max_range_m: float = 100.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not 1 <= self.min_len <= self.max_len:
            raise ConfigError(f"need 1 <= min_len <= max_len, got {self.min_len}..{self.max_len}")
        if self.heading_jitter_std < 0 or self.max_retries < 1 or not self.max_range_m > 0:
            raise ConfigError("invalid motion config")

    def to_dict(self) -> Dict:
        return {
            "dt": self.dt,
            "max_len": self.max_len,
            "min_len": self.min_len,
            "heading_jitter_std": self.heading_jitter_std,
            "max_retries": self.max_retries,
            "max_range_m": self.max_range_m,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "MotionConfig":
        return cls(
            dt=float(data["dt"]),
            max_len=int(data["max_len"]),
            min_len=int(data["min_len"]),
            heading_jitter_std=float(data["heading_jitter_std"]),
            max_retries=int(data["max_retries"]),
            max_range_m=float(data["max_range_m"]),
        )


@dataclass(frozen=True, eq=False)
class Trajectory2D:
    """Ordered pixel positions (N, 2) of one pedestrian"""
    points: np.ndarray

    def __post_init__(self):
        points = np.array(self.points, dtype=np.float64).reshape(-1, 2)
        points.setflags(write=False)
        object.__setattr__(self, "points", points)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def is_degenerate(self) -> bool:
        """True when the pedestrian never moves (all points identical)"""
        return bool(np.all(self.points == self.points[0]))

    def validate(self, K: CameraIntrinsics, cfg: MotionConfig) -> None:
        """
        Check the length window and that every point is inside the image

        Raises:
            InputDomainError: If either condition fails
        """
        if not cfg.min_len <= len(self) <= cfg.max_len:
            raise InputDomainError(
                f"trajectory length {len(self)} outside [{cfg.min_len}, {cfg.max_len}]"
            )
        if not np.all(K.contains(self.points)):
            raise InputDomainError("trajectory has points outside the image")

    def to_list(self) -> List[List[float]]:
        return self.points.tolist()


@dataclass(frozen=True, eq=False)
class LabeledSample:
    """Synthetic training record: trajectory, generating pose and walking speed"""
    trajectory: Trajectory2D
    pose: CameraPose
    speed: float
    pose_id: int = -1


@dataclass
class GenerationStats:
    """Counters reported by dataset generation"""
    trajectories: int = 0
    rejections: int = 0
    degenerate: int = 0
    rejections_by_pose: Dict[int, int] = field(default_factory=dict)

    def merge(self, other: "GenerationStats") -> None:
        self.trajectories += other.trajectories
        self.rejections += other.rejections
        self.degenerate += other.degenerate
        for pose_id, count in other.rejections_by_pose.items():
            self.rejections_by_pose[pose_id] = self.rejections_by_pose.get(pose_id, 0) + count


def default_sweep_speeds() -> List[float]:
    """Synthetic speeds 0.2 .. 4.0 m/s in 0.2 m/s steps"""
    return [round(0.2 * k, 10) for k in range(1, 21)]


def _axis_samples(center: float, span: float, step: float, lower: Optional[float] = None) -> np.ndarray:
    lo = center - span
    if lower is not None:
        lo = max(lower, lo)
    hi = center + span
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(count)


def sample_pose_grid(spec: PoseGridSpec) -> List[CameraPose]:
    """
    Uniform grid over height x pitch x roll with the nominal yaw kept fixed

    Heights span [max(0, Z^o - span), Z^o + span] and must be strictly positive; the nominal pose
    itself is never part of the grid. Order: height (outer), pitch, roll (inner).

    Raises:
        EmptyGridError: If nothing is left after clamping and excluding the nominal pose
    """
    nominal = spec.nominal_angles
    heights = _axis_samples(spec.nominal_height_m, spec.height_span, spec.height_step, lower=0.0)
    heights = heights[heights > 1e-9]
    pitches = _axis_samples(nominal.pitch, spec.angle_span, spec.angle_step)
    rolls = _axis_samples(nominal.roll, spec.angle_span, spec.angle_step)

    usable_pitches = pitches[np.abs(pitches) < math.pi / 2 - 1e-6]
    if len(usable_pitches) < len(pitches):
        logger.warning("grid_pitches_dropped", dropped=int(len(pitches) - len(usable_pitches)))

    poses = []
    for height in heights:
        for pitch in usable_pitches:
            for roll in rolls:
                if (abs(height - spec.nominal_height_m) < 1e-9
                        and abs(pitch - nominal.pitch) < 1e-9
                        and abs(roll - nominal.roll) < 1e-9):
                    continue
                angles = EulerAngles(yaw=nominal.yaw, pitch=float(pitch), roll=float(roll))
                poses.append(CameraPose.from_euler(float(height), angles))

    if not poses:
        raise EmptyGridError(
            f"pose grid around height {spec.nominal_height_m} m is empty after clamping"
        )
    return poses


def sample_speeds(model: SpeedModel, rng: np.random.Generator) -> List[float]:
    """Draw samples_per_pose speeds from N(mean, std^2), redrawing non-positive values"""
    speeds = rng.normal(model.mean, model.std, size=model.samples_per_pose)
    bad = speeds <= 0
    while np.any(bad):
        speeds[bad] = rng.normal(model.mean, model.std, size=int(bad.sum()))
        bad = speeds <= 0
    return speeds.tolist()


def _clip_polygon(polygon: np.ndarray, a: np.ndarray, c: float) -> np.ndarray:
    """Sutherland-Hodgman clip of a convex polygon against a.x + c >= 0"""
    if len(polygon) == 0:
        return polygon
    values = polygon @ a + c
    out = []
    for k in range(len(polygon)):
        p, q = polygon[k], polygon[(k + 1) % len(polygon)]
        fp, fq = values[k], values[(k + 1) % len(polygon)]
        if fp >= 0:
            out.append(p)
        if (fp >= 0) != (fq >= 0):
            out.append(p + (q - p) * (fp / (fp - fq)))
    return np.array(out).reshape(-1, 2)


def _polygon_area(polygon: np.ndarray) -> float:
    x, y = polygon[:, 0], polygon[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def visible_ground_region(pose: CameraPose, K: CameraIntrinsics, max_range: float = 100.0) -> np.ndarray:
    """
    Convex ground polygon (M, 2), counter-clockwise, seen by the camera

    The polygon is the intersection of the ground plane with the viewing frustum, further bounded
    by a square of half-width max_range around the point below the camera. Vertices that come from
    the frustum project onto the image boundary; vertices from the range bound lie inside the image.

    Raises:
        NoGroundVisibleError: If the whole image is at or above the horizon
    """
    rot = pose.world_from_camera
    ex, ey, ez = rot[:, 0], rot[:, 1], rot[:, 2]
    h = pose.height_m

    # Each bound is linear in the camera coordinates of a ground point (X, Y, 0).
    bounds = [
        ez,                                   # in front of the camera
        K.fx * ex + K.cx * ez,                # u >= 0
        (K.width - K.cx) * ez - K.fx * ex,    # u <= width
        K.fy * ey + K.cy * ez,                # v >= 0
        (K.height - K.cy) * ez - K.fy * ey,   # v <= height
    ]

    r = max_range
    polygon = np.array([[-r, -r], [r, -r], [r, r], [-r, r]], dtype=np.float64)
    for coef in bounds:
        polygon = _clip_polygon(polygon, coef[:2], -h * coef[2])

    if len(polygon) >= 2:
        keep = np.linalg.norm(polygon - np.roll(polygon, -1, axis=0), axis=1) > 1e-12
        polygon = polygon[keep]
    if len(polygon) < 3 or _polygon_area(polygon) < 1e-9:
        raise NoGroundVisibleError(
            f"no ground visible within {max_range} m for pose at height {pose.height_m} m"
        )
    return polygon


def _sample_in_polygon(polygon: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Uniform point inside a convex polygon via fan triangulation"""
    a = polygon[0]
    b = polygon[1:-1]
    c = polygon[2:]
    areas = 0.5 * np.abs((b[:, 0] - a[0]) * (c[:, 1] - a[1]) - (b[:, 1] - a[1]) * (c[:, 0] - a[0]))
    cumulative = np.cumsum(areas)
    k = min(int(np.searchsorted(cumulative, rng.random() * cumulative[-1], side="right")), len(areas) - 1)
    r1, r2 = rng.random(2)
    if r1 + r2 > 1.0:
        r1, r2 = 1.0 - r1, 1.0 - r2
    return a + r1 * (b[k] - a) + r2 * (c[k] - a)


def _walk(start: np.ndarray, heading: float, step: float, points: int, jitter_std: float,
          rng: np.random.Generator) -> np.ndarray:
    """Ground positions (points, 2) of a walk starting at start"""
    turns = rng.normal(0.0, jitter_std, size=max(points - 2, 0))
    angles = heading + np.concatenate([[0.0], np.cumsum(turns)])[:points - 1]
    offsets = np.cumsum(step * np.column_stack([np.cos(angles), np.sin(angles)]), axis=0)
    return np.vstack([start[None, :], start + offsets])


def _try_trajectory(pose: CameraPose, speed: float, K: CameraIntrinsics, cfg: MotionConfig,
                    rng: np.random.Generator, region: np.ndarray) -> Optional[np.ndarray]:
    start = _sample_in_polygon(region, rng)
    heading = rng.uniform(0.0, 2.0 * math.pi)
    ground = _walk(start, heading, speed * cfg.dt, cfg.max_len, cfg.heading_jitter_std, rng)

    pixels, depth = project_ground_points(pose, K, ground)
    inside = (depth > MIN_DEPTH) & K.contains(pixels)
    # in-image prefix: points up to the first one that leaves the image
    available = len(inside) if np.all(inside) else int(np.argmin(inside))
    if available < cfg.min_len:
        return None
    length = int(rng.integers(cfg.min_len, min(cfg.max_len, available) + 1))
    return pixels[:length]


def generate_trajectory(pose: CameraPose, speed: float, K: CameraIntrinsics, cfg: MotionConfig,
                        rng: np.random.Generator, region: Optional[np.ndarray] = None,
                        stats: Optional[GenerationStats] = None) -> Trajectory2D:
    """
    Walk a pedestrian across the visible ground and return its image trajectory

    The pedestrian starts uniformly inside the visible region with a uniform heading and walks
    at constant speed (plus optional heading jitter); points are dt seconds apart. The in-image
    prefix of the walk is cut to a uniformly drawn length in [min_len, min(max_len, prefix)].

    Args:
        pose: Generating camera pose
        speed: Walking speed in m/s; 0 is allowed and yields a degenerate trajectory
        K: Camera intrinsics
        cfg: Motion configuration
        rng: Random generator
        region: Precomputed visible_ground_region (optional)
        stats: Counters to update (optional)

    Returns:
        Trajectory2D with min_len <= N <= max_len and every point inside the image

    Raises:
        GenerationFailureError: After cfg.max_retries rejected attempts
    """
    if region is None:
        region = visible_ground_region(pose, K, cfg.max_range_m)

    for attempt in range(cfg.max_retries):
        points = _try_trajectory(pose, speed, K, cfg, rng, region)
        if points is None:
            continue
        trajectory = Trajectory2D(points)
        if stats is not None:
            stats.trajectories += 1
            stats.rejections += attempt
        if trajectory.is_degenerate:
            logger.warning("degenerate_trajectory", speed=speed, height_m=pose.height_m)
            if stats is not None:
                stats.degenerate += 1
        return trajectory

    raise GenerationFailureError(
        f"no trajectory of at least {cfg.min_len} in-image points after {cfg.max_retries} attempts "
        f"(height {pose.height_m:.3f} m, speed {speed:.3f} m/s)"
    )


def _pose_samples(pose_id: int, pose: CameraPose, speeds: SpeedModel, K: CameraIntrinsics,
                  cfg: MotionConfig, seed: int):
    stats = GenerationStats()
    try:
        region = visible_ground_region(pose, K, cfg.max_range_m)
        pose_speeds = sample_speeds(speeds, np.random.default_rng([seed, _SPEED_STREAM, pose_id]))
        samples = []
        for j, speed in enumerate(pose_speeds):
            rng = np.random.default_rng([seed, _WALK_STREAM, pose_id, j])
            trajectory = generate_trajectory(pose, speed, K, cfg, rng, region=region, stats=stats)
            samples.append(LabeledSample(trajectory=trajectory, pose=pose, speed=speed, pose_id=pose_id))
    except TrajPoseError as exc:
        raise GenerationFailureError(exc.message, pose_id=pose_id) from exc
    if stats.rejections:
        stats.rejections_by_pose[pose_id] = stats.rejections
    return samples, stats


def generate_dataset(spec: PoseGridSpec, speeds: SpeedModel, K: CameraIntrinsics, cfg: MotionConfig,
                     seed: int, workers: int = 1,
                     stats: Optional[GenerationStats] = None) -> List[LabeledSample]:
    """
    Build the labeled synthetic dataset: one trajectory per (grid pose, sampled speed)

    Args:
        spec: Pose grid around the nominal pose
        speeds: Speed model (samples_per_pose speeds per pose)
        K: Camera intrinsics
        cfg: Motion configuration
        seed: Root seed; pose i and speed j use streams derived from (seed, i, j)
        workers: Worker threads (results do not depend on it)
        stats: Counters to fill (optional)

    Returns:
        |grid| * samples_per_pose samples in grid order

    Raises:
        GenerationFailureError: Identifying the first pose (in grid order) that failed
    """
    poses = sample_pose_grid(spec)
    log = logger.bind(poses=len(poses), samples_per_pose=speeds.samples_per_pose, seed=seed)
    log.info("dataset_generation_started", workers=workers)

    def task(item):
        pose_id, pose = item
        return _pose_samples(pose_id, pose, speeds, K, cfg, seed)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(task, enumerate(poses)))
    else:
        results = [task(item) for item in enumerate(poses)]

    samples: List[LabeledSample] = []
    totals = GenerationStats()
    for pose_samples, pose_stats in results:
        samples.extend(pose_samples)
        totals.merge(pose_stats)
    if stats is not None:
        stats.merge(totals)

    log.info("dataset_generated", samples=len(samples), rejections=totals.rejections,
             degenerate=totals.degenerate)
    return samples


def generate_test_set(pose: CameraPose, speeds: SpeedModel, K: CameraIntrinsics, cfg: MotionConfig,
                      count: int, seed: int) -> List[LabeledSample]:
    """Held-out trajectories from a single pose with speeds drawn from the speed model"""
    draws = sample_speeds(replace(speeds, samples_per_pose=count),
                          np.random.default_rng([seed, _TEST_SPEED_STREAM]))
    region = visible_ground_region(pose, K, cfg.max_range_m)
    samples = []
    for k, speed in enumerate(draws):
        rng = np.random.default_rng([seed, _TEST_WALK_STREAM, k])
        trajectory = generate_trajectory(pose, speed, K, cfg, rng, region=region)
        samples.append(LabeledSample(trajectory=trajectory, pose=pose, speed=speed))
    return samples


def trajectory_set_id(trajectories: Sequence[Trajectory2D]) -> str:
    """Content hash identifying a test set"""
    digest = hashlib.sha256()
    for trajectory in trajectories:
        digest.update(np.ascontiguousarray(trajectory.points, dtype="<f8").tobytes())
        digest.update(b"|")
    return digest.hexdigest()[:16]
