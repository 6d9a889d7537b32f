"""
Dataset Store - JSON Lines persistence for synthetic datasets

Line 1 is a header carrying the format version, intrinsics, grid spec, speed model,
motion config and seed. Every following line is one labeled sample:
{"pose_id", "height_m", "quat", "euler_deg", "speed_mps", "points"}.

Writes go to a temp file first and are renamed into place.
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, List, Tuple, Union

import structlog

from tools.core.errors import CorruptFileError, TrajPoseError, VersionMismatchError
from tools.core.geometry import CameraIntrinsics, CameraPose
from tools.simulation.simulator import (
    LabeledSample,
    MotionConfig,
    PoseGridSpec,
    SpeedModel,
    Trajectory2D,
)

logger = structlog.get_logger(__name__)

DATASET_FORMAT = "trajpose-dataset"
DATASET_VERSION = 1


@dataclass(frozen=True)
class DatasetHeader:
    """Everything needed to regenerate or interpret a dataset file"""
    intrinsics: CameraIntrinsics
    grid: PoseGridSpec
    speeds: SpeedModel
    motion: MotionConfig
    seed: int
    version: int = DATASET_VERSION

    def to_dict(self) -> Dict:
        return {
            "format": DATASET_FORMAT,
            "version": self.version,
            "intrinsics": self.intrinsics.to_dict(),
            "grid": self.grid.to_dict(),
            "speeds": self.speeds.to_dict(),
            "motion": self.motion.to_dict(),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "DatasetHeader":
        return cls(
            intrinsics=CameraIntrinsics.from_dict(data["intrinsics"]),
            grid=PoseGridSpec.from_dict(data["grid"]),
            speeds=SpeedModel.from_dict(data["speeds"]),
            motion=MotionConfig.from_dict(data["motion"]),
            seed=int(data["seed"]),
            version=int(data["version"]),
        )


def _sample_to_dict(sample: LabeledSample) -> Dict:
    pose = sample.pose.to_dict()
    return {
        "pose_id": sample.pose_id,
        "height_m": pose["height_m"],
        "quat": pose["quat"],
        "euler_deg": pose["euler_deg"],
        "speed_mps": float(sample.speed),
        "points": sample.trajectory.to_list(),
    }


def _sample_from_dict(data: Dict) -> LabeledSample:
    pose = CameraPose.from_dict(data)
    return LabeledSample(
        trajectory=Trajectory2D(data["points"]),
        pose=pose,
        speed=float(data["speed_mps"]),
        pose_id=int(data["pose_id"]),
    )


def _dumps(obj: Dict) -> str:
    return json.dumps(obj, separators=(",", ":"))


def write_dataset(path: Union[str, Path], header: DatasetHeader, samples: List[LabeledSample]) -> Path:
    """
    Write a dataset file atomically

    Args:
        path: Destination .jsonl path
        header: Dataset header
        samples: Labeled samples in generation order

    Returns:
        The written path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    temp_path = path.with_suffix(path.suffix + ".tmp")
    with open(temp_path, "w", encoding="utf-8", newline="\n") as f:
        f.write(_dumps(header.to_dict()) + "\n")
        for sample in samples:
            f.write(_dumps(_sample_to_dict(sample)) + "\n")
    temp_path.replace(path)
    logger.info("dataset_written", path=str(path), samples=len(samples))
    return path


def _iter_lines(path: Path) -> Iterator[Tuple[int, str]]:
    try:
        with open(path, "rb") as f:
            for line_number, raw in enumerate(f, start=1):
                try:
                    yield line_number, raw.decode("utf-8")
                except UnicodeDecodeError as exc:
                    raise CorruptFileError(f"{path.name} is not valid UTF-8: {exc.reason}", line=line_number) from exc
    except OSError as exc:
        raise CorruptFileError(f"cannot read dataset {path}: {exc.strerror or exc}") from exc


def read_dataset(path: Union[str, Path]) -> Tuple[DatasetHeader, List[LabeledSample]]:
    """
    Read a dataset file

    Raises:
        CorruptFileError: Naming the 1-based line that failed to decode or parse
        VersionMismatchError: If the header's format version is not supported
    """
    path = Path(path)
    if not path.is_file():
        raise CorruptFileError(f"dataset file not found: {path}")

    header = None
    samples: List[LabeledSample] = []
    for line_number, line in _iter_lines(path):
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorruptFileError(f"invalid JSON in {path.name}: {exc.msg}", line=line_number) from exc

        if line_number == 1:
            if not isinstance(record, dict) or record.get("format") != DATASET_FORMAT:
                raise CorruptFileError(f"{path.name} is not a dataset file", line=1)
            if record.get("version") != DATASET_VERSION:
                raise VersionMismatchError(
                    f"dataset version {record.get('version')} is not supported "
                    f"(expected {DATASET_VERSION})"
                )
            try:
                header = DatasetHeader.from_dict(record)
            except (KeyError, TypeError, ValueError, TrajPoseError) as exc:
                raise CorruptFileError(f"invalid header: {exc}", line=1) from exc
            continue

        try:
            samples.append(_sample_from_dict(record))
        except (KeyError, TypeError, ValueError, TrajPoseError) as exc:
            raise CorruptFileError(f"invalid sample: {exc}", line=line_number) from exc

    if header is None:
        raise CorruptFileError(f"{path.name} is empty")
    return header, samples
