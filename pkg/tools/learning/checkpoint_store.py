"""
Checkpoint Store - Binary container for trained regressors

Layout (all integers little-endian):
    8 bytes   magic b"TRJPOSE\\0"
    uint32    format version
    uint64    metadata length, then that many bytes of UTF-8 JSON
    uint32    tensor count
    per tensor: uint16 name length, name (UTF-8), uint8 rank, rank x uint64 dims,
                prod(dims) little-endian float64 values

Model parameters are stored under their store names; ADAM moments under ``adam.m.<name>`` and
``adam.v.<name>``.
"""

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import structlog

from tools.core.errors import CorruptFileError, TrajPoseError, VersionMismatchError
from tools.core.geometry import CameraIntrinsics
from tools.learning.regressor import NORMALIZATION_ID, ArchitectureConfig, LossBreakdown, RegressorModel
from tools.learning.training import AdamState
from tools.simulation.simulator import MotionConfig, PoseGridSpec

logger = structlog.get_logger(__name__)

MAGIC = b"TRJPOSE\x00"
CHECKPOINT_VERSION = 1

_ADAM_M = "adam.m."
_ADAM_V = "adam.v."


@dataclass
class CheckpointMeta:
    """Everything besides the tensors"""
    intrinsics: CameraIntrinsics
    grid: PoseGridSpec
    seed: int
    motion: MotionConfig = field(default_factory=MotionConfig)
    epoch: int = 0
    history: List[LossBreakdown] = field(default_factory=list)
    normalization: str = NORMALIZATION_ID

    def to_dict(self) -> Dict:
        return {
            "intrinsics": self.intrinsics.to_dict(),
            "grid": self.grid.to_dict(),
            "motion": self.motion.to_dict(),
            "seed": self.seed,
            "epoch": self.epoch,
            "history": [entry.to_dict() for entry in self.history],
            "normalization": self.normalization,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "CheckpointMeta":
        return cls(
            intrinsics=CameraIntrinsics.from_dict(data["intrinsics"]),
            grid=PoseGridSpec.from_dict(data["grid"]),
            motion=MotionConfig.from_dict(data["motion"]),
            seed=int(data["seed"]),
            epoch=int(data["epoch"]),
            history=[LossBreakdown.from_dict(entry) for entry in data["history"]],
            normalization=str(data["normalization"]),
        )


@dataclass
class Checkpoint:
    model: RegressorModel
    meta: CheckpointMeta
    adam: Optional[AdamState] = None


def _pack_tensor(name: str, array: np.ndarray) -> bytes:
    encoded = name.encode("utf-8")
    array = np.ascontiguousarray(array, dtype="<f8")
    parts = [
        struct.pack("<H", len(encoded)),
        encoded,
        struct.pack("<B", array.ndim),
        struct.pack(f"<{array.ndim}Q", *array.shape),
        array.tobytes(),
    ]
    return b"".join(parts)


def save_checkpoint(model: RegressorModel, meta: CheckpointMeta, path: Union[str, Path],
                    adam: Optional[AdamState] = None) -> Path:
    """
    Write model parameters, metadata and (optionally) optimizer state

    The file is written next to its destination and renamed into place.
    """
    path = Path(path)
    metadata = meta.to_dict()
    metadata["architecture"] = model.arch.to_dict()
    metadata["adam"] = None
    tensors: List[Tuple[str, np.ndarray]] = list(model.store.items())
    if adam is not None:
        metadata["adam"] = {
            "step": adam.step, "lr": adam.lr, "beta1": adam.beta1, "beta2": adam.beta2, "eps": adam.eps,
        }
        tensors += [(_ADAM_M + name, adam.m[name]) for name in model.store.names()]
        tensors += [(_ADAM_V + name, adam.v[name]) for name in model.store.names()]

    blob = json.dumps(metadata, sort_keys=True).encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    temp_path = path.with_suffix(path.suffix + ".tmp")
    with open(temp_path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        f.write(struct.pack("<I", len(tensors)))
        for name, array in tensors:
            f.write(_pack_tensor(name, array))
    temp_path.replace(path)
    logger.info("checkpoint_saved", path=str(path), epoch=meta.epoch, tensors=len(tensors))
    return path


class _Reader:
    def __init__(self, data: bytes):
        self.data = memoryview(data)
        self.offset = 0

    @property
    def remaining(self) -> int:
        return len(self.data) - self.offset

    def take(self, size: int, what: str) -> memoryview:
        if self.offset + size > len(self.data):
            raise CorruptFileError(f"checkpoint truncated while reading {what} at byte {self.offset}")
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str, what: str):
        values = struct.unpack(fmt, self.take(struct.calcsize(fmt), what))
        return values if len(values) > 1 else values[0]


def _read_tensors(reader: _Reader, count: int) -> Dict[str, np.ndarray]:
    tensors = {}
    for _ in range(count):
        name_length = reader.unpack("<H", "tensor name length")
        raw_name = bytes(reader.take(name_length, "tensor name"))
        try:
            name = raw_name.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorruptFileError(f"tensor name at byte {reader.offset - name_length} is not valid UTF-8") from exc
        rank = reader.unpack("<B", f"rank of {name}")
        dims = struct.unpack(f"<{rank}Q", reader.take(8 * rank, f"dims of {name}")) if rank else ()
        size = math.prod(dims)
        if 8 * size > reader.remaining:
            raise CorruptFileError(f"tensor {name} declares {size} values but only {reader.remaining} bytes remain")
        raw = reader.take(8 * size, f"values of {name}")
        try:
            tensors[name] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(dims)
        except (OverflowError, ValueError) as exc:
            raise CorruptFileError(f"tensor {name} has invalid dims {dims}") from exc
    return tensors


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """
    Read a checkpoint written by save_checkpoint

    Raises:
        CorruptFileError: Missing file, bad magic, truncation, malformed metadata or tensors
        VersionMismatchError: If the format version is not supported
    """
    path = Path(path)
    if not path.is_file():
        raise CorruptFileError(f"checkpoint not found: {path}")
    try:
        reader = _Reader(path.read_bytes())
    except OSError as exc:
        raise CorruptFileError(f"cannot read checkpoint {path}: {exc.strerror or exc}") from exc

    if bytes(reader.take(len(MAGIC), "magic")) != MAGIC:
        raise CorruptFileError(f"{path.name} is not a checkpoint file")
    version = reader.unpack("<I", "version")
    if version != CHECKPOINT_VERSION:
        raise VersionMismatchError(f"checkpoint version {version} is not supported (expected {CHECKPOINT_VERSION})")

    meta_length = reader.unpack("<Q", "metadata length")
    try:
        metadata = json.loads(bytes(reader.take(meta_length, "metadata")).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptFileError(f"invalid checkpoint metadata: {exc}") from exc

    count = reader.unpack("<I", "tensor count")
    tensors = _read_tensors(reader, count)
    if reader.offset != len(reader.data):
        raise CorruptFileError(f"{len(reader.data) - reader.offset} trailing bytes after tensors")

    try:
        meta = CheckpointMeta.from_dict(metadata)
        model = RegressorModel(ArchitectureConfig.from_dict(metadata["architecture"]))
        model.store.load_state_dict({name: tensors[name] for name in tensors
                                     if not name.startswith((_ADAM_M, _ADAM_V))})
        adam = None
        if metadata.get("adam") is not None:
            hyper = metadata["adam"]
            adam = AdamState(
                m={name: tensors[_ADAM_M + name] for name in model.store.names()},
                v={name: tensors[_ADAM_V + name] for name in model.store.names()},
                step=int(hyper["step"]), lr=float(hyper["lr"]), beta1=float(hyper["beta1"]),
                beta2=float(hyper["beta2"]), eps=float(hyper["eps"]),
            )
    except (AttributeError, KeyError, TypeError, ValueError, TrajPoseError) as exc:
        raise CorruptFileError(f"checkpoint contents do not match its metadata: {exc}") from exc

    logger.info("checkpoint_loaded", path=str(path), epoch=meta.epoch)
    return Checkpoint(model=model, meta=meta, adam=adam)
