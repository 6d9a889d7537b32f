"""
Errors - Exception hierarchy shared by every stage of the pipeline

Every failure the pipeline can report carries an ErrorCode so the command line
can print a single machine-parsable line (``E_<CODE>: message``).
"""

from enum import Enum
from typing import Optional


class ErrorCode(Enum):
    """Machine-parsable error codes"""
    CONFIG = "CONFIG"
    DEGENERATE_ORIENTATION = "DEGENERATE_ORIENTATION"
    BEHIND_CAMERA = "BEHIND_CAMERA"
    HORIZON = "HORIZON"
    DEGENERATE_MEAN = "DEGENERATE_MEAN"
    EMPTY_GRID = "EMPTY_GRID"
    NO_GROUND_VISIBLE = "NO_GROUND_VISIBLE"
    GENERATION_FAILURE = "GENERATION_FAILURE"
    SHAPE_MISMATCH = "SHAPE_MISMATCH"
    NUMERIC_FAILURE = "NUMERIC_FAILURE"
    DEGENERATE_QUATERNION = "DEGENERATE_QUATERNION"
    INPUT_DOMAIN = "INPUT_DOMAIN"
    CORRUPT_FILE = "CORRUPT_FILE"
    VERSION_MISMATCH = "VERSION_MISMATCH"
    NO_PREDICTION = "NO_PREDICTION"
    MALFORMED_ROW = "MALFORMED_ROW"


class TrajPoseError(Exception):
    """Base class for all pipeline errors"""

    code: ErrorCode = ErrorCode.CONFIG

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message

    def one_line(self) -> str:
        """Render as ``E_<CODE>: message`` on a single line"""
        text = " ".join(self.message.split())
        return f"E_{self.code.value}: {text}"

    def annotate(self, prefix: str) -> "TrajPoseError":
        """Prefix the message in place (keeps the type and attributes) and return self"""
        self.message = f"{prefix}: {self.message}"
        self.args = (self.message,)
        return self


class ConfigError(TrajPoseError):
    code = ErrorCode.CONFIG


class DegenerateOrientationError(TrajPoseError):
    """Orientation sits at (or numerically next to) gimbal lock"""
    code = ErrorCode.DEGENERATE_ORIENTATION


class BehindCameraError(TrajPoseError):
    code = ErrorCode.BEHIND_CAMERA


class HorizonError(TrajPoseError):
    """Viewing ray is parallel to the ground or meets it behind the camera"""
    code = ErrorCode.HORIZON


class DegenerateMeanError(TrajPoseError):
    code = ErrorCode.DEGENERATE_MEAN


class EmptyGridError(TrajPoseError):
    code = ErrorCode.EMPTY_GRID


class NoGroundVisibleError(TrajPoseError):
    code = ErrorCode.NO_GROUND_VISIBLE


class GenerationFailureError(TrajPoseError):
    """Trajectory generation gave up after the configured number of retries"""
    code = ErrorCode.GENERATION_FAILURE

    def __init__(self, message: str, pose_id: Optional[int] = None):
        if pose_id is not None:
            message = f"pose {pose_id}: {message}"
        super().__init__(message)
        self.pose_id = pose_id


class ShapeMismatchError(TrajPoseError):
    code = ErrorCode.SHAPE_MISMATCH


class NumericFailureError(TrajPoseError):
    """NaN or Inf appeared in a tensor"""
    code = ErrorCode.NUMERIC_FAILURE

    def __init__(self, message: str, epoch: Optional[int] = None, batch: Optional[int] = None):
        if epoch is not None:
            message = f"epoch {epoch} batch {batch}: {message}"
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch


class DegenerateQuaternionError(TrajPoseError):
    code = ErrorCode.DEGENERATE_QUATERNION


class InputDomainError(TrajPoseError):
    code = ErrorCode.INPUT_DOMAIN


class CorruptFileError(TrajPoseError):
    code = ErrorCode.CORRUPT_FILE

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class VersionMismatchError(TrajPoseError):
    code = ErrorCode.VERSION_MISMATCH


class NoPredictionError(TrajPoseError):
    code = ErrorCode.NO_PREDICTION


class MalformedRowError(TrajPoseError):
    code = ErrorCode.MALFORMED_ROW

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line
