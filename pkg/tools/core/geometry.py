"""
Geometry - Camera pose representation, ground-plane projection and pose error metrics

Conventions used by every module:
- World frame has z up; pedestrians walk on the ground plane z = 0.
- The camera sits at (0, 0, height) above the world origin.
- Camera axes follow the pinhole convention: x right, y down, z forward (optical axis).
- Orientation is composed as yaw (about world z), then pitch (about the camera x axis),
  then roll (about the optical axis). Pitch 0 looks horizontally, pitch -90 deg looks straight down.
- Quaternions are stored (w, x, y, z) with canonical sign w >= 0.

All functions are pure and operate in double precision.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Sequence, Tuple

import numpy as np

from tools.core.errors import (
    BehindCameraError,
    ConfigError,
    DegenerateMeanError,
    DegenerateOrientationError,
    DegenerateQuaternionError,
    HorizonError,
)

GIMBAL_TOLERANCE = 1e-6
MIN_DEPTH = 1e-9

# Camera axes expressed in the level body frame (x right, y forward, z up).
_CAMERA_IN_BODY = np.array([
    [1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0],
    [0.0, -1.0, 0.0],
])


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixels"""
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ConfigError(f"focal lengths must be positive, got fx={self.fx} fy={self.fy}")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ConfigError(
                f"principal point ({self.cx}, {self.cy}) outside image {self.width}x{self.height}"
            )

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Boolean mask of pixels inside [0, width) x [0, height)"""
        points = np.asarray(points, dtype=np.float64)
        return (
            (points[..., 0] >= 0.0) & (points[..., 0] < self.width)
            & (points[..., 1] >= 0.0) & (points[..., 1] < self.height)
        )

    def to_dict(self) -> Dict:
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "CameraIntrinsics":
        return cls(
            fx=float(data["fx"]), fy=float(data["fy"]),
            cx=float(data["cx"]), cy=float(data["cy"]),
            width=int(data["width"]), height=int(data["height"]),
        )


@dataclass(frozen=True)
class Quaternion:
    """Rotation quaternion stored as (w, x, y, z)"""
    w: float
    x: float
    y: float
    z: float

    @classmethod
    def identity(cls) -> "Quaternion":
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "Quaternion":
        w, x, y, z = (float(v) for v in values)
        return cls(w, x, y, z)

    @classmethod
    def from_axis_angle(cls, axis: Sequence[float], angle: float) -> "Quaternion":
        axis = np.asarray(axis, dtype=np.float64)
        axis = axis / np.linalg.norm(axis)
        s = math.sin(angle / 2.0)
        return cls(math.cos(angle / 2.0), axis[0] * s, axis[1] * s, axis[2] * s)

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z], dtype=np.float64)

    def norm(self) -> float:
        return float(np.linalg.norm(self.as_array()))

    def normalized(self) -> "Quaternion":
        n = self.norm()
        if n < 1e-12:
            raise DegenerateQuaternionError(f"cannot normalize quaternion with norm {n:.3e}")
        return Quaternion.from_array(self.as_array() / n)

    def canonical(self) -> "Quaternion":
        """Same rotation with w >= 0"""
        return -self if self.w < 0 else self

    def dot(self, other: "Quaternion") -> float:
        return float(np.dot(self.as_array(), other.as_array()))

    def __neg__(self) -> "Quaternion":
        return Quaternion(-self.w, -self.x, -self.y, -self.z)

    def __mul__(self, other: "Quaternion") -> "Quaternion":
        return Quaternion.from_array(_quat_multiply(self.as_array(), other.as_array()))

    def rotation_matrix(self) -> np.ndarray:
        """3x3 rotation matrix of the normalized quaternion"""
        w, x, y, z = self.normalized().as_array()
        return np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ])


@dataclass(frozen=True)
class EulerAngles:
    """Yaw / pitch / roll in radians"""
    yaw: float
    pitch: float
    roll: float

    @classmethod
    def from_degrees(cls, yaw: float, pitch: float, roll: float) -> "EulerAngles":
        return cls(math.radians(yaw), math.radians(pitch), math.radians(roll))

    def to_degrees(self) -> Tuple[float, float, float]:
        return (math.degrees(self.yaw), math.degrees(self.pitch), math.degrees(self.roll))


@dataclass(frozen=True)
class CameraPose:
    """
    Observable camera pose: height above the ground and orientation

    The orientation quaternion is stored canonical and unit-norm; its yaw must equal
    ``yaw_ref``, the fixed yaw of the nominal pose.
    """
    height_m: float
    orientation: Quaternion
    yaw_ref: float = 0.0
    _rotation: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.height_m > 0:
            raise ConfigError(f"camera height must be positive, got {self.height_m}")
        orientation = self.orientation.normalized().canonical()
        object.__setattr__(self, "orientation", orientation)
        try:
            yaw = quat_to_euler(orientation).yaw
        except DegenerateOrientationError:
            # looking straight up or down: yaw and roll share an axis, any yaw_ref fits
            yaw = self.yaw_ref
        if abs(_wrap_angle(yaw - self.yaw_ref)) > 1e-9:
            raise ConfigError(
                f"orientation yaw {yaw:.12f} differs from reference yaw {self.yaw_ref:.12f}"
            )
        world_from_camera = orientation.rotation_matrix() @ _CAMERA_IN_BODY
        world_from_camera.setflags(write=False)
        object.__setattr__(self, "_rotation", world_from_camera)

    @classmethod
    def from_euler(cls, height_m: float, angles: EulerAngles) -> "CameraPose":
        return cls(height_m=height_m, orientation=euler_to_quat(angles), yaw_ref=angles.yaw)

    @property
    def center(self) -> np.ndarray:
        return np.array([0.0, 0.0, self.height_m])

    @property
    def world_from_camera(self) -> np.ndarray:
        return self._rotation

    def euler(self) -> EulerAngles:
        """Euler angles of the orientation; at gimbal lock yaw is pinned to yaw_ref"""
        return euler_with_yaw(self.orientation, self.yaw_ref)

    def to_dict(self) -> Dict:
        return {
            "height_m": self.height_m,
            "quat": self.orientation.as_array().tolist(),
            "euler_deg": list(self.euler().to_degrees()),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "CameraPose":
        orientation = Quaternion.from_array(data["quat"])
        if "euler_deg" in data:
            yaw_ref = math.radians(float(data["euler_deg"][0]))
        else:
            yaw_ref = quat_to_euler(orientation.normalized()).yaw
        return cls(height_m=float(data["height_m"]), orientation=orientation, yaw_ref=yaw_ref)


def _wrap_angle(angle: float) -> float:
    return math.atan2(math.sin(angle), math.cos(angle))


def _quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a * b"""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def euler_to_quat(e: EulerAngles) -> Quaternion:
    """
    Convert yaw / pitch / roll to a canonical unit quaternion

    The rotation is Rz(yaw) * Rx(pitch) * Ry(roll) in the level body frame, whose y axis is the
    camera's optical axis and whose x axis is the camera's x axis.
    """
    qz = np.array([math.cos(e.yaw / 2), 0.0, 0.0, math.sin(e.yaw / 2)])
    qx = np.array([math.cos(e.pitch / 2), math.sin(e.pitch / 2), 0.0, 0.0])
    qy = np.array([math.cos(e.roll / 2), 0.0, math.sin(e.roll / 2), 0.0])
    q = _quat_multiply(_quat_multiply(qz, qx), qy)
    q = q / np.linalg.norm(q)
    return Quaternion.from_array(q).canonical()


def quat_to_euler(q: Quaternion) -> EulerAngles:
    """
    Convert a unit quaternion back to yaw / pitch / roll

    Raises:
        DegenerateOrientationError: If |pitch| is within GIMBAL_TOLERANCE of pi/2
    """
    r = q.rotation_matrix()
    pitch = math.atan2(r[2, 1], math.hypot(r[2, 0], r[2, 2]))
    if math.pi / 2 - abs(pitch) < GIMBAL_TOLERANCE:
        raise DegenerateOrientationError(
            f"pitch {math.degrees(pitch):.9f} deg is at gimbal lock; yaw and roll are not separable"
        )
    yaw = math.atan2(-r[0, 1], r[1, 1])
    roll = math.atan2(-r[2, 0], r[2, 2])
    return EulerAngles(yaw=yaw, pitch=pitch, roll=roll)


def euler_with_yaw(q: Quaternion, yaw: float) -> EulerAngles:
    """
    Euler angles of q, falling back to a fixed yaw at gimbal lock

    Away from gimbal lock this equals quat_to_euler(q). At |pitch| = pi/2 only yaw + roll (or
    yaw - roll) is observable, so yaw is taken as given and roll solved for.
    """
    try:
        return quat_to_euler(q)
    except DegenerateOrientationError:
        r = q.rotation_matrix()
        pitch = math.copysign(math.pi / 2, r[2, 1])
        c, s = math.cos(yaw), math.sin(yaw)
        cp, sp = math.cos(pitch), math.sin(pitch)
        rz_t = np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])
        rx_t = np.array([[1.0, 0.0, 0.0], [0.0, cp, sp], [0.0, -sp, cp]])
        ry = rx_t @ rz_t @ r
        return EulerAngles(yaw=yaw, pitch=pitch, roll=math.atan2(ry[0, 2], ry[0, 0]))


def project_ground_points(pose: CameraPose, K: CameraIntrinsics,
                          ground_xy: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Project ground points (X, Y, 0) into the image without raising

    Args:
        pose: Camera pose
        K: Camera intrinsics
        ground_xy: Array of shape (N, 2) in meters

    Returns:
        (pixels of shape (N, 2), depth of shape (N,)); pixels are NaN where depth <= MIN_DEPTH
    """
    ground_xy = np.asarray(ground_xy, dtype=np.float64).reshape(-1, 2)
    offsets = np.column_stack([ground_xy, np.zeros(len(ground_xy))]) - pose.center
    cam = offsets @ pose.world_from_camera
    depth = cam[:, 2]
    pixels = np.full((len(ground_xy), 2), np.nan)
    ok = depth > MIN_DEPTH
    pixels[ok, 0] = K.cx + K.fx * cam[ok, 0] / depth[ok]
    pixels[ok, 1] = K.cy + K.fy * cam[ok, 1] / depth[ok]
    return pixels, depth


def project_ground_point(pose: CameraPose, K: CameraIntrinsics,
                         g: Sequence[float]) -> Tuple[float, float]:
    """
    Project one ground point (X, Y, 0) to continuous pixel coordinates

    Points may fall outside the image; callers filter.

    Raises:
        BehindCameraError: If the point's depth is <= 1e-9 m
    """
    pixels, depth = project_ground_points(pose, K, np.asarray(g[:2], dtype=np.float64))
    if not depth[0] > MIN_DEPTH:
        raise BehindCameraError(f"ground point {tuple(g)} has depth {depth[0]:.3e} m")
    return float(pixels[0, 0]), float(pixels[0, 1])


def pixel_rays(pose: CameraPose, K: CameraIntrinsics, pixels: np.ndarray) -> np.ndarray:
    """World-frame viewing ray directions (not normalized) for pixels of shape (N, 2)"""
    pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    rays_cam = np.column_stack([
        (pixels[:, 0] - K.cx) / K.fx,
        (pixels[:, 1] - K.cy) / K.fy,
        np.ones(len(pixels)),
    ])
    return rays_cam @ pose.world_from_camera.T


def backproject_pixels(pose: CameraPose, K: CameraIntrinsics, pixels: np.ndarray) -> np.ndarray:
    """
    Intersect viewing rays of pixels (N, 2) with the ground plane

    Raises:
        HorizonError: If any ray is parallel to the ground or points upward
    """
    rays = pixel_rays(pose, K, pixels)
    down = rays[:, 2] < -1e-12 * np.linalg.norm(rays, axis=1)
    if not np.all(down):
        bad = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)[~down][0]
        raise HorizonError(f"pixel ({bad[0]:.3f}, {bad[1]:.3f}) is at or above the horizon")
    t = -pose.height_m / rays[:, 2]
    return rays[:, :2] * t[:, None]


def backproject_pixel(pose: CameraPose, K: CameraIntrinsics, p: Sequence[float]) -> Tuple[float, float]:
    """Ground point (X, Y) seen at pixel p"""
    ground = backproject_pixels(pose, K, np.asarray(p, dtype=np.float64))
    return float(ground[0, 0]), float(ground[0, 1])


def position_error(t_true: float, t_pred: float) -> float:
    """Euclidean distance in the one-dimensional (height) location space"""
    return abs(float(t_true) - float(t_pred))


def orientation_error(q_true: Quaternion, q_pred: Quaternion) -> float:
    """
    Rotation angle between two orientations, in radians within [0, pi]

    Same value as 2 * acos(|<q_true, q_pred>|), evaluated with atan2 so it stays accurate for
    nearly identical orientations.
    """
    a = q_true.normalized().as_array()
    b = q_pred.normalized().as_array()
    if np.dot(a, b) < 0:
        b = -b
    return 4.0 * math.atan2(float(np.linalg.norm(a - b)), float(np.linalg.norm(a + b)))


def aggregate_quaternions(qs: Iterable[Quaternion]) -> Quaternion:
    """
    Mean orientation: sign-align to the first quaternion, average components, renormalize

    Raises:
        DegenerateMeanError: If the list is empty or the component mean has norm < 1e-9
    """
    stacked = np.array([q.as_array() for q in qs], dtype=np.float64)
    if len(stacked) == 0:
        raise DegenerateMeanError("cannot aggregate an empty list of quaternions")
    signs = np.where(stacked @ stacked[0] < 0, -1.0, 1.0)
    mean = (stacked * signs[:, None]).mean(axis=0)
    n = np.linalg.norm(mean)
    if n < 1e-9:
        raise DegenerateMeanError(f"quaternion mean has norm {n:.3e}")
    return Quaternion.from_array(mean / n).canonical()
