"""
Pose Regressor - Trajectory in, camera height and orientation out

Architecture:
- FE: bidirectional LSTM over the normalized pixel trajectory, u = [h_fwd; h_bwd]
- JE: three dense layers with ReLU, v = JE(u)
- LB: location branch, 3 dense layers (ReLU after the first two) -> height t
- OB: orientation branch, 3 dense layers (ReLU after the first two) -> quaternion q

Loss per sample: |t* - t| + alpha * ||q* - q / ||q|| ||, with q* flipped to the hemisphere of
the normalized prediction.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from tools.core.errors import ConfigError, DegenerateQuaternionError, InputDomainError, ShapeMismatchError
from tools.core.geometry import CameraIntrinsics, CameraPose, Quaternion
from tools.core.neuralnet import (
    BiLstmCache,
    LinearLayer,
    LstmCell,
    ParameterStore,
    Tensor,
    bilstm_backward,
    bilstm_encode,
    check_finite,
    init_params,
    linear,
    relu,
    relu_backward,
)
from tools.simulation.simulator import Trajectory2D

NORMALIZATION_ID = "image-affine-v1"
MIN_QUAT_NORM = 1e-9


@dataclass(frozen=True)
class ArchitectureConfig:
    """Layer sizes of the regressor"""
    hidden_size: int = 64
    joint_sizes: Tuple[int, ...] = (256, 1024, 512)
    branch_sizes: Tuple[int, ...] = (256, 128)
    bidirectional: bool = True

    def __post_init__(self):
        object.__setattr__(self, "joint_sizes", tuple(int(s) for s in self.joint_sizes))
        object.__setattr__(self, "branch_sizes", tuple(int(s) for s in self.branch_sizes))
        if self.hidden_size < 1 or not self.joint_sizes:
            raise ConfigError("hidden_size must be >= 1 and joint_sizes non-empty")
        if any(s < 1 for s in self.joint_sizes + self.branch_sizes):
            raise ConfigError("layer sizes must be >= 1")

    @property
    def feature_size(self) -> int:
        """Size of u"""
        return self.hidden_size * (2 if self.bidirectional else 1)

    def to_dict(self) -> Dict:
        return {
            "hidden_size": self.hidden_size,
            "joint_sizes": list(self.joint_sizes),
            "branch_sizes": list(self.branch_sizes),
            "bidirectional": self.bidirectional,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "ArchitectureConfig":
        return cls(
            hidden_size=int(data["hidden_size"]),
            joint_sizes=tuple(data["joint_sizes"]),
            branch_sizes=tuple(data["branch_sizes"]),
            bidirectional=bool(data["bidirectional"]),
        )


@dataclass(frozen=True, eq=False)
class PosePrediction:
    """Raw network output for one trajectory"""
    height_m: float
    quat_raw: np.ndarray
    quat_unit: np.ndarray = field(init=False)

    def __post_init__(self):
        raw = np.array(self.quat_raw, dtype=np.float64)
        n = float(np.linalg.norm(raw))
        if n < MIN_QUAT_NORM:
            raise DegenerateQuaternionError(f"predicted quaternion has norm {n:.3e}")
        raw.setflags(write=False)
        unit = raw / n
        unit.setflags(write=False)
        object.__setattr__(self, "quat_raw", raw)
        object.__setattr__(self, "quat_unit", unit)

    @property
    def orientation(self) -> Quaternion:
        return Quaternion.from_array(self.quat_unit)

    def to_dict(self) -> Dict:
        return {
            "height_m": self.height_m,
            "quat_raw": self.quat_raw.tolist(),
            "quat": self.orientation.canonical().as_array().tolist(),
        }


@dataclass(frozen=True)
class LossBreakdown:
    """total = location_term + alpha * orientation_term"""
    total: float
    location_term: float
    orientation_term: float
    alpha: float = 1.0

    def to_dict(self) -> Dict:
        return {
            "total": self.total,
            "location": self.location_term,
            "orientation": self.orientation_term,
            "alpha": self.alpha,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "LossBreakdown":
        return cls(float(data["total"]), float(data["location"]),
                   float(data["orientation"]), float(data["alpha"]))


class RegressorModel:
    """
    FE -> JE -> (LB, OB) regressor

    All parameters live in ``self.store``; the model itself only keeps the layer wiring.
    """

    def __init__(self, arch: Optional[ArchitectureConfig] = None, seed: Optional[int] = None):
        self.arch = arch or ArchitectureConfig()
        self.store = ParameterStore()
        h = self.arch.hidden_size

        self.fe_fwd = LstmCell(self.store, "fe.fwd", 2, h)
        self.fe_bwd = LstmCell(self.store, "fe.bwd", 2, h) if self.arch.bidirectional else None

        joint = (self.arch.feature_size,) + self.arch.joint_sizes
        self.je = [LinearLayer(self.store, f"je.{k}", a, b) for k, (a, b) in enumerate(zip(joint, joint[1:]))]

        self.lb = self._branch("lb", 1)
        self.ob = self._branch("ob", 4)

        if seed is not None:
            self.initialize(seed)

    def _branch(self, name: str, n_out: int) -> List[LinearLayer]:
        sizes = (self.arch.joint_sizes[-1],) + self.arch.branch_sizes + (n_out,)
        return [LinearLayer(self.store, f"{name}.{k}", a, b) for k, (a, b) in enumerate(zip(sizes, sizes[1:]))]

    def initialize(self, seed: int) -> "RegressorModel":
        init_params(self.store, np.random.default_rng(seed))
        return self

    def __repr__(self) -> str:
        return f"RegressorModel({self.arch}, parameters={self.store.num_parameters()})"


@dataclass
class _ForwardCache:
    fe: BiLstmCache
    je: List[Tuple[Tensor, Tensor]]
    lb: List[Tuple[Tensor, Tensor]]
    ob: List[Tuple[Tensor, Tensor]]


def _mlp_forward(layers: List[LinearLayer], x: Tensor, relu_last: bool) -> Tuple[Tensor, List[Tuple[Tensor, Tensor]]]:
    caches = []
    for k, layer in enumerate(layers):
        z = linear(layer, x)
        caches.append((x, z))
        x = relu(z) if relu_last or k < len(layers) - 1 else z
    return x, caches


def _mlp_backward(layers: List[LinearLayer], dy: Tensor, caches: List[Tuple[Tensor, Tensor]],
                  relu_last: bool) -> Tensor:
    for k in reversed(range(len(layers))):
        x, z = caches[k]
        if relu_last or k < len(layers) - 1:
            dy = relu_backward(z, dy)
        dy = layers[k].backward(x, dy)
    return dy


def normalize_input(traj: Trajectory2D, K: CameraIntrinsics) -> Tensor:
    """
    Map pixels to [-1, 1): (u, v) -> (2u / width - 1, 2v / height - 1)

    Raises:
        InputDomainError: If any point lies outside the image
    """
    points = traj.points if isinstance(traj, Trajectory2D) else np.asarray(traj, dtype=np.float64)
    if not np.all(K.contains(points)):
        raise InputDomainError("trajectory has points outside the image")
    scale = np.array([2.0 / K.width, 2.0 / K.height])
    return points * scale - 1.0


def denormalize_input(x: Tensor, K: CameraIntrinsics) -> Tensor:
    """Inverse of normalize_input"""
    return (np.asarray(x, dtype=np.float64) + 1.0) * np.array([K.width / 2.0, K.height / 2.0])


def forward_tensors(model: RegressorModel, x: Tensor) -> Tuple[Tensor, Tensor, _ForwardCache]:
    """
    Batched forward pass on normalized input

    Args:
        model: Regressor
        x: (B, N, 2) normalized trajectories of one length

    Returns:
        (t of shape (B,), q_raw of shape (B, 4), cache for backward_tensors)
    """
    if x.ndim != 3 or x.shape[2] != 2:
        raise ShapeMismatchError(f"expected (B, N, 2) input, got {x.shape}")
    u, fe_cache = bilstm_encode(model.fe_fwd, model.fe_bwd, x)
    v, je_cache = _mlp_forward(model.je, u, relu_last=True)
    t, lb_cache = _mlp_forward(model.lb, v, relu_last=False)
    q, ob_cache = _mlp_forward(model.ob, v, relu_last=False)
    check_finite(t, "location branch output")
    check_finite(q, "orientation branch output")
    return t[:, 0], q, _ForwardCache(fe_cache, je_cache, lb_cache, ob_cache)


def backward_tensors(model: RegressorModel, dt: Tensor, dq: Tensor, cache: _ForwardCache) -> None:
    """Accumulate parameter gradients given d loss / d t (B,) and d loss / d q_raw (B, 4)"""
    dv = _mlp_backward(model.lb, dt[:, None], cache.lb, relu_last=False)
    dv = dv + _mlp_backward(model.ob, dq, cache.ob, relu_last=False)
    du = _mlp_backward(model.je, dv, cache.je, relu_last=True)
    bilstm_backward(model.fe_fwd, model.fe_bwd, du, cache.fe)


def forward(model: RegressorModel, traj: Trajectory2D, K: CameraIntrinsics) -> PosePrediction:
    """Predict (t, q) for one trajectory; deterministic given the parameters"""
    x = normalize_input(traj, K)[None]
    t, q, _ = forward_tensors(model, x)
    return PosePrediction(height_m=float(t[0]), quat_raw=q[0])


def predict_batch(model: RegressorModel, trajectories: Sequence[Trajectory2D],
                  K: CameraIntrinsics) -> List[PosePrediction]:
    """Predict for trajectories of a common length in one batched pass"""
    x = np.stack([normalize_input(traj, K) for traj in trajectories])
    t, q, _ = forward_tensors(model, x)
    return [PosePrediction(height_m=float(t[b]), quat_raw=q[b]) for b in range(len(t))]


def label_arrays(labels: Sequence[CameraPose]) -> Tuple[Tensor, Tensor]:
    """Stack label heights (B,) and canonical unit quaternions (B, 4)"""
    heights = np.array([pose.height_m for pose in labels], dtype=np.float64)
    quats = np.stack([pose.orientation.as_array() for pose in labels])
    return heights, quats


def loss_terms(t: Tensor, q: Tensor, t_star: Tensor, q_star: Tensor,
               alpha: float) -> Tuple[Tensor, Tensor, Tensor, Tensor]:
    """
    Per-sample loss terms and their gradients

    Returns:
        (location (B,), orientation (B,), d total / d t (B,), d total / d q (B, 4)), gradients of
        the per-sample totals, not of their mean

    Raises:
        DegenerateQuaternionError: If any ||q|| < 1e-9
    """
    if not alpha > 0:
        raise ConfigError(f"alpha must be positive, got {alpha}")
    norms = np.linalg.norm(q, axis=1)
    if np.any(norms < MIN_QUAT_NORM):
        raise DegenerateQuaternionError(f"predicted quaternion has norm {norms.min():.3e}")
    qn = q / norms[:, None]
    signs = np.where(np.sum(q_star * qn, axis=1) < 0, -1.0, 1.0)
    diff = qn - q_star * signs[:, None]

    location = np.abs(t_star - t)
    orientation = np.linalg.norm(diff, axis=1)

    dt = np.sign(t - t_star)
    safe = np.where(orientation > 0, orientation, 1.0)
    g = alpha * diff / safe[:, None] * (orientation > 0)[:, None]
    dq = (g - qn * np.sum(qn * g, axis=1, keepdims=True)) / norms[:, None]
    return location, orientation, dt, dq


def loss(pred: PosePrediction, label: CameraPose, alpha: float = 1.0) -> LossBreakdown:
    """Loss of one prediction against its label pose"""
    t_star, q_star = label_arrays([label])
    location, orientation, _, _ = loss_terms(
        np.array([pred.height_m]), pred.quat_raw[None], t_star, q_star, alpha
    )
    loc, ori = float(location[0]), float(orientation[0])
    return LossBreakdown(total=loc + alpha * ori, location_term=loc, orientation_term=ori, alpha=alpha)


def batch_loss(model: RegressorModel, x: Tensor, t_star: Tensor, q_star: Tensor,
               alpha: float = 1.0) -> LossBreakdown:
    """Mean loss of a normalized batch, without touching gradients"""
    t, q, _ = forward_tensors(model, x)
    location, orientation, _, _ = loss_terms(t, q, t_star, q_star, alpha)
    loc, ori = float(location.mean()), float(orientation.mean())
    return LossBreakdown(total=loc + alpha * ori, location_term=loc, orientation_term=ori, alpha=alpha)


def backward_batch(model: RegressorModel, x: Tensor, t_star: Tensor, q_star: Tensor,
                   alpha: float = 1.0) -> LossBreakdown:
    """
    Gradients of the mean batch loss into model.store (previous gradients are cleared)

    Args:
        model: Regressor
        x: (B, N, 2) normalized trajectories
        t_star: (B,) label heights
        q_star: (B, 4) label quaternions

    Returns:
        Mean LossBreakdown of the batch
    """
    if len(x) == 0:
        raise ShapeMismatchError("empty batch")
    model.store.zero_grad()
    t, q, cache = forward_tensors(model, x)
    location, orientation, dt, dq = loss_terms(t, q, t_star, q_star, alpha)
    batch = len(x)
    backward_tensors(model, dt / batch, dq / batch, cache)
    for name in model.store.names():
        check_finite(model.store.grad(name), f"gradient of {name}")
    loc, ori = float(location.mean()), float(orientation.mean())
    return LossBreakdown(total=loc + alpha * ori, location_term=loc, orientation_term=ori, alpha=alpha)


def backward(model: RegressorModel, batch: Sequence[Tuple[Trajectory2D, CameraPose]], K: CameraIntrinsics,
             alpha: float = 1.0) -> LossBreakdown:
    """Gradients of the mean loss of (trajectory, label) pairs sharing one length"""
    if not batch:
        raise ShapeMismatchError("empty batch")
    lengths = {len(traj) for traj, _ in batch}
    if len(lengths) != 1:
        raise ShapeMismatchError(f"batch mixes trajectory lengths {sorted(lengths)}")
    x = np.stack([normalize_input(traj, K) for traj, _ in batch])
    t_star, q_star = label_arrays([label for _, label in batch])
    return backward_batch(model, x, t_star, q_star, alpha)
