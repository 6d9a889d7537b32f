"""
Training - ADAM optimization of the pose regressor over length-bucketed batches

Epoch e shuffles with a generator seeded from (seed, e), so a run resumed from a checkpoint at
epoch e reproduces the history of an uninterrupted run.
"""

import math
import time
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import structlog

from tools.core.errors import ConfigError, NumericFailureError, ShapeMismatchError
from tools.core.geometry import CameraIntrinsics
from tools.core.neuralnet import ParameterStore, Tensor, check_finite
from tools.learning.regressor import (
    LossBreakdown,
    RegressorModel,
    backward_batch,
    label_arrays,
    normalize_input,
)
from tools.simulation.simulator import LabeledSample

logger = structlog.get_logger(__name__)


@dataclass
class AdamState:
    """First/second moment estimates per parameter plus the step counter"""
    m: Dict[str, Tensor] = field(default_factory=dict)
    v: Dict[str, Tensor] = field(default_factory=dict)
    step: int = 0
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_store(cls, store: ParameterStore, **hyper) -> "AdamState":
        state = cls(**hyper)
        for name, param in store.items():
            state.m[name] = np.zeros_like(param)
            state.v[name] = np.zeros_like(param)
        return state


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings"""
    batch_size: int = 1024
    epochs_per_round: int = 50
    rounds: int = 1
    alpha: float = 1.0
    seed: int = 0
    shuffle: bool = True
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: Optional[float] = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs_per_round < 1 or self.rounds < 1:
            raise ConfigError("epochs_per_round and rounds must be >= 1")
        if not self.alpha > 0 or not self.lr > 0:
            raise ConfigError("alpha and lr must be positive")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise ConfigError("clip_norm must be positive when set")

    @property
    def total_epochs(self) -> int:
        return self.epochs_per_round * self.rounds

    def new_adam_state(self, store: ParameterStore) -> AdamState:
        return AdamState.for_store(store, lr=self.lr, beta1=self.beta1, beta2=self.beta2, eps=self.eps)


@dataclass
class TrainResult:
    model: RegressorModel
    history: List[LossBreakdown]
    adam: AdamState


RoundCallback = Callable[[int, TrainResult], None]


def make_batches(dataset: Sequence[LabeledSample], batch_size: int, rng: Optional[np.random.Generator],
                 shuffle: bool = True) -> List[np.ndarray]:
    """
    Partition dataset indices into batches of a single trajectory length

    Samples are grouped by length, shuffled within each group, chunked to at most batch_size,
    and the resulting batch order is shuffled. Every index appears exactly once.

    Returns:
        List of index arrays into dataset
    """
    if not dataset:
        raise ShapeMismatchError("cannot batch an empty dataset")
    groups: Dict[int, List[int]] = defaultdict(list)
    for index, sample in enumerate(dataset):
        groups[len(sample.trajectory)].append(index)

    batches = []
    for length in sorted(groups):
        indices = np.array(groups[length], dtype=np.int64)
        if shuffle and rng is not None:
            indices = rng.permutation(indices)
        for start in range(0, len(indices), batch_size):
            batches.append(indices[start:start + batch_size])

    if shuffle and rng is not None:
        order = rng.permutation(len(batches))
        batches = [batches[k] for k in order]
    return batches


def clip_gradients(grads: Dict[str, Tensor], max_norm: float) -> float:
    """Rescale gradients in place so their global norm is at most max_norm; returns the norm before"""
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


def adam_step(params: Dict[str, Tensor], grads: Dict[str, Tensor], state: AdamState) -> AdamState:
    """
    One bias-corrected ADAM update, applied to params in place

    Raises:
        ShapeMismatchError: If a gradient's shape differs from its parameter
        NumericFailureError: If a gradient or updated parameter is not finite
    """
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step

    for name, param in params.items():
        g = grads[name]
        if g.shape != param.shape:
            raise ShapeMismatchError(f"{name}: gradient shape {g.shape} != parameter shape {param.shape}")
        check_finite(g, f"gradient of {name}")
        if name not in state.m:
            state.m[name] = np.zeros_like(param)
            state.v[name] = np.zeros_like(param)

        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)

        param -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        check_finite(param, f"parameter {name}")
    return state


class _PreparedDataset:
    """Normalized inputs and label arrays, indexed like the dataset"""

    def __init__(self, dataset: Sequence[LabeledSample], K: CameraIntrinsics):
        self.inputs = [normalize_input(sample.trajectory, K) for sample in dataset]
        self.heights, self.quats = label_arrays([sample.pose for sample in dataset])

    def batch(self, indices: np.ndarray):
        return np.stack([self.inputs[i] for i in indices]), self.heights[indices], self.quats[indices]


def train(model: RegressorModel, dataset: Sequence[LabeledSample], K: CameraIntrinsics, cfg: TrainConfig,
          start_epoch: int = 0, adam: Optional[AdamState] = None,
          history: Optional[List[LossBreakdown]] = None,
          on_round_end: Optional[RoundCallback] = None) -> TrainResult:
    """
    Train the model for cfg.total_epochs epochs

    Args:
        model: Initialized regressor (updated in place)
        dataset: Labeled samples
        K: Intrinsics used for input normalization
        cfg: Training configuration
        start_epoch: Number of epochs already done (resume)
        adam: Optimizer state to resume from
        history: Loss history of the epochs already done
        on_round_end: Called after every completed round with (round index, result so far)

    Returns:
        TrainResult with one mean LossBreakdown per epoch

    Raises:
        NumericFailureError: With the epoch and batch where NaN/Inf appeared
    """
    if not dataset:
        raise ShapeMismatchError("cannot train on an empty dataset")
    if not 0 <= start_epoch <= cfg.total_epochs:
        raise ConfigError(f"start epoch {start_epoch} outside [0, {cfg.total_epochs}]")

    prepared = _PreparedDataset(dataset, K)
    adam = adam or cfg.new_adam_state(model.store)
    result = TrainResult(model=model, history=list(history or []), adam=adam)
    store = model.store
    params = {name: store[name] for name in store.names()}
    grads = {name: store.grad(name) for name in store.names()}
    log = logger.bind(samples=len(dataset), batch_size=cfg.batch_size, seed=cfg.seed)
    log.info("training_started", start_epoch=start_epoch, epochs=cfg.total_epochs,
             parameters=store.num_parameters())

    for epoch in range(start_epoch, cfg.total_epochs):
        started = time.perf_counter()
        rng = np.random.default_rng([cfg.seed, epoch])
        batches = make_batches(dataset, cfg.batch_size, rng, shuffle=cfg.shuffle)
        sums = np.zeros(2)
        for b, indices in enumerate(batches):
            x, t_star, q_star = prepared.batch(indices)
            try:
                breakdown = backward_batch(model, x, t_star, q_star, cfg.alpha)
                if cfg.clip_norm is not None:
                    clip_gradients(grads, cfg.clip_norm)
                adam_step(params, grads, adam)
            except NumericFailureError as exc:
                log.error("training_numeric_failure", epoch=epoch, batch=b)
                raise NumericFailureError(exc.message, epoch=epoch, batch=b) from exc
            sums += len(indices) * np.array([breakdown.location_term, breakdown.orientation_term])

        location, orientation = sums / len(dataset)
        mean = LossBreakdown(total=location + cfg.alpha * orientation, location_term=location,
                             orientation_term=orientation, alpha=cfg.alpha)
        result.history.append(mean)
        log.info("epoch_finished", epoch=epoch, total=round(mean.total, 6),
                 location=round(location, 6), orientation=round(orientation, 6),
                 seconds=round(time.perf_counter() - started, 3))

        if (epoch + 1) % cfg.epochs_per_round == 0 and on_round_end is not None:
            on_round_end((epoch + 1) // cfg.epochs_per_round - 1, result)

    log.info("training_finished", epochs=len(result.history))
    return result
