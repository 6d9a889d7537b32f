"""
Neural network kernel - Dense layers, ReLU and LSTM with exact analytic gradients

Tensors are float64 numpy arrays. Layers keep their weights in a shared ParameterStore
(ordered name -> array, plus a parallel gradient map) and expose forward/backward pairs:
forward returns the output and whatever the backward pass needs; backward returns the
input gradient and accumulates parameter gradients into the store.

All layers accept a leading batch axis; the unbatched forms are the B = 1 special case.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Tuple

import numpy as np

from tools.core.errors import NumericFailureError, ShapeMismatchError

Tensor = np.ndarray


def check_finite(array: Tensor, where: str) -> Tensor:
    """Raise NumericFailureError if array holds NaN or Inf"""
    if not np.all(np.isfinite(array)):
        raise NumericFailureError(f"non-finite values in {where}")
    return array


def sigmoid(z: Tensor) -> Tensor:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass(frozen=True)
class Initializer:
    """How init_params fills one parameter tensor"""
    kind: str                 # "uniform", "zeros" or "lstm_bias"
    limit: float = 0.0
    hidden: int = 0


class ParameterStore:
    """
    Ordered name -> tensor map with a gradient map of identical shapes

    Holds the learnable parameters theta of the regressor.
    """

    def __init__(self):
        self._params: Dict[str, Tensor] = {}
        self._grads: Dict[str, Tensor] = {}
        self._inits: Dict[str, Initializer] = {}

    def add(self, name: str, shape: Tuple[int, ...], init: Initializer) -> Tensor:
        """Register a zero tensor under a unique name"""
        if name in self._params:
            raise ValueError(f"parameter already registered: {name}")
        self._params[name] = np.zeros(shape, dtype=np.float64)
        self._grads[name] = np.zeros(shape, dtype=np.float64)
        self._inits[name] = init
        return self._params[name]

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> List[str]:
        return list(self._params)

    def items(self) -> Iterator[Tuple[str, Tensor]]:
        return iter(self._params.items())

    def grad(self, name: str) -> Tensor:
        return self._grads[name]

    def initializer(self, name: str) -> Initializer:
        return self._inits[name]

    def accumulate(self, name: str, gradient: Tensor) -> None:
        self._grads[name] += gradient

    def zero_grad(self) -> None:
        for g in self._grads.values():
            g.fill(0.0)

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self._params.values()))

    def state_dict(self) -> Dict[str, Tensor]:
        """Copies of every parameter, in registration order"""
        return {name: p.copy() for name, p in self._params.items()}

    def load_state_dict(self, state: Dict[str, Tensor]) -> None:
        """Overwrite parameters in place; names and shapes must match exactly"""
        if set(state) != set(self._params):
            missing = sorted(set(self._params) - set(state))
            extra = sorted(set(state) - set(self._params))
            raise ShapeMismatchError(f"parameter names differ (missing {missing}, unexpected {extra})")
        for name, value in state.items():
            value = np.asarray(value, dtype=np.float64)
            if value.shape != self._params[name].shape:
                raise ShapeMismatchError(
                    f"{name}: expected shape {self._params[name].shape}, got {value.shape}"
                )
            self._params[name][...] = value


class LinearLayer:
    """Fully connected layer y = x W^T + b with W of shape (out, in)"""

    def __init__(self, store: ParameterStore, name: str, n_in: int, n_out: int):
        self.store = store
        self.name = name
        self.n_in = n_in
        self.n_out = n_out
        limit = math.sqrt(6.0 / (n_in + n_out))
        store.add(f"{name}.W", (n_out, n_in), Initializer("uniform", limit))
        store.add(f"{name}.b", (n_out,), Initializer("zeros"))

    @property
    def W(self) -> Tensor:
        return self.store[f"{self.name}.W"]

    @property
    def b(self) -> Tensor:
        return self.store[f"{self.name}.b"]

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.n_in:
            raise ShapeMismatchError(f"{self.name}: expected input size {self.n_in}, got {x.shape[-1]}")
        return x @ self.W.T + self.b

    def backward(self, x: Tensor, dy: Tensor) -> Tensor:
        """dW = dy^T x, db = sum(dy), dx = dy W"""
        x2 = x.reshape(-1, self.n_in)
        dy2 = dy.reshape(-1, self.n_out)
        self.store.accumulate(f"{self.name}.W", dy2.T @ x2)
        self.store.accumulate(f"{self.name}.b", dy2.sum(axis=0))
        return dy @ self.W

    def __repr__(self) -> str:
        return f"LinearLayer({self.name}: {self.n_in} -> {self.n_out})"


def linear(layer: LinearLayer, x: Tensor) -> Tensor:
    return check_finite(layer.forward(x), f"{layer.name} output")


def relu(x: Tensor) -> Tensor:
    """max(x, 0); NaN is rejected rather than passed through or clipped"""
    return np.maximum(check_finite(x, "relu input"), 0.0)


def relu_backward(x: Tensor, dy: Tensor) -> Tensor:
    """Gradient mask; the subgradient at 0 is 0"""
    return dy * (x > 0.0)


class LstmCell:
    """LSTM cell, gate order (input, forget, cell, output)"""

    def __init__(self, store: ParameterStore, name: str, n_in: int, hidden: int = 64):
        self.store = store
        self.name = name
        self.n_in = n_in
        self.hidden = hidden
        limit = 1.0 / math.sqrt(hidden)
        store.add(f"{name}.W_ih", (4 * hidden, n_in), Initializer("uniform", limit))
        store.add(f"{name}.W_hh", (4 * hidden, hidden), Initializer("uniform", limit))
        store.add(f"{name}.b", (4 * hidden,), Initializer("lstm_bias", hidden=hidden))

    @property
    def W_ih(self) -> Tensor:
        return self.store[f"{self.name}.W_ih"]

    @property
    def W_hh(self) -> Tensor:
        return self.store[f"{self.name}.W_hh"]

    @property
    def b(self) -> Tensor:
        return self.store[f"{self.name}.b"]

    def __repr__(self) -> str:
        return f"LstmCell({self.name}: {self.n_in} -> {self.hidden})"


@dataclass
class _LstmStep:
    x: Tensor
    h_prev: Tensor
    c_prev: Tensor
    i: Tensor
    f: Tensor
    g: Tensor
    o: Tensor
    tanh_c: Tensor


@dataclass
class LstmCache:
    """Activations of one unrolled sequence, enough for exact BPTT"""
    steps: List[_LstmStep]
    direction: str
    unbatched: bool


def lstm_sequence(cell: LstmCell, inputs: Tensor, direction: str = "forward") -> Tuple[Tensor, LstmCache]:
    """
    Run the cell over a sequence from zero initial state

    Args:
        cell: LSTM cell
        inputs: (N, in) or (B, N, in)
        direction: "forward", or "backward" to consume the reversed sequence

    Returns:
        (final hidden state (h,) or (B, h), cache)
    """
    if direction not in ("forward", "backward"):
        raise ValueError(f"unknown direction: {direction}")
    unbatched = inputs.ndim == 2
    x = inputs[None] if unbatched else inputs
    if x.ndim != 3 or x.shape[1] < 1 or x.shape[2] != cell.n_in:
        raise ShapeMismatchError(f"{cell.name}: expected (B, N>=1, {cell.n_in}) input, got {inputs.shape}")
    if direction == "backward":
        x = x[:, ::-1, :]

    H = cell.hidden
    W_ih, W_hh, b = cell.W_ih, cell.W_hh, cell.b
    h = np.zeros((x.shape[0], H))
    c = np.zeros((x.shape[0], H))
    steps = []
    for t in range(x.shape[1]):
        xt = x[:, t, :]
        z = xt @ W_ih.T + h @ W_hh.T + b
        i = sigmoid(z[:, :H])
        f = sigmoid(z[:, H:2 * H])
        g = np.tanh(z[:, 2 * H:3 * H])
        o = sigmoid(z[:, 3 * H:])
        c_next = f * c + i * g
        tanh_c = np.tanh(c_next)
        steps.append(_LstmStep(xt, h, c, i, f, g, o, tanh_c))
        h, c = o * tanh_c, c_next

    check_finite(h, f"{cell.name} hidden state")
    cache = LstmCache(steps=steps, direction=direction, unbatched=unbatched)
    return (h[0] if unbatched else h), cache


def lstm_sequence_backward(cell: LstmCell, dh_final: Tensor, cache: LstmCache) -> Tensor:
    """Backpropagate through time from the final hidden state; returns d inputs"""
    H = cell.hidden
    W_ih, W_hh = cell.W_ih, cell.W_hh
    dh = dh_final[None] if cache.unbatched else dh_final
    dc = np.zeros_like(dh)
    dW_ih = np.zeros_like(W_ih)
    dW_hh = np.zeros_like(W_hh)
    db = np.zeros(4 * H)
    dxs = []
    for step in reversed(cache.steps):
        do = dh * step.tanh_c
        dc = dc + dh * step.o * (1.0 - step.tanh_c ** 2)
        di = dc * step.g
        dg = dc * step.i
        df = dc * step.c_prev
        dz = np.concatenate([
            di * step.i * (1.0 - step.i),
            df * step.f * (1.0 - step.f),
            dg * (1.0 - step.g ** 2),
            do * step.o * (1.0 - step.o),
        ], axis=1)
        dW_ih += dz.T @ step.x
        dW_hh += dz.T @ step.h_prev
        db += dz.sum(axis=0)
        dxs.append(dz @ W_ih)
        dh = dz @ W_hh
        dc = dc * step.f

    cell.store.accumulate(f"{cell.name}.W_ih", dW_ih)
    cell.store.accumulate(f"{cell.name}.W_hh", dW_hh)
    cell.store.accumulate(f"{cell.name}.b", db)

    dx = np.stack(dxs[::-1], axis=1)
    if cache.direction == "backward":
        dx = dx[:, ::-1, :]
    return dx[0] if cache.unbatched else dx


@dataclass
class BiLstmCache:
    forward: LstmCache
    backward: Optional[LstmCache] = None
    hidden: int = 0


def bilstm_encode(fwd_cell: LstmCell, bwd_cell: Optional[LstmCell],
                  inputs: Tensor) -> Tuple[Tensor, BiLstmCache]:
    """
    Encode a sequence as [h_fwd(N); h_bwd(N)]

    With bwd_cell None only the forward direction runs (unidirectional ablation).
    """
    h_fwd, cache_fwd = lstm_sequence(fwd_cell, inputs, "forward")
    if bwd_cell is None:
        return h_fwd, BiLstmCache(forward=cache_fwd, hidden=fwd_cell.hidden)
    h_bwd, cache_bwd = lstm_sequence(bwd_cell, inputs, "backward")
    u = np.concatenate([h_fwd, h_bwd], axis=-1)
    return u, BiLstmCache(forward=cache_fwd, backward=cache_bwd, hidden=fwd_cell.hidden)


def bilstm_backward(fwd_cell: LstmCell, bwd_cell: Optional[LstmCell], du: Tensor,
                    cache: BiLstmCache) -> Tensor:
    H = cache.hidden
    dx = lstm_sequence_backward(fwd_cell, du[..., :H], cache.forward)
    if bwd_cell is not None:
        dx = dx + lstm_sequence_backward(bwd_cell, du[..., H:], cache.backward)
    return dx


def init_params(store: ParameterStore, rng: np.random.Generator) -> ParameterStore:
    """
    Fill every parameter according to its initializer, in registration order

    Linear weights: uniform(+-sqrt(6 / (in + out))), zero bias.
    LSTM weights: uniform(+-1 / sqrt(h)); LSTM bias zero except the forget gate at 1.0.
    """
    for name, param in store.items():
        init = store.initializer(name)
        if init.kind == "uniform":
            param[...] = rng.uniform(-init.limit, init.limit, size=param.shape)
        elif init.kind == "zeros":
            param.fill(0.0)
        elif init.kind == "lstm_bias":
            param.fill(0.0)
            param[init.hidden:2 * init.hidden] = 1.0
        else:
            raise ValueError(f"unknown initializer for {name}: {init.kind}")
    store.zero_grad()
    return store


def numerical_gradient(store: ParameterStore, loss_fn: Callable[[], float], eps: float = 1e-5,
                       names: Optional[List[str]] = None) -> Dict[str, Tensor]:
    """
    Central finite-difference gradient of loss_fn with respect to store parameters

    loss_fn is called with the store perturbed in place, one entry at a time.
    """
    grads = {}
    for name in names or store.names():
        param = store[name]
        grad = np.zeros_like(param)
        flat = param.reshape(-1)
        flat_grad = grad.reshape(-1)
        for k in range(flat.size):
            original = flat[k]
            flat[k] = original + eps
            f_plus = loss_fn()
            flat[k] = original - eps
            f_minus = loss_fn()
            flat[k] = original
            flat_grad[k] = (f_plus - f_minus) / (2.0 * eps)
        grads[name] = grad
    return grads


def relative_error(analytic: Tensor, numeric: Tensor) -> float:
    """||a - n|| / max(||a|| + ||n||, 1e-12)"""
    diff = float(np.linalg.norm(analytic - numeric))
    scale = float(np.linalg.norm(analytic) + np.linalg.norm(numeric))
    return diff / max(scale, 1e-12)
