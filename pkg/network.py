"""
Dense feed-forward network engine.

Layers are (weights, biases, activation) triples; an Mlp is an ordered
list of them. Training is plain reverse-mode backpropagation of the mean
squared error with Adam updates, mini-batched and fully deterministic
given TrainConfig.seed. A FreezeMask pins whole layers: their parameters
and their Adam moments are never touched.
"""

import math
import logging
from dataclasses import dataclass, field, asdict
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from numcore import (
    Matrix, Vector, SeededRng, ShapeError, NonFiniteError,
    as_matrix, as_vector, matvec, transpose_matvec, outer,
)

logger = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss becomes NaN or infinite."""


class Activation(str, Enum):
    RELU = "relu"
    LINEAR = "linear"


# =============================================================================
# Data Classes
# =============================================================================

@dataclass
class Layer:
    """Dense layer: out = act(W @ x + b), W has shape (out, in)."""
    weights: Matrix
    biases: Vector
    activation: Activation = Activation.RELU

    def __post_init__(self):
        self.weights = as_matrix(self.weights, "weights")
        self.biases = as_vector(self.biases, "biases")
        self.activation = Activation(self.activation)
        if self.weights.shape[0] != self.biases.shape[0]:
            raise ShapeError(f"Layer weights {self.weights.shape} do not match biases {self.biases.shape}")

    @property
    def fan_in(self) -> int:
        return self.weights.shape[1]

    @property
    def fan_out(self) -> int:
        return self.weights.shape[0]

    def copy(self) -> "Layer":
        return Layer(self.weights.copy(), self.biases.copy(), self.activation)


@dataclass
class Mlp:
    layers: List[Layer]
    input_dim: int

    def __post_init__(self):
        if not self.layers:
            raise ShapeError("An Mlp needs at least one layer")
        width = self.input_dim
        for i, layer in enumerate(self.layers):
            if layer.fan_in != width:
                raise ShapeError(f"Layer {i} expects input width {layer.fan_in}, previous width is {width}")
            width = layer.fan_out

    @property
    def widths(self) -> List[int]:
        return [self.input_dim] + [layer.fan_out for layer in self.layers]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].fan_out

    def parameter_count(self) -> int:
        return sum(layer.weights.size + layer.biases.size for layer in self.layers)

    def copy(self) -> "Mlp":
        return Mlp([layer.copy() for layer in self.layers], self.input_dim)

    def __len__(self):
        return len(self.layers)


@dataclass(frozen=True)
class FreezeMask:
    """trainable[i] is False when layer i must not change."""
    trainable: Tuple[bool, ...]

    @classmethod
    def all_trainable(cls, n_layers: int) -> "FreezeMask":
        return cls(tuple([True] * n_layers))

    @classmethod
    def train_last(cls, n_layers: int, n_trainable: int) -> "FreezeMask":
        if not 0 <= n_trainable <= n_layers:
            raise ValueError(f"Cannot retrain {n_trainable} of {n_layers} layers")
        return cls(tuple([False] * (n_layers - n_trainable) + [True] * n_trainable))

    def check(self, net: Mlp):
        if len(self.trainable) != len(net.layers):
            raise ShapeError(f"Freeze mask has {len(self.trainable)} entries, network has {len(net.layers)} layers")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    epochs: int
    batch_size: int
    seed: int
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    log_every: int = 100

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError(f"Adam betas must lie in [0, 1), got {self.beta1}, {self.beta2}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")

    def to_dict(self) -> Dict:
        return asdict(self)


def base_train_config(seed: int, **overrides) -> TrainConfig:
    """Autoencoder pre-training defaults: lr 0.01, 800 epochs, batches of 300."""
    params = dict(learning_rate=0.01, epochs=800, batch_size=300, seed=seed)
    params.update(overrides)
    return TrainConfig(**params)


def transfer_train_config(seed: int, **overrides) -> TrainConfig:
    """Decoder retraining defaults: lr 0.001, 300 epochs, one shot per batch."""
    params = dict(learning_rate=0.001, epochs=300, batch_size=1, seed=seed)
    params.update(overrides)
    return TrainConfig(**params)


@dataclass
class Gradients:
    """Parameter gradients, one (dW, db) pair per layer."""
    weights: List[Matrix]
    biases: List[Vector]

    @classmethod
    def zeros_like(cls, net: Mlp) -> "Gradients":
        return cls([np.zeros_like(l.weights) for l in net.layers],
                   [np.zeros_like(l.biases) for l in net.layers])

    def check(self, net: Mlp):
        if len(self.weights) != len(net.layers) or len(self.biases) != len(net.layers):
            raise ShapeError(f"Gradients cover {len(self.weights)} layers, network has {len(net.layers)}")
        for i, layer in enumerate(net.layers):
            if self.weights[i].shape != layer.weights.shape or self.biases[i].shape != layer.biases.shape:
                raise ShapeError(
                    f"Gradient shapes {self.weights[i].shape}/{self.biases[i].shape} for layer {i} "
                    f"do not match parameters {layer.weights.shape}/{layer.biases.shape}")


@dataclass
class AdamState:
    m_weights: List[Matrix]
    v_weights: List[Matrix]
    m_biases: List[Vector]
    v_biases: List[Vector]
    step_count: int = 0

    @classmethod
    def fresh(cls, net: Mlp) -> "AdamState":
        return cls([np.zeros_like(l.weights) for l in net.layers],
                   [np.zeros_like(l.weights) for l in net.layers],
                   [np.zeros_like(l.biases) for l in net.layers],
                   [np.zeros_like(l.biases) for l in net.layers],
                   0)

    def copy(self) -> "AdamState":
        return AdamState([a.copy() for a in self.m_weights], [a.copy() for a in self.v_weights],
                         [a.copy() for a in self.m_biases], [a.copy() for a in self.v_biases],
                         self.step_count)

    def check(self, net: Mlp):
        if self.step_count < 0:
            raise ValueError(f"Adam step count must be >= 0, got {self.step_count}")
        if len(self.m_weights) != len(net.layers):
            raise ShapeError(f"Adam state covers {len(self.m_weights)} layers, network has {len(net.layers)}")
        for i, layer in enumerate(net.layers):
            if self.m_weights[i].shape != layer.weights.shape or self.m_biases[i].shape != layer.biases.shape:
                raise ShapeError(f"Adam state shapes for layer {i} do not match the network")


@dataclass
class LossHistory:
    epoch_losses: List[float] = field(default_factory=list)

    @property
    def final(self) -> Optional[float]:
        return self.epoch_losses[-1] if self.epoch_losses else None

    def __len__(self):
        return len(self.epoch_losses)


# =============================================================================
# Construction and inference
# =============================================================================

def init_network(widths: Sequence[int], activations: Sequence[Activation], rng: SeededRng) -> Mlp:
    """
    Glorot-uniform weights, zero biases.

    Layer i maps widths[i] -> widths[i+1] with activations[i].
    """
    if len(widths) < 2:
        raise ShapeError(f"Need at least two widths, got {list(widths)}")
    if len(activations) != len(widths) - 1:
        raise ShapeError(f"Need {len(widths) - 1} activations, got {len(activations)}")
    if any(w < 1 for w in widths):
        raise ShapeError(f"All widths must be >= 1, got {list(widths)}")

    layers = []
    for fan_in, fan_out, act in zip(widths[:-1], widths[1:], activations):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights = rng.uniform(-bound, bound, fan_out * fan_in).reshape(fan_out, fan_in)
        layers.append(Layer(weights, np.zeros(fan_out), Activation(act)))
    return Mlp(layers, int(widths[0]))


def _activate(z: np.ndarray, activation: Activation) -> np.ndarray:
    if activation is Activation.RELU:
        return np.maximum(z, 0.0)
    return z


def _check_input(net: Mlp, x: Vector) -> Vector:
    x = as_vector(x, "input")
    if x.shape[0] != net.input_dim:
        raise ShapeError(f"Input has length {x.shape[0]}, network expects {net.input_dim}")
    return x


def forward_trace(net: Mlp, x: Vector) -> List[Tuple[Vector, Vector]]:
    """(pre-activation, post-activation) for every layer, in order."""
    a = _check_input(net, x)
    trace = []
    for layer in net.layers:
        z = matvec(layer.weights, a) + layer.biases
        a = _activate(z, layer.activation)
        trace.append((z, a))
    return trace


def forward(net: Mlp, x: Vector) -> Vector:
    return forward_trace(net, x)[-1][1]


def forward_batch(net: Mlp, X: np.ndarray) -> np.ndarray:
    """Row-wise forward pass over an (n, input_dim) array."""
    A = np.asarray(X, dtype=np.float64)
    if A.ndim != 2 or A.shape[1] != net.input_dim:
        raise ShapeError(f"Batch has shape {A.shape}, network expects (n, {net.input_dim})")
    for layer in net.layers:
        A = _activate(A @ layer.weights.T + layer.biases, layer.activation)
    return A


def mse_loss(pred: Vector, target: Vector) -> float:
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss shape mismatch: pred {pred.shape} vs target {target.shape}")
    diff = pred - target
    return float(np.mean(diff * diff))


# =============================================================================
# Backpropagation
# =============================================================================

def backward(net: Mlp, x: Vector, target: Vector) -> Gradients:
    """Gradient of mse_loss(forward(net, x), target) w.r.t. every weight and bias."""
    target = as_vector(target, "target")
    if target.shape[0] != net.output_dim:
        raise ShapeError(f"Target has length {target.shape[0]}, network outputs {net.output_dim}")
    trace = forward_trace(net, x)
    inputs = [np.asarray(x, dtype=np.float64)] + [a for _, a in trace[:-1]]

    grads = Gradients.zeros_like(net)
    delta = 2.0 * (trace[-1][1] - target) / target.shape[0]   # dL/da of the output layer
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        z = trace[i][0]
        if layer.activation is Activation.RELU:
            delta = delta * (z > 0.0)
        grads.weights[i] = outer(delta, inputs[i])
        grads.biases[i] = delta.copy()
        if i > 0:
            delta = transpose_matvec(layer.weights, delta)
    return grads


def batch_backward(net: Mlp, X: np.ndarray, Y: np.ndarray,
                   mask: Optional[FreezeMask] = None) -> Tuple[Gradients, np.ndarray]:
    """
    Mean over rows of backward(net, X[k], Y[k]), vectorized.

    Returns (gradients, per-sample losses). Backpropagation stops below the
    lowest trainable layer; gradients of layers it never reaches stay zero.
    """
    n, out_dim = Y.shape
    activations = [X]
    pre = []
    A = X
    for layer in net.layers:
        Z = A @ layer.weights.T + layer.biases
        A = _activate(Z, layer.activation)
        pre.append(Z)
        activations.append(A)

    diff = activations[-1] - Y
    losses = np.mean(diff * diff, axis=1)

    lowest = 0
    if mask is not None:
        trainable = [i for i, t in enumerate(mask.trainable) if t]
        lowest = trainable[0] if trainable else len(net.layers)

    grads = Gradients.zeros_like(net)
    delta = 2.0 * diff / out_dim
    for i in range(len(net.layers) - 1, lowest - 1, -1):
        layer = net.layers[i]
        if layer.activation is Activation.RELU:
            delta = delta * (pre[i] > 0.0)
        grads.weights[i] = delta.T @ activations[i] / n
        grads.biases[i] = delta.sum(axis=0) / n
        if i > lowest:
            delta = delta @ layer.weights
    return grads, losses


# =============================================================================
# Adam
# =============================================================================

def _adam_update(net: Mlp, grads: Gradients, state: AdamState, mask: FreezeMask, cfg: TrainConfig):
    """In-place Adam step on net and state."""
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - cfg.beta1 ** t
    bc2 = 1.0 - cfg.beta2 ** t
    for i, layer in enumerate(net.layers):
        if not mask.trainable[i]:
            continue
        for param, g, m, v in ((layer.weights, grads.weights[i], state.m_weights[i], state.v_weights[i]),
                               (layer.biases, grads.biases[i], state.m_biases[i], state.v_biases[i])):
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * (g * g)
            m_hat = m / bc1
            v_hat = v / bc2
            param -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)


def adam_step(net: Mlp, grads: Gradients, state: AdamState, mask: FreezeMask,
              cfg: TrainConfig) -> Tuple[Mlp, AdamState]:
    """One Adam update; returns new (net, state) and leaves the inputs untouched."""
    mask.check(net)
    grads.check(net)
    state.check(net)
    new_net, new_state = net.copy(), state.copy()
    _adam_update(new_net, grads, new_state, mask, cfg)
    return new_net, new_state


# =============================================================================
# Training loop
# =============================================================================

def train(net: Mlp, inputs, targets, mask: FreezeMask, cfg: TrainConfig) -> Tuple[Mlp, LossHistory]:
    """
    Mini-batch Adam on the mean squared error.

    Each epoch draws a fresh permutation from the seeded stream, walks it in
    batches of cfg.batch_size (the last batch may be short) and takes one
    Adam step per batch on the batch-mean gradient. Adam restarts from a
    zero state. The input network is not modified.
    """
    X = np.asarray(inputs, dtype=np.float64)
    Y = np.asarray(targets, dtype=np.float64)
    if X.ndim != 2 or Y.ndim != 2 or X.shape[0] == 0:
        raise ValueError(f"train needs a non-empty dataset, got inputs {X.shape} and targets {Y.shape}")
    if X.shape[0] != Y.shape[0]:
        raise ShapeError(f"{X.shape[0]} inputs but {Y.shape[0]} targets")
    if X.shape[1] != net.input_dim or Y.shape[1] != net.output_dim:
        raise ShapeError(f"Data shapes {X.shape}/{Y.shape} do not fit network widths {net.widths}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise NonFiniteError("Training data contains non-finite values")
    mask.check(net)

    trained = net.copy()
    history = LossHistory()
    if cfg.epochs == 0:
        return trained, history

    state = AdamState.fresh(trained)
    rng = SeededRng(cfg.seed)
    n = X.shape[0]
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            grads, losses = batch_backward(trained, X[idx], Y[idx], mask)
            total += float(losses.sum())
            _adam_update(trained, grads, state, mask, cfg)
        epoch_loss = total / n
        if not math.isfinite(epoch_loss):
            raise TrainingDivergedError(f"Training loss became non-finite at epoch {epoch}")
        history.epoch_losses.append(epoch_loss)
        if epoch == 1 or epoch == cfg.epochs or (cfg.log_every and epoch % cfg.log_every == 0):
            logger.debug(f"Epoch {epoch}/{cfg.epochs}: loss {epoch_loss:.6e}")

    logger.info(f"Trained {cfg.epochs} epochs on {n} samples, final loss {history.final:.6e}")
    return trained, history
