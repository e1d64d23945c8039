"""Desk-scale MLP: synthetic data, deterministic training, 8-bit quantization.

The model is a plain dense/ReLU stack trained with momentum SGD on
separable Gaussian class clusters.  Everything is seeded and single
threaded so repeated runs produce bit-identical parameters, which the
fault-injection experiments rely on.  Weights are held as float32 (the
storable representation); arithmetic runs in float64.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .prng import make_rng

DEFAULT_SEED = 1234
DEFAULT_FEATURES = 16
DEFAULT_CLASSES = 4
DEFAULT_SAMPLES = 4000
DEFAULT_HIDDEN = (32, 32)
DEFAULT_EPOCHS = 30
DEFAULT_LR = 0.05

QMAX = 255
SCALE_FLOOR = 1e-8


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss leaves the finite range."""


@dataclass(frozen=True)
class SyntheticDataset:
    """Balanced Gaussian class clusters with a fixed train/test split."""

    inputs: np.ndarray  # float64 (n, features)
    labels: np.ndarray  # int64 (n,)
    seed: int
    n_train: int

    def __post_init__(self):
        self.inputs.setflags(write=False)
        self.labels.setflags(write=False)

    @property
    def train_inputs(self) -> np.ndarray:
        return self.inputs[: self.n_train]

    @property
    def train_labels(self) -> np.ndarray:
        return self.labels[: self.n_train]

    @property
    def test_inputs(self) -> np.ndarray:
        return self.inputs[self.n_train:]

    @property
    def test_labels(self) -> np.ndarray:
        return self.labels[self.n_train:]


@dataclass(frozen=True)
class MlpModel:
    """Dense layers with ReLU between them and none after the last.

    Finiteness is not enforced here: blocks read back from faulty memory
    may decode to NaN/Inf weights and still need to run inference.
    """

    weights: tuple[np.ndarray, ...]  # float32, (fan_in, fan_out) each
    biases: tuple[np.ndarray, ...]   # float32, (fan_out,) each

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("weights and biases must pair up, one per layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.ndim != 1 or w.shape[1] != b.shape[0]:
                raise ValueError(f"layer {i} shape mismatch: {w.shape} vs {b.shape}")
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ValueError(f"layer {i} input dim does not chain")
            w.setflags(write=False)
            b.setflags(write=False)

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    @property
    def n_weights(self) -> int:
        return sum(w.size for w in self.weights)


@dataclass(frozen=True)
class QuantizedLayer:
    codes: np.ndarray  # uint8, (fan_in, fan_out)
    scale: float
    zero_point: int
    biases: np.ndarray  # float32, untouched by quantization

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if not 0 <= self.zero_point <= QMAX:
            raise ValueError("zero_point must be in [0, 255]")
        self.codes.setflags(write=False)
        self.biases.setflags(write=False)


@dataclass(frozen=True)
class QuantizedModel:
    layers: tuple[QuantizedLayer, ...]

    @property
    def n_weights(self) -> int:
        return sum(l.codes.size for l in self.layers)


@dataclass(frozen=True)
class TrainResult:
    model: MlpModel
    epoch_losses: tuple[float, ...]


def make_dataset(seed: int = DEFAULT_SEED, n_classes: int = DEFAULT_CLASSES,
                 n_features: int = DEFAULT_FEATURES, n_samples: int = DEFAULT_SAMPLES,
                 train_fraction: float = 0.75) -> SyntheticDataset:
    """Gaussian clusters, one per class, means drawn once from the seed."""
    if n_classes < 2:
        raise ValueError("need at least two classes")
    if n_features < 1 or n_samples < n_classes:
        raise ValueError("degenerate dataset size")
    if n_samples % n_classes:
        raise ValueError("n_samples must split evenly across classes")
    rng = make_rng(seed)
    per_class = n_samples // n_classes
    means = rng.normal(0.0, 1.5, size=(n_classes, n_features))
    inputs = np.concatenate(
        [means[c] + rng.normal(0.0, 1.0, size=(per_class, n_features)) for c in range(n_classes)]
    )
    labels = np.repeat(np.arange(n_classes, dtype=np.int64), per_class)
    order = rng.permutation(n_samples)
    n_train = int(round(train_fraction * n_samples))
    if not 0 < n_train < n_samples:
        raise ValueError("train fraction leaves an empty split")
    return SyntheticDataset(inputs[order], labels[order], int(seed), n_train)


def _init_params(dims: Sequence[int], rng: np.random.Generator):
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def _forward_acts(weights, biases, x):
    """Activations per layer; ReLU between layers, raw logits at the end."""
    acts = [x]
    for i, (w, b) in enumerate(zip(weights, biases)):
        z = acts[-1] @ w + b
        acts.append(z if i == len(weights) - 1 else np.maximum(z, 0.0))
    return acts


def _softmax_loss_grad(logits, labels):
    shifted = logits - logits.max(axis=1, keepdims=True)
    expz = np.exp(shifted)
    probs = expz / expz.sum(axis=1, keepdims=True)
    n = logits.shape[0]
    loss = -np.log(probs[np.arange(n), labels] + 1e-300).mean()
    grad = probs
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


def gradients(weights, biases, x, labels):
    """Cross-entropy loss and analytic gradients for one batch (float64)."""
    acts = _forward_acts(weights, biases, x)
    loss, delta = _softmax_loss_grad(acts[-1], labels)
    grads_w = [None] * len(weights)
    grads_b = [None] * len(weights)
    for i in reversed(range(len(weights))):
        grads_w[i] = acts[i].T @ delta
        grads_b[i] = delta.sum(axis=0)
        if i:
            delta = (delta @ weights[i].T) * (acts[i] > 0)
    return loss, grads_w, grads_b


def batch_loss(weights, biases, x, labels) -> float:
    logits = _forward_acts(weights, biases, x)[-1]
    return _softmax_loss_grad(logits, labels)[0]


def train(dataset: SyntheticDataset, hidden_dims: Sequence[int] = DEFAULT_HIDDEN,
          epochs: int = DEFAULT_EPOCHS, lr: float = DEFAULT_LR, seed: int = DEFAULT_SEED,
          momentum: float = 0.9, batch_size: int = 64) -> TrainResult:
    """Momentum SGD on the train split; bit-deterministic for fixed inputs."""
    if epochs < 0 or lr < 0 or batch_size < 1:
        raise ValueError("invalid training hyperparameters")
    dims = [dataset.inputs.shape[1], *hidden_dims, int(dataset.labels.max()) + 1]
    if any(d < 1 for d in dims):
        raise ValueError("invalid layer dimensions")
    rng = make_rng(seed)
    weights, biases = _init_params(dims, rng)
    vel_w = [np.zeros_like(w) for w in weights]
    vel_b = [np.zeros_like(b) for b in biases]
    x, y = dataset.train_inputs, dataset.train_labels
    losses = []
    for _ in range(epochs):
        order = rng.permutation(x.shape[0])
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, x.shape[0], batch_size):
            batch = order[start:start + batch_size]
            # divergence surfaces through the finite-loss check, not FP traps
            with np.errstate(over="ignore", invalid="ignore"):
                loss, gw, gb = gradients(weights, biases, x[batch], y[batch])
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss {loss} at epoch {len(losses)}")
            for i in range(len(weights)):
                vel_w[i] = momentum * vel_w[i] + gw[i]
                vel_b[i] = momentum * vel_b[i] + gb[i]
                weights[i] = weights[i] - lr * vel_w[i]
                biases[i] = biases[i] - lr * vel_b[i]
            epoch_loss += loss
            n_batches += 1
        losses.append(float(epoch_loss / n_batches))
    model = MlpModel(
        weights=tuple(w.astype(np.float32) for w in weights),
        biases=tuple(b.astype(np.float32) for b in biases),
    )
    return TrainResult(model=model, epoch_losses=tuple(losses))


def quantize(model: MlpModel) -> QuantizedModel:
    """Asymmetric per-layer 8-bit post-training quantization of the weights.

    scale = (max - min) / 255 (floored at 1e-8 for constant layers),
    zero_point = round(-min/scale) clamped to [0, 255]; biases stay float32.
    """
    layers = []
    for w, b in zip(model.weights, model.biases):
        if not np.isfinite(w).all():
            raise ValueError("cannot quantize non-finite weights")
        lo, hi = float(w.min()), float(w.max())
        scale = max((hi - lo) / QMAX, SCALE_FLOOR)
        zero_point = int(np.clip(np.rint(-lo / scale), 0, QMAX))
        codes = np.clip(np.rint(w.astype(np.float64) / scale) + zero_point, 0, QMAX).astype(np.uint8)
        layers.append(QuantizedLayer(codes=codes, scale=scale, zero_point=zero_point, biases=b))
    return QuantizedModel(layers=tuple(layers))


def dequantize(qmodel: QuantizedModel) -> MlpModel:
    weights = tuple(
        (l.scale * (l.codes.astype(np.float64) - l.zero_point)).astype(np.float32)
        for l in qmodel.layers
    )
    return MlpModel(weights=weights, biases=tuple(l.biases for l in qmodel.layers))


def _as_mlp(model: MlpModel | QuantizedModel) -> MlpModel:
    return dequantize(model) if isinstance(model, QuantizedModel) else model


def infer(model: MlpModel | QuantizedModel, inputs: np.ndarray) -> np.ndarray:
    """Predicted class ids; argmax ties resolve to the lowest id."""
    m = _as_mlp(model)
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != m.weights[0].shape[0]:
        raise ValueError(f"inputs of shape {inputs.shape} do not match model input dim")
    # Models rebuilt from faulty storage may hold NaN/Inf weights; inference
    # must still run (argmax picks the first maximal element either way).
    with np.errstate(invalid="ignore", over="ignore"):
        weights = [w.astype(np.float64) for w in m.weights]
        biases = [b.astype(np.float64) for b in m.biases]
        logits = _forward_acts(weights, biases, inputs)[-1]
    return np.argmax(logits, axis=1)


def accuracy(model: MlpModel | QuantizedModel, inputs: np.ndarray, labels: np.ndarray) -> float:
    labels = np.asarray(labels)
    if labels.shape[0] != np.asarray(inputs).shape[0]:
        raise ValueError("inputs and labels disagree on sample count")
    return float((infer(model, inputs) == labels).mean())
