"""From-scratch dense networks with manual backprop, SGD/Adam, and plateau scheduling.

Everything runs in float64: the gradient-check tolerances in the test
suite are unreliable at single precision.  Training is deterministic
given the (init, shuffle) seeds; dataset order and validation splits are
seeded upstream in the data module.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import losses
from .data import Dataset, Rng, derive_seed, minibatches, split
from .errors import ConfigError, TrainingDivergedError

ELU = "elu"
IDENTITY = "identity"

BOLT = "bolt"
CE = "ce"

MODEL_FORMAT_VERSION = 1


def _elu(z: np.ndarray) -> np.ndarray:
    return np.where(z >= 0, z, np.expm1(np.minimum(z, 0.0)))


def _elu_grad(z: np.ndarray, activated: np.ndarray) -> np.ndarray:
    # d/dz elu = 1 for z >= 0, exp(z) = elu + 1 otherwise; continuous at 0.
    return np.where(z >= 0, 1.0, activated + 1.0)


@dataclass
class DenseNet:
    """Fully-connected network: per-layer weights (in, out), biases (out,)."""

    layer_dims: tuple[int, ...]
    activations: tuple[str, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    head_mapping: str

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    @property
    def output_width(self) -> int:
        return self.layer_dims[-1]

    def parameter_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def num_classes(self) -> int:
        k = self.output_width
        return k + 1 if self.head_mapping == losses.SHIFTED_SIGMOID else k


def init_network(
    layer_dims,
    activations=None,
    head_mapping: str = losses.SHIFTED_SIGMOID,
    seed: int = 0,
) -> DenseNet:
    """He-initialized network (std sqrt(2 / fan_in)), zero biases, seeded.

    Default activations: ELU on hidden layers, identity on the head.
    """
    dims = tuple(int(d) for d in layer_dims)
    if len(dims) < 2 or any(d <= 0 for d in dims):
        raise ConfigError(f"layer_dims must be >= 2 positive integers, got {dims}")
    if activations is None:
        activations = (ELU,) * (len(dims) - 2) + (IDENTITY,)
    activations = tuple(activations)
    if len(activations) != len(dims) - 1:
        raise ConfigError(f"need {len(dims) - 1} activation tags, got {len(activations)}")
    if any(a not in (ELU, IDENTITY) for a in activations):
        raise ConfigError(f"unknown activation in {activations}")
    if head_mapping not in losses.MAPPINGS:
        raise ConfigError(f"unknown head mapping {head_mapping!r}")

    rng = Rng(seed, stream=0)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        w = rng.normal(fan_in * fan_out).reshape(fan_in, fan_out) * math.sqrt(2.0 / fan_in)
        weights.append(w)
        biases.append(np.zeros(fan_out))
    return DenseNet(dims, activations, weights, biases, head_mapping)


@dataclass
class ForwardCache:
    inputs: np.ndarray
    pre_activations: list[np.ndarray]
    post_activations: list[np.ndarray]

    @property
    def raw_outputs(self) -> np.ndarray:
        return self.post_activations[-1]


def forward(net: DenseNet, batch: np.ndarray) -> ForwardCache:
    """Run the batch through all layers, caching per-layer values for backward."""
    x = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if x.shape[1] != net.layer_dims[0]:
        raise ValueError(f"batch width {x.shape[1]} != input dim {net.layer_dims[0]}")
    pre, post = [], []
    a = x
    for idx, (w, b, act) in enumerate(zip(net.weights, net.biases, net.activations)):
        z = a @ w + b
        if not np.all(np.isfinite(z)):
            raise FloatingPointError(f"non-finite values at layer {idx}")
        a = _elu(z) if act == ELU else z
        pre.append(z)
        post.append(a)
    return ForwardCache(x, pre, post)


def backward(net: DenseNet, cache: ForwardCache, d_raw: np.ndarray) -> tuple[list, list]:
    """Mean-over-batch parameter gradients from per-sample d(loss)/d(raw output).

    d_raw holds one row per sample; the returned gradients are those of the
    batch-mean loss.
    """
    g = np.asarray(d_raw, dtype=np.float64)
    if g.shape != cache.raw_outputs.shape:
        raise ValueError(f"upstream gradient shape {g.shape} != outputs {cache.raw_outputs.shape}")
    n = g.shape[0]
    d_weights = [None] * net.num_layers
    d_biases = [None] * net.num_layers
    for idx in range(net.num_layers - 1, -1, -1):
        if net.activations[idx] == ELU:
            g = g * _elu_grad(cache.pre_activations[idx], cache.post_activations[idx])
        below = cache.post_activations[idx - 1] if idx > 0 else cache.inputs
        d_weights[idx] = below.T @ g / n
        d_biases[idx] = g.mean(axis=0)
        if idx > 0:
            g = g @ net.weights[idx].T
    return d_weights, d_biases


@dataclass
class OptimizerState:
    """SGD or Adam state; Adam keeps bias-corrected first/second moments."""

    kind: str  # "sgd" | "adam"
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m_weights: list = field(default_factory=list)
    m_biases: list = field(default_factory=list)
    v_weights: list = field(default_factory=list)
    v_biases: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.kind!r}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning rate must be > 0, got {self.learning_rate}")

    def _ensure_buffers(self, net: DenseNet) -> None:
        if not self.m_weights:
            self.m_weights = [np.zeros_like(w) for w in net.weights]
            self.m_biases = [np.zeros_like(b) for b in net.biases]
            self.v_weights = [np.zeros_like(w) for w in net.weights]
            self.v_biases = [np.zeros_like(b) for b in net.biases]


def sgd_step(net: DenseNet, grads: tuple[list, list], state: OptimizerState) -> None:
    d_w, d_b = grads
    state.step_count += 1
    for w, b, gw, gb in zip(net.weights, net.biases, d_w, d_b):
        w -= state.learning_rate * gw
        b -= state.learning_rate * gb


def adam_step(net: DenseNet, grads: tuple[list, list], state: OptimizerState) -> None:
    d_w, d_b = grads
    state._ensure_buffers(net)
    state.step_count += 1
    t = state.step_count
    b1, b2, eps, lr = state.beta1, state.beta2, state.eps, state.learning_rate
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t
    params = zip(net.weights + net.biases, d_w + d_b,
                 state.m_weights + state.m_biases, state.v_weights + state.v_biases)
    for p, g, m, v in params:
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / corr1) / (np.sqrt(v / corr2) + eps)


def optimizer_step(net: DenseNet, grads, state: OptimizerState) -> None:
    if state.kind == "adam":
        adam_step(net, grads, state)
    else:
        sgd_step(net, grads, state)


@dataclass
class PlateauSchedule:
    """Multiply lr by `factor` after `patience` epochs without improvement."""

    factor: float
    patience: int
    min_lr: float
    best: float = math.inf
    stale_epochs: int = 0

    def __post_init__(self):
        if not 0 < self.factor < 1:
            raise ConfigError(f"plateau factor must be in (0, 1), got {self.factor}")
        if self.patience < 1:
            raise ConfigError(f"plateau patience must be >= 1, got {self.patience}")

    def update(self, state: OptimizerState, validation_loss: float) -> float:
        """Call once per epoch; returns the (possibly reduced) learning rate."""
        if validation_loss < self.best:
            self.best = validation_loss
            self.stale_epochs = 0
        else:
            self.stale_epochs += 1
            if self.stale_epochs >= self.patience:
                state.learning_rate = max(state.learning_rate * self.factor, self.min_lr)
                self.stale_epochs = 0
        return state.learning_rate


def plateau_update(sched: PlateauSchedule, state: OptimizerState, validation_loss: float) -> float:
    return sched.update(state, validation_loss)


def _batch_loss_and_grad(
    net: DenseNet, cache: ForwardCache, labels: np.ndarray, loss_kind: str
) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample losses and d(loss_i)/d(raw_i) for the configured head."""
    raw = cache.raw_outputs
    m = net.num_classes()
    if loss_kind == BOLT:
        h, probs = losses.map_outputs_batch(raw, net.head_mapping, m)
        loss = losses.bolt_loss_batch(h, labels)
        dh = losses.bolt_grad_h_batch(h, labels)
        if net.head_mapping == losses.SHIFTED_SIGMOID:
            sig = h + 1.0  # clamped sigma; gradient uses sigma(1 - sigma)
            d_raw = dh * sig * (1.0 - sig)
        else:
            dp = np.concatenate([dh, np.zeros((len(labels), 1))], axis=1)
            inner = (dp * probs).sum(axis=1, keepdims=True)
            d_raw = probs * (dp - inner)  # softmax Jacobian applied to dp
        return loss, d_raw
    if loss_kind == CE:
        p = losses.class_probabilities(raw, net.head_mapping, m)
        loss = losses.cross_entropy_batch(p, labels)
        if net.head_mapping == losses.SHIFTED_SOFTMAX:
            d_raw = losses.ce_grad_logits_batch(raw, labels)
        else:  # m = 2 sigmoid head: d(-log p_lambda)/dz = sigma - [lambda = 1]
            d_raw = p[:, :1] - (np.asarray(labels)[:, None] == 1)
        return loss, d_raw
    raise ConfigError(f"unknown loss {loss_kind!r}")


def evaluate(net: DenseNet, dataset: Dataset, loss_kind: str, chunk: int = 2048) -> tuple[float, float]:
    """(accuracy, mean loss) over the dataset.

    BOLT models predict by argmax witness score, CE models by argmax
    probability (see the loss module for why the rules differ).
    """
    m = net.num_classes()
    if dataset.num_classes > m:
        raise ValueError(f"dataset has {dataset.num_classes} classes, model supports {m}")
    hits = 0
    loss_sum = 0.0
    for start in range(0, dataset.n, chunk):
        rows = slice(start, start + chunk)
        cache = forward(net, dataset.features[rows])
        labels = dataset.labels[rows]
        loss, _ = _batch_loss_and_grad(net, cache, labels, loss_kind)
        loss_sum += float(loss.sum())
        if loss_kind == BOLT:
            h, _ = losses.map_outputs_batch(cache.raw_outputs, net.head_mapping, m)
            pred = losses.predict_batch(h)
        else:
            p = losses.class_probabilities(cache.raw_outputs, net.head_mapping, m)
            pred = losses.predict_proba_batch(p)
        hits += int((pred == labels).sum())
    return hits / dataset.n, loss_sum / dataset.n


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    validation_loss: float  # nan when no validation split is configured
    test_accuracy: float  # nan when no eval dataset is supplied
    test_error: float
    learning_rate: float


def train(
    net: DenseNet,
    dataset: Dataset,
    loss_kind: str,
    optimizer: OptimizerState,
    schedule: PlateauSchedule | None = None,
    epochs: int | None = None,
    iterations: int | None = None,
    batch_size: int = 64,
    shuffle_seed: int = 0,
    validation_fraction: float = 0.1,
    validation_seed: int = 0,
    eval_dataset: Dataset | None = None,
) -> list[EpochMetrics]:
    """Mini-batch training loop; mutates net/optimizer, returns per-epoch metrics.

    Exactly one of epochs/iterations must be given; iterations counts
    optimizer steps and the final partial epoch is logged too.  A
    validation split is carved out only when a plateau schedule asks
    for one.  Raises TrainingDivergedError (with the epoch index) on a
    non-finite batch loss.
    """
    if (epochs is None) == (iterations is None):
        raise ConfigError("specify exactly one of epochs / iterations")
    if dataset.n < 1:
        raise ConfigError("training dataset is empty")

    train_ds, val_ds = dataset, None
    if schedule is not None:
        train_ds, val_ds = split(dataset, (1.0 - validation_fraction, validation_fraction),
                                 seed=validation_seed)
    batch_size = min(batch_size, train_ds.n)
    steps_per_epoch = math.ceil(train_ds.n / batch_size)
    if epochs is not None:
        total_steps = epochs * steps_per_epoch
        n_epochs = epochs
    else:
        total_steps = iterations
        n_epochs = math.ceil(iterations / steps_per_epoch)

    metrics: list[EpochMetrics] = []
    step = 0
    for epoch in range(n_epochs):
        epoch_loss = 0.0
        epoch_samples = 0
        for batch_idx in minibatches(train_ds, batch_size, derive_seed(shuffle_seed, epoch)):
            if step >= total_steps:
                break
            cache = forward(net, train_ds.features[batch_idx])
            loss, d_raw = _batch_loss_and_grad(net, cache, train_ds.labels[batch_idx], loss_kind)
            batch_mean = float(loss.mean())
            if not math.isfinite(batch_mean):
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch + 1}")
            grads = backward(net, cache, d_raw)
            optimizer_step(net, grads, optimizer)
            epoch_loss += float(loss.sum())
            epoch_samples += len(batch_idx)
            step += 1
        if epoch_samples == 0:
            break
        val_loss = math.nan
        if val_ds is not None:
            _, val_loss = evaluate(net, val_ds, loss_kind)
            if schedule is not None:
                schedule.update(optimizer, val_loss)
        test_acc = test_err = math.nan
        if eval_dataset is not None:
            test_acc, _ = evaluate(net, eval_dataset, loss_kind)
            test_err = 1.0 - test_acc
        metrics.append(
            EpochMetrics(epoch + 1, epoch_loss / epoch_samples, val_loss, test_acc, test_err,
                         optimizer.learning_rate)
        )
    return metrics


def save_model(net: DenseNet, path: str) -> None:
    """Versioned text format; float64 values as round-trip decimal strings."""
    doc = {
        "formatVersion": MODEL_FORMAT_VERSION,
        "layerDims": list(net.layer_dims),
        "activations": list(net.activations),
        "headMapping": net.head_mapping,
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")


def load_model(path: str) -> DenseNet:
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    version = doc.get("formatVersion")
    if version != MODEL_FORMAT_VERSION:
        raise ConfigError(f"unsupported model formatVersion {version!r}")
    dims = tuple(int(d) for d in doc["layerDims"])
    weights = [np.asarray(w, dtype=np.float64) for w in doc["weights"]]
    biases = [np.asarray(b, dtype=np.float64) for b in doc["biases"]]
    for i, (w, b) in enumerate(zip(weights, biases)):
        if w.shape != (dims[i], dims[i + 1]) or b.shape != (dims[i + 1],):
            raise ConfigError(f"parameter shapes at layer {i} do not match layerDims {dims}")
    return DenseNet(dims, tuple(doc["activations"]), weights, biases, doc["headMapping"])
