"""Graph convolutional model with hand-written backpropagation.

Each layer computes ``X_next = phi(A_hat @ X @ W) + b``; the bias sits outside
the activation and the last layer is linear, feeding a row-wise softmax.
Training is full-batch SGD with momentum.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Literal, Sequence

import numpy as np

from .data import NodeDataset
from .errors import DivergenceError, FormatError, InputError
from .linalg import as_matrix, top_singular_values
from .lowrank import WidthPlan, plan_widths

log = logging.getLogger(__name__)

Activation = Literal["swish", "relu", "identity"]


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def swish(x):
    """``x * sigmoid(x)``; accepts scalars or arrays."""
    s = sigmoid(x)
    out = np.asarray(x, dtype=float) * s
    return float(out) if np.ndim(x) == 0 else out


def swish_grad(x):
    s = sigmoid(x)
    out = s + np.asarray(x, dtype=float) * s * (1.0 - s)
    return float(out) if np.ndim(x) == 0 else out


_ACTIVATIONS: dict[str, tuple[Callable, Callable]] = {
    "swish": (swish, swish_grad),
    "relu": (lambda z: np.maximum(z, 0.0), lambda z: (z > 0).astype(float)),
    "identity": (lambda z: z, lambda z: np.ones_like(z)),
}


@dataclass
class GnnLayer:
    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.W = as_matrix(self.W, "W")
        self.b = np.array(self.b, dtype=float).reshape(-1)
        if self.b.shape[0] != self.W.shape[1]:
            raise InputError(f"bias length {self.b.shape[0]} != W columns {self.W.shape[1]}")
        if not np.all(np.isfinite(self.b)):
            raise InputError("bias contains NaN or Inf")


@dataclass
class GnnModel:
    layers: list[GnnLayer]
    activation: Activation = "swish"

    def __post_init__(self):
        if not self.layers:
            raise InputError("model needs at least one layer")
        if self.activation not in _ACTIVATIONS:
            raise InputError(f"unknown activation {self.activation!r}")
        for t, (a, b) in enumerate(zip(self.layers, self.layers[1:])):
            if a.W.shape[1] != b.W.shape[0]:
                raise InputError(
                    f"layer {t} outputs {a.W.shape[1]} but layer {t + 1} expects {b.W.shape[0]}"
                )

    @property
    def dims(self) -> list[int]:
        return [self.layers[0].W.shape[0]] + [layer.W.shape[1] for layer in self.layers]

    def copy(self) -> "GnnModel":
        return GnnModel([GnnLayer(l.W.copy(), l.b.copy()) for l in self.layers], self.activation)


def init_model(dims: Sequence[int], activation: Activation = "swish", seed: int = 0) -> GnnModel:
    """Uniform ``+-sqrt(6 / (d_in + d_out))`` weights and zero biases."""
    if len(dims) < 2 or min(dims) < 1:
        raise InputError(f"dims must list >= 2 positive sizes, got {list(dims)}")
    rng = np.random.default_rng(seed)
    layers = []
    for d_in, d_out in zip(dims, dims[1:]):
        bound = np.sqrt(6.0 / (d_in + d_out))
        layers.append(GnnLayer(rng.uniform(-bound, bound, (d_in, d_out)), np.zeros(d_out)))
    return GnnModel(layers, activation)


@dataclass
class TrainConfig:
    lr: float
    epochs: int = 200
    momentum: float = 0.9
    weight_decay: float = 5e-4
    seed: int = 0
    optimizer: str = "sgd"
    # L1 penalty on weights; only for comparing against sparsity-regularized pruning
    l1: float = 0.0
    track_spectra: bool = True
    spectra_k: int = 5

    def __post_init__(self):
        if not self.lr >= 0:
            raise InputError(f"lr must be >= 0, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise InputError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0 or self.l1 < 0:
            raise InputError("weight_decay and l1 must be >= 0")
        if self.epochs < 0:
            raise InputError("epochs must be >= 0")
        if self.optimizer != "sgd":
            raise InputError(f"only the 'sgd' optimizer is supported, got {self.optimizer!r}")


# -- forward / loss / backward ----------------------------------------------


@dataclass
class _Trace:
    states: list[np.ndarray]  # X^1 .. X^{T+1}
    pre: list[np.ndarray]  # A_hat X^t W^t per layer


def _check_dims(model: GnnModel, data: NodeDataset) -> None:
    if data.X.shape[1] != model.dims[0]:
        raise InputError(
            f"model expects {model.dims[0]} input features, data has {data.X.shape[1]}"
        )
    if data.A_hat.shape != (data.n, data.n):
        raise InputError("A_hat must be n x n")


def _forward_trace(model: GnnModel, data: NodeDataset) -> _Trace:
    _check_dims(model, data)
    phi = _ACTIVATIONS[model.activation][0]
    X = data.X
    states, pre = [X], []
    last = len(model.layers) - 1
    for t, layer in enumerate(model.layers):
        Z = data.A_hat @ (X @ layer.W)
        pre.append(Z)
        X = (Z if t == last else phi(Z)) + layer.b
        states.append(X)
    return _Trace(states, pre)


def forward(model: GnnModel, data: NodeDataset) -> list[np.ndarray]:
    """Hidden states ``[X^1, ..., X^{T+1}]``; the last entry holds the logits."""
    return _forward_trace(model, data).states


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _cross_entropy(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> float:
    z = logits[mask] - logits[mask].max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(z.shape[0]), labels[mask]].mean())


def _penalty(model: GnnModel, weight_decay: float, l1: float) -> float:
    out = 0.0
    for layer in model.layers:
        if weight_decay:
            out += 0.5 * weight_decay * float(np.sum(layer.W**2))
        if l1:
            out += l1 * float(np.sum(np.abs(layer.W)))
    return out


def loss(
    model: GnnModel,
    data: NodeDataset,
    weight_decay: float = 0.0,
    l1: float = 0.0,
    mask: np.ndarray | None = None,
) -> float:
    """Mean softmax cross-entropy over ``mask`` (train nodes by default) plus penalties."""
    mask = data.train_mask if mask is None else mask
    if not mask.any():
        raise InputError("loss needs at least one labelled node in the mask")
    logits = forward(model, data)[-1]
    return _cross_entropy(logits, data.labels, mask) + _penalty(model, weight_decay, l1)


def loss_and_grads(
    model: GnnModel, data: NodeDataset, weight_decay: float = 0.0, l1: float = 0.0
) -> tuple[float, list[tuple[np.ndarray, np.ndarray]]]:
    mask = data.train_mask
    m = int(mask.sum())
    if m == 0:
        raise InputError("loss needs at least one labelled node in the train mask")
    trace = _forward_trace(model, data)
    logits = trace.states[-1]
    value = _cross_entropy(logits, data.labels, mask) + _penalty(model, weight_decay, l1)

    G = np.zeros_like(logits)
    P = softmax(logits[mask])
    P[np.arange(m), data.labels[mask]] -= 1.0
    G[mask] = P / m

    dphi = _ACTIVATIONS[model.activation][1]
    last = len(model.layers) - 1
    A_T = data.A_hat.T
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(model.layers)  # type: ignore
    for t in range(last, -1, -1):
        layer = model.layers[t]
        db = G.sum(axis=0)
        dZ = G if t == last else G * dphi(trace.pre[t])
        AdZ = A_T @ dZ
        dW = trace.states[t].T @ AdZ
        if weight_decay:
            dW = dW + weight_decay * layer.W
        if l1:
            dW = dW + l1 * np.sign(layer.W)
        grads[t] = (dW, db)
        if t > 0:
            G = AdZ @ layer.W.T
    return value, grads


def backward(
    model: GnnModel, data: NodeDataset, weight_decay: float = 0.0, l1: float = 0.0
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Exact gradients ``(dW, db)`` per layer of :func:`loss`."""
    return loss_and_grads(model, data, weight_decay, l1)[1]


def zero_velocity(model: GnnModel) -> list[tuple[np.ndarray, np.ndarray]]:
    return [(np.zeros_like(l.W), np.zeros_like(l.b)) for l in model.layers]


def sgd_step(model: GnnModel, grads, velocity, config: TrainConfig):
    """Momentum SGD: ``v <- momentum * v - lr * g``; ``param <- param + v``.

    Returns ``(new_model, new_velocity)``; inputs are left untouched.
    """
    if len(grads) != len(model.layers) or len(velocity) != len(model.layers):
        raise InputError("grads and velocity must have one entry per layer")
    layers, new_v = [], []
    for layer, (gW, gb), (vW, vb) in zip(model.layers, grads, velocity):
        vW = config.momentum * vW - config.lr * gW
        vb = config.momentum * vb - config.lr * gb
        layers.append(GnnLayer(layer.W + vW, layer.b + vb))
        new_v.append((vW, vb))
    return GnnModel(layers, model.activation), new_v


# -- training ----------------------------------------------------------------


@dataclass
class SpectraLog:
    """Top singular values of each layer's output state, per epoch."""

    k: int = 5
    records: list[tuple[int, int, np.ndarray]] = field(default_factory=list)

    def add(self, epoch: int, states: Sequence[np.ndarray]) -> None:
        for layer, X in enumerate(states[1:], start=1):
            kk = min(self.k, *X.shape)
            self.records.append((epoch, layer, top_singular_values(X, kk)))

    def to_csv(self) -> str:
        head = "epoch,layer," + ",".join(f"s{i + 1}" for i in range(self.k))
        rows = [head]
        for epoch, layer, vals in self.records:
            cells = [f"{v:.17g}" for v in vals] + [""] * (self.k - len(vals))
            rows.append(f"{epoch},{layer}," + ",".join(cells))
        return "\n".join(rows) + "\n"


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    val_loss: float
    val_acc: float


def history_to_csv(history: Sequence[EpochMetrics]) -> str:
    rows = ["epoch,train_loss,val_loss,val_acc"]
    rows += [
        f"{h.epoch},{h.train_loss:.17g},{h.val_loss:.17g},{h.val_acc:.17g}" for h in history
    ]
    return "\n".join(rows) + "\n"


def predict(model: GnnModel, data: NodeDataset) -> np.ndarray:
    return forward(model, data)[-1].argmax(axis=1)


def accuracy(model: GnnModel, data: NodeDataset, mask: np.ndarray) -> float:
    if not mask.any():
        return float("nan")
    return float(np.mean(predict(model, data)[mask] == data.labels[mask]))


def evaluate(model: GnnModel, data: NodeDataset, config: TrainConfig, epoch: int) -> tuple[EpochMetrics, list[np.ndarray]]:
    states = forward(model, data)
    logits = states[-1]
    pen = _penalty(model, config.weight_decay, config.l1)
    train_loss = _cross_entropy(logits, data.labels, data.train_mask) + pen
    if data.val_mask.any():
        val_loss = _cross_entropy(logits, data.labels, data.val_mask) + pen
        val_acc = float(np.mean(logits[data.val_mask].argmax(1) == data.labels[data.val_mask]))
    else:
        val_loss = val_acc = float("nan")
    return EpochMetrics(epoch, train_loss, val_loss, val_acc), states


EpochHook = Callable[[GnnModel, int], GnnModel]


@dataclass
class TrainResult:
    model: GnnModel
    history: list[EpochMetrics]
    spectra: SpectraLog


def train(
    model: GnnModel,
    data: NodeDataset,
    config: TrainConfig,
    hooks: Sequence[EpochHook] = (),
) -> TrainResult:
    """Full-batch training for ``config.epochs`` epochs.

    Metrics are recorded for the initial model (epoch 0) and after every
    update. ``hooks`` run after each update, in order, and may return a
    modified model (fault injection, rewiring).
    """
    if not data.train_mask.any():
        raise InputError("train mask is empty")
    model = model.copy()
    velocity = zero_velocity(model)
    spectra = SpectraLog(config.spectra_k)
    metrics, states = evaluate(model, data, config, 0)
    history = [metrics]
    if config.track_spectra:
        spectra.add(0, states)
    for epoch in range(1, config.epochs + 1):
        with np.errstate(over="ignore", invalid="ignore"):  # divergence is checked below
            value, grads = loss_and_grads(model, data, config.weight_decay, config.l1)
        if not np.isfinite(value):
            raise DivergenceError(f"loss became non-finite at epoch {epoch} (lr={config.lr})")
        model, velocity = sgd_step(model, grads, velocity, config)
        for hook in hooks:
            model = hook(model, epoch)
        with np.errstate(over="ignore", invalid="ignore"):
            metrics, states = evaluate(model, data, config, epoch)
        if not np.isfinite(metrics.train_loss):
            raise DivergenceError(f"loss became non-finite at epoch {epoch} (lr={config.lr})")
        history.append(metrics)
        if config.track_spectra:
            spectra.add(epoch, states)
    return TrainResult(model, history, spectra)


# -- pruning -----------------------------------------------------------------


def shrink_model(model: GnnModel, widths: Sequence[int]) -> GnnModel:
    """Project each hidden layer onto the top singular directions of its weights.

    For hidden layer t with ``W_t = U S V^T`` and target width k, the layer
    becomes ``W_t V_k`` with bias ``V_k^T b_t``, and the next layer's weights
    are pre-multiplied by ``V_k^T``. Layers whose width is unchanged are left
    as they are.
    """
    hidden = len(model.layers) - 1
    if len(widths) != hidden:
        raise InputError(f"need {hidden} hidden widths, got {len(widths)}")
    layers = [GnnLayer(l.W.copy(), l.b.copy()) for l in model.layers]
    for t, k in enumerate(widths):
        W, b = layers[t].W, layers[t].b
        d = W.shape[1]
        if not 1 <= k <= d:
            raise InputError(f"width {k} for layer {t} must lie in [1, {d}]")
        if k == d:
            continue
        _, _, Vt = np.linalg.svd(W, full_matrices=False)
        Vk = Vt[:k].T  # d x k
        layers[t] = GnnLayer(W @ Vk, Vk.T @ b)
        nxt = layers[t + 1]
        layers[t + 1] = GnnLayer(Vk.T @ nxt.W, nxt.b)
    return GnnModel(layers, model.activation)


@dataclass
class PruneResult:
    model: GnnModel
    plan: WidthPlan
    dense: TrainResult
    finetuned: TrainResult


def prune_pipeline(
    data: NodeDataset,
    initial_widths: Sequence[int],
    config: TrainConfig,
    energy_threshold: float = 0.99,
    finetune_epochs: int = 50,
    activation: Activation = "swish",
    include_input: bool = False,
    finetune_hooks: Sequence[EpochHook] = (),
) -> PruneResult:
    """Train wide, plan pyramidal widths from hidden activations, shrink, fine-tune.

    With ``include_input`` the raw feature matrix is prepended to the
    activations, so the first hidden width is also capped by the input rank.
    ``finetune_hooks`` run during the fine-tuning stage only.
    """
    C = data.class_count
    dims = [data.X.shape[1], *initial_widths, C]
    dense = train(init_model(dims, activation, config.seed), data, config)
    states = forward(dense.model, data)
    hidden_states = list(states[1:-1])
    if not hidden_states:
        raise InputError("pruning needs at least one hidden layer")
    sources = ([data.X] if include_input else []) + hidden_states
    plan = plan_widths(sources, energy_threshold, min_width=C)
    if include_input:
        plan = replace(plan, widths=plan.widths[1:], source_ranks=plan.source_ranks)
    if any(r < C for r in plan.source_ranks):
        log.warning(
            "estimated ranks %s fall below the class count %d; widths clamped",
            list(plan.source_ranks),
            C,
        )
    widths = [min(w, d) for w, d in zip(plan.widths, initial_widths)]
    widths = list(np.minimum.accumulate(widths))
    plan = replace(plan, widths=tuple(int(w) for w in widths))
    shrunk = shrink_model(dense.model, widths)
    ft_config = replace(config, epochs=finetune_epochs, seed=config.seed)
    finetuned = train(shrunk, data, ft_config, hooks=finetune_hooks)
    return PruneResult(finetuned.model, plan, dense, finetuned)


# -- checkpoints -------------------------------------------------------------
# little-endian: uint64 layer count L, L+1 uint64 dims, then per layer the
# row-major float64 entries of W followed by b.


def save_checkpoint(path: str | Path, model: GnnModel) -> None:
    dims = model.dims
    parts = [struct.pack("<Q", len(model.layers)), struct.pack(f"<{len(dims)}Q", *dims)]
    for layer in model.layers:
        parts.append(np.ascontiguousarray(layer.W, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(layer.b, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path: str | Path, activation: Activation = "swish") -> GnnModel:
    raw = Path(path).read_bytes()
    try:
        (count,) = struct.unpack_from("<Q", raw, 0)
        if not 1 <= count <= len(raw) // 8:
            raise FormatError(f"{path}: implausible layer count {count}")
        dims = struct.unpack_from(f"<{count + 1}Q", raw, 8)
    except struct.error as exc:
        raise FormatError(f"{path}: truncated checkpoint header") from exc
    offset = 8 * (count + 2)
    expected = offset + 8 * sum(a * b + b for a, b in zip(dims, dims[1:]))
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(raw)}")
    layers = []
    for d_in, d_out in zip(dims, dims[1:]):
        W = np.frombuffer(raw, "<f8", d_in * d_out, offset).reshape(d_in, d_out)
        offset += 8 * d_in * d_out
        b = np.frombuffer(raw, "<f8", d_out, offset)
        offset += 8 * d_out
        layers.append(GnnLayer(W.astype(float), b.astype(float)))
    return GnnModel(layers, activation)
