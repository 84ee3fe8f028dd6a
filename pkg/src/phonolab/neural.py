"""Fully connected feedforward networks trained with mini-batch SGD.

Hidden layers use the logistic sigmoid.  The output head is either a softmax
(trained with cross-entropy) or linear (trained with mean squared error).
Weights of layer ``l`` have shape ``(n_in, n_out)`` and are applied as
``x @ W + b``.
"""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, ParseError, TrainingError, UnsupportedVersionError

log = logging.getLogger(__name__)

HEADS = ("softmax", "linear")
LOSSES = ("cross_entropy", "mse")
FILE_MAGIC = "PHONOLAB-NET"
FILE_VERSION = 1


@dataclass
class Network:
    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    head: str = "softmax"
    seed: int | None = None
    hidden_activation: str = "sigmoid"

    @property
    def num_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "Network":
        return copy.deepcopy(self)


@dataclass
class TrainConfig:
    learning_rate: float = 0.05
    batch_size: int = 64
    epochs: int = 100
    seed: int = 0
    early_stop_patience: int = 10
    loss: str = "cross_entropy"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ContractError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ContractError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ContractError("epochs must be >= 0")
        if self.loss not in LOSSES:
            raise ContractError(f"loss must be one of {LOSSES}")

    @classmethod
    def classifier(cls, **kw) -> "TrainConfig":
        return cls(**{"learning_rate": 0.05, "loss": "cross_entropy", **kw})

    @classmethod
    def regressor(cls, **kw) -> "TrainConfig":
        return cls(**{"learning_rate": 0.02, "loss": "mse", **kw})


@dataclass
class History:
    train_loss: list[float] = field(default_factory=list)
    heldout_loss: list[float] = field(default_factory=list)
    best_epoch: int = 0  # 0 means the initial network was kept


def init_network(layer_sizes, head: str = "softmax", seed: int = 0) -> Network:
    """Glorot-uniform weights, zero biases; deterministic for a given seed."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2:
        raise ContractError("a network needs at least an input and an output layer")
    if any(s <= 0 for s in sizes):
        raise ContractError(f"layer sizes must be positive, got {sizes}")
    if head not in HEADS:
        raise ContractError(f"head must be one of {HEADS}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Network(sizes, weights, biases, head, seed)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(x):
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _activations(net: Network, x: np.ndarray) -> list[np.ndarray]:
    acts = [x]
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = acts[-1] @ w + b
        if i < last:
            acts.append(sigmoid(z))
        elif net.head == "softmax":
            acts.append(softmax(z))
        else:
            acts.append(z)
    return acts


def forward(net: Network, inputs) -> np.ndarray:
    """Network output for one input vector or a batch of row vectors."""
    x = np.asarray(inputs, dtype=float)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    if x2.shape[1] != net.layer_sizes[0]:
        raise ContractError(f"input width {x2.shape[1]} != {net.layer_sizes[0]}")
    out = _activations(net, x2)[-1]
    return out[0] if single else out


def _default_loss(net: Network) -> str:
    return "cross_entropy" if net.head == "softmax" else "mse"


def loss_value(net: Network, inputs, targets, loss: str | None = None) -> float:
    """Mean per-sample loss: cross-entropy, or half the squared error."""
    loss = loss or _default_loss(net)
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    t = np.atleast_2d(np.asarray(targets, dtype=float))
    y = forward(net, x)
    if loss == "cross_entropy":
        return float(-np.sum(t * np.log(np.maximum(y, 1e-300))) / x.shape[0])
    return float(0.5 * np.sum((y - t) ** 2) / x.shape[0])


def _output_delta(net, y, t, loss):
    # dL/dz at the output pre-activation, per sample (not yet averaged)
    if net.head == "softmax" and loss == "cross_entropy":
        return y - t
    if net.head == "linear" and loss == "mse":
        return y - t
    if net.head == "softmax" and loss == "mse":
        g = y - t
        return y * (g - np.sum(g * y, axis=1, keepdims=True))
    # linear head with cross-entropy on raw outputs
    return -t / np.where(np.abs(y) < 1e-300, 1e-300, y)


def gradients(net: Network, inputs, targets, loss: str | None = None):
    """Backpropagated gradients of the mean loss: (weight grads, bias grads)."""
    loss = loss or _default_loss(net)
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    t = np.atleast_2d(np.asarray(targets, dtype=float))
    acts = _activations(net, x)
    delta = _output_delta(net, acts[-1], t, loss) / x.shape[0]
    gw = [None] * len(net.weights)
    gb = [None] * len(net.weights)
    for i in range(len(net.weights) - 1, -1, -1):
        gw[i] = acts[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i > 0:
            h = acts[i]
            delta = (delta @ net.weights[i].T) * h * (1.0 - h)
    return gw, gb


def train(net: Network, inputs, targets, cfg: TrainConfig, heldout=None):
    """Mini-batch SGD with early stopping on the held-out loss.

    ``heldout`` is an optional ``(inputs, targets)`` pair; without it the
    training loss drives model selection.  Returns the best-epoch snapshot
    and a :class:`History`.
    """
    x = np.asarray(inputs, dtype=float)
    t = np.asarray(targets, dtype=float)
    if x.shape[0] != t.shape[0]:
        raise ContractError(f"{x.shape[0]} inputs but {t.shape[0]} targets")
    if t.shape[1] != net.layer_sizes[-1]:
        raise ContractError(f"target width {t.shape[1]} != output size {net.layer_sizes[-1]}")
    if x.shape[1] != net.layer_sizes[0]:
        raise ContractError(f"input width {x.shape[1]} != {net.layer_sizes[0]}")
    history = History()
    if cfg.epochs == 0 or x.shape[0] == 0:
        return net, history

    def selection_loss(model):
        if heldout is not None and len(heldout[0]):
            return loss_value(model, heldout[0], heldout[1], cfg.loss)
        return loss_value(model, x, t, cfg.loss)

    rng = np.random.default_rng(cfg.seed)
    work = net.copy()
    best = net.copy()
    stale = 0
    n = x.shape[0]
    # overflow shows up as a non-finite loss, which is reported below
    with np.errstate(over="ignore", invalid="ignore"):
        best_loss = selection_loss(net)
        for epoch in range(1, cfg.epochs + 1):
            order = rng.permutation(n)
            for start in range(0, n, cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                gw, gb = gradients(work, x[idx], t[idx], cfg.loss)
                for w, b, dw, db in zip(work.weights, work.biases, gw, gb):
                    w -= cfg.learning_rate * dw
                    b -= cfg.learning_rate * db
            train_loss = loss_value(work, x, t, cfg.loss)
            held = selection_loss(work) if heldout is not None else train_loss
            if not (math.isfinite(train_loss) and math.isfinite(held)):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch} (lr={cfg.learning_rate}, "
                    f"batch={cfg.batch_size}); try a smaller learning rate"
                )
            history.train_loss.append(train_loss)
            history.heldout_loss.append(held)
            log.debug("epoch %d train %.6g heldout %.6g", epoch, train_loss, held)
            if held < best_loss:
                best_loss = held
                best = work.copy()
                history.best_epoch = epoch
                stale = 0
            else:
                stale += 1
                if stale >= cfg.early_stop_patience:
                    break
    return best, history


def gradient_check(net: Network, inputs, targets, loss: str | None = None, eps: float = 1e-5) -> float:
    """Largest relative gap between backprop and central finite differences.

    The relative error of each parameter is ``|g - n| / max(|g|, |n|, 1e-6)``;
    the floor keeps parameters with zero gradient from dividing by zero.
    """
    loss = loss or _default_loss(net)
    gw, gb = gradients(net, inputs, targets, loss)
    probe = net.copy()
    worst = 0.0
    for params, grads in ((probe.weights, gw), (probe.biases, gb)):
        for p, g in zip(params, grads):
            flat, gflat = p.reshape(-1), g.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                up = loss_value(probe, inputs, targets, loss)
                flat[i] = orig - eps
                down = loss_value(probe, inputs, targets, loss)
                flat[i] = orig
                num = (up - down) / (2 * eps)
                rel = abs(gflat[i] - num) / max(abs(gflat[i]), abs(num), 1e-6)
                worst = max(worst, rel)
    return worst


def save_network(net: Network, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"{FILE_MAGIC} {FILE_VERSION}\n")
        fh.write(f"{net.head}\n")
        fh.write(" ".join(str(s) for s in net.layer_sizes) + "\n")
        for w, b in zip(net.weights, net.biases):
            fh.write(" ".join(f"{v:.17g}" for v in b) + "\n")
            for row in w:
                fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def _floats(line, expected, path, lineno):
    try:
        vals = np.array([float(v) for v in line.split()])
    except ValueError as exc:
        raise ParseError(f"bad number ({exc})", path, lineno) from None
    if vals.size != expected:
        raise ParseError(f"expected {expected} values, found {vals.size}", path, lineno)
    return vals


def load_network(path) -> Network:
    with open(path) as fh:
        lines = fh.read().splitlines()

    def line(i):
        if i >= len(lines):
            raise ParseError("unexpected end of file", path, i + 1)
        return lines[i]

    parts = line(0).split()
    if len(parts) != 2 or parts[0] != FILE_MAGIC:
        raise ParseError(f"missing {FILE_MAGIC} header", path, 1)
    if parts[1] != str(FILE_VERSION):
        raise UnsupportedVersionError(f"unsupported network file version {parts[1]!r}", path, 1)
    head = line(1).strip()
    if head not in HEADS:
        raise ParseError(f"unknown head {head!r}", path, 2)
    try:
        sizes = [int(s) for s in line(2).split()]
    except ValueError:
        raise ParseError("layer sizes must be integers", path, 3) from None
    if len(sizes) < 2 or any(s <= 0 for s in sizes):
        raise ParseError(f"invalid layer sizes {sizes}", path, 3)
    weights, biases = [], []
    i = 3
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        biases.append(_floats(line(i), fan_out, path, i + 1))
        i += 1
        rows = []
        for _ in range(fan_in):
            rows.append(_floats(line(i), fan_out, path, i + 1))
            i += 1
        weights.append(np.vstack(rows))
    if any(l.strip() for l in lines[i:]):
        raise ParseError("trailing data after last layer", path, i + 1)
    return Network(sizes, weights, biases, head, None)
