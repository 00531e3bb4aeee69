"""A small fully connected regressor with hand-written backprop and Adam.

Arrays are row-major: a batch is ``(B, d)``, a single sample may be ``(d,)``.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, NumericError

FORMAT_VERSION = 1
HIDDEN_WIDTHS = (100, 100, 100)
ACTIVATIONS = ("relu", "tanh")


@dataclass
class MlpModel:
    weights: list[np.ndarray]   # layer i maps (in_i,) -> (out_i,): shape (in_i, out_i)
    biases: list[np.ndarray]
    activations: list[str]
    r_max: float | None = None
    input_scale: float | None = None

    def __post_init__(self) -> None:
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise DataError("layer lists have different lengths")
        for i, (w, b, act) in enumerate(zip(self.weights, self.biases, self.activations)):
            if act not in ACTIVATIONS:
                raise DataError(f"unknown activation {act!r}")
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise DataError(f"layer {i}: bias does not match weight shape")
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise DataError(f"layer {i}: dimension chain broken")

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def is_trained(self) -> bool:
        return self.r_max is not None

    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def copy(self) -> "MlpModel":
        return copy.deepcopy(self)


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 100
    dropout: float = 0.25
    epochs: int = 10
    validation_fraction: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)


def init_model(input_dim: int, output_dim: int, seed: int | None = 0,
               hidden: tuple[int, ...] = HIDDEN_WIDTHS) -> MlpModel:
    """Glorot-uniform weights, zero biases; ReLU hidden layers and a tanh output."""
    if input_dim < 1 or output_dim < 1:
        raise ValueError("dimensions must be >= 1")
    rng = np.random.default_rng(seed)
    dims = [input_dim, *hidden, output_dim]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    activations = ["relu"] * len(hidden) + ["tanh"]
    return MlpModel(weights, biases, activations)


def _check_input(model: MlpModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.input_dim or x.ndim not in (1, 2):
        raise DataError(f"input has shape {x.shape}, model expects (..., {model.input_dim})")
    return x


def _dropout_masks(model: MlpModel, batch: int, dropout: float, rng) -> list[np.ndarray | None]:
    masks: list[np.ndarray | None] = []
    for w, act in zip(model.weights, model.activations):
        if act == "relu" and dropout > 0:
            keep = rng.random((batch, w.shape[1])) >= dropout
            masks.append(keep / (1.0 - dropout))
        else:
            masks.append(None)
    return masks


def _forward(model: MlpModel, x2: np.ndarray, masks):
    """Returns the layer inputs and pre-activations needed for backprop."""
    inputs, pre = [], []
    a = x2
    for w, b, act, mask in zip(model.weights, model.biases, model.activations, masks):
        inputs.append(a)
        z = a @ w + b
        pre.append(z)
        a = np.maximum(z, 0.0) if act == "relu" else np.tanh(z)
        if mask is not None:
            a = a * mask
    return a, inputs, pre


def forward(model: MlpModel, x: np.ndarray, mode: str = "eval", dropout: float = 0.0,
            seed=None) -> np.ndarray:
    """Model output in (-1, 1)^P.

    In ``train`` mode inverted dropout is applied after each hidden ReLU with
    masks drawn from ``seed`` (an int or a ``numpy.random.Generator``).
    """
    x = _check_input(model, x)
    x2 = np.atleast_2d(x)
    masks = _dropout_masks(model, len(x2), dropout, np.random.default_rng(seed)) \
        if mode == "train" else [None] * len(model.weights)
    out, _, _ = _forward(model, x2, masks)
    return out[0] if x.ndim == 1 else out


def mse_loss(pred: np.ndarray, target: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise DataError("prediction and target shapes differ")
    return float(np.mean((pred - target) ** 2))


def _backprop(model: MlpModel, x2: np.ndarray, t2: np.ndarray, masks):
    out, inputs, pre = _forward(model, x2, masks)
    batch, width = t2.shape
    # d(mean over all B*P entries)/d out
    delta = 2.0 * (out - t2) / (batch * width)
    grad_w: list[np.ndarray] = [None] * len(model.weights)  # type: ignore[list-item]
    grad_b: list[np.ndarray] = [None] * len(model.weights)  # type: ignore[list-item]
    for i in reversed(range(len(model.weights))):
        if masks[i] is not None:
            delta = delta * masks[i]
        if model.activations[i] == "relu":
            delta = delta * (pre[i] > 0)
        else:
            delta = delta * (1.0 - np.tanh(pre[i]) ** 2)
        grad_w[i] = inputs[i].T @ delta
        grad_b[i] = delta.sum(axis=0)
        delta = delta @ model.weights[i].T
    return Gradients(grad_w, grad_b), delta * batch, out


def backward(model: MlpModel, x: np.ndarray, target: np.ndarray, mode: str = "eval",
             dropout: float = 0.0, seed=None) -> tuple[Gradients, np.ndarray]:
    """Exact gradients of ``mse_loss(forward(x), target)``.

    Weight gradients are those of the batch-mean loss.  The input gradient
    has the shape of ``x``; for a batch, row i is the gradient of sample i's
    own loss (so its sign is what FGSM needs).  Dropout masks are drawn from
    ``seed`` exactly as in :func:`forward`.
    """
    x = _check_input(model, x)
    x2 = np.atleast_2d(x)
    t2 = np.atleast_2d(np.asarray(target, dtype=float))
    if t2.shape != (len(x2), model.output_dim):
        raise DataError("target shape does not match model output")
    masks = _dropout_masks(model, len(x2), dropout, np.random.default_rng(seed)) \
        if mode == "train" else [None] * len(model.weights)
    grads, input_grad, _ = _backprop(model, x2, t2, masks)
    return grads, (input_grad[0] if x.ndim == 1 else input_grad)


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, model: MlpModel) -> "AdamState":
        return cls([np.zeros_like(p) for p in model.params()],
                   [np.zeros_like(p) for p in model.params()])


def adam_step(model: MlpModel, grads: Gradients, state: AdamState, lr: float = 0.01,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One bias-corrected Adam update, applied in place to ``model`` and ``state``."""
    params = model.params()
    g_list = grads.params()
    if len(params) != len(state.m) or any(p.shape != m.shape for p, m in zip(params, state.m)):
        raise DataError("optimizer state does not match model")
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    for p, g, m, v in zip(params, g_list, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def split_indices(n: int, fraction: float, seed) -> tuple[np.ndarray, np.ndarray]:
    """Shuffle ``range(n)`` and cut off ``fraction`` of it (at least one item if n > 1)."""
    perm = np.random.default_rng(seed).permutation(n)
    n_hold = int(round(n * fraction))
    if fraction > 0 and n > 1:
        n_hold = min(max(n_hold, 1), n - 1)
    return perm[n_hold:], perm[:n_hold]


def train(model: MlpModel, x: np.ndarray, y: np.ndarray, config: TrainConfig,
          validation: tuple[np.ndarray, np.ndarray] | None = None,
          ) -> tuple[MlpModel, TrainHistory]:
    """Mini-batch Adam on the MSE loss; returns a trained copy and its history.

    Without explicit ``validation`` data, ``config.validation_fraction`` of the
    samples is held out.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) == 0:
        raise DataError("cannot train on an empty dataset")
    if len(x) != len(y):
        raise DataError("inputs and targets differ in length")
    rng = np.random.default_rng(config.seed)
    if validation is None:
        tr, va = split_indices(len(x), config.validation_fraction, rng)
        x_tr, y_tr, x_va, y_va = x[tr], y[tr], x[va], y[va]
    else:
        x_tr, y_tr = x, y
        x_va, y_va = (np.asarray(a, dtype=float) for a in validation)

    model = model.copy()
    history = TrainHistory()
    state = AdamState.zeros_like(model)
    for _ in range(config.epochs):
        order = rng.permutation(len(x_tr))
        losses, sizes = [], []
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            masks = _dropout_masks(model, len(idx), config.dropout, rng)
            grads, _, out = _backprop(model, x_tr[idx], y_tr[idx], masks)
            losses.append(mse_loss(out, y_tr[idx]))
            sizes.append(len(idx))
            adam_step(model, grads, state, config.learning_rate,
                      config.beta1, config.beta2, config.adam_eps)
        train_loss = float(np.average(losses, weights=sizes))
        val_loss = mse_loss(forward(model, x_va), y_va) if len(x_va) else float("nan")
        if not np.isfinite(train_loss) or not all(np.all(np.isfinite(p)) for p in model.params()):
            raise NumericError("training diverged: non-finite loss or parameters")
        history.train_loss.append(train_loss)
        history.val_loss.append(val_loss)
    return model, history


def model_to_dict(model: MlpModel) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "input_dim": model.input_dim,
        "output_dim": model.output_dim,
        "r_max": model.r_max,
        "input_scale": model.input_scale,
        "layers": [
            {"in": int(w.shape[0]), "out": int(w.shape[1]), "activation": act,
             "weights": w.tolist(), "bias": b.tolist()}
            for w, b, act in zip(model.weights, model.biases, model.activations)
        ],
    }


def model_from_dict(doc: dict) -> MlpModel:
    if not isinstance(doc, dict):
        raise DataError("model document must be a JSON object")
    if doc.get("format_version") != FORMAT_VERSION:
        raise DataError(f"unsupported model format_version {doc.get('format_version')!r}")
    try:
        weights = [np.array(l["weights"], dtype=float).reshape(l["in"], l["out"])
                   for l in doc["layers"]]
        biases = [np.array(l["bias"], dtype=float) for l in doc["layers"]]
        acts = [l["activation"] for l in doc["layers"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed model document: {exc}") from exc
    model = MlpModel(weights, biases, acts, doc.get("r_max"), doc.get("input_scale"))
    if model.input_dim != doc.get("input_dim") or model.output_dim != doc.get("output_dim"):
        raise DataError("declared input/output dims do not match layers")
    return model


def save_model(model: MlpModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)))


def load_model(path: str | Path) -> MlpModel:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: not a model document ({exc})") from exc
    return model_from_dict(doc)
