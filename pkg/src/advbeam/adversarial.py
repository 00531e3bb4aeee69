"""FGSM on complex pilot inputs and iterative adversarial training.

The network sees complex pilots as interleaved (re, im) reals.  Stepping by
``(eps + eps*j)`` with the sign taken separately on the real and imaginary
parts of the gradient is therefore the same as a real FGSM step of size
``eps`` on every interleaved component.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .nn import MlpModel, TrainConfig, backward, forward, init_model, mse_loss, train


@dataclass
class AttackParams:
    epsilon: float
    alpha: float | None = None   # None: 2x RMS clean validation error of the attacked model
    max_iters: int = 10
    seed: int = 0

    def __post_init__(self) -> None:
        if not np.isfinite(self.epsilon) or self.epsilon < 0:
            raise ConfigError("epsilon must be finite and non-negative")
        if self.alpha is not None and self.alpha < 0:
            raise ConfigError("alpha must be non-negative")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")


@dataclass
class AdvTrainParams:
    attack: AttackParams = field(default_factory=lambda: AttackParams(0.1))
    max_rounds: int = 10
    steady_state_tol: float = 0.01
    augment_ratio: float = 1.0

    def __post_init__(self) -> None:
        if self.max_rounds < 1:
            raise ConfigError("max_rounds must be >= 1")
        if not 0.0 < self.augment_ratio <= 1.0:
            raise ConfigError("augment_ratio must lie in (0, 1]")


def sign_complex(g: np.ndarray) -> np.ndarray:
    g = np.asarray(g, dtype=complex)
    return np.sign(g.real) + 1j * np.sign(g.imag)


def fgsm_step(x: np.ndarray, input_grad: np.ndarray, epsilon: float) -> np.ndarray:
    x = np.asarray(x)
    if np.shape(input_grad) != x.shape:
        raise DataError("gradient shape does not match input")
    if np.iscomplexobj(x):
        return x + epsilon * sign_complex(input_grad)
    return x + epsilon * np.sign(input_grad)


def clip_ball(candidate: np.ndarray, origin: np.ndarray, epsilon: float) -> np.ndarray:
    """Clamp every real component of ``candidate`` to within ``epsilon`` of ``origin``."""
    candidate = np.asarray(candidate)
    origin = np.asarray(origin)
    if candidate.shape != origin.shape:
        raise DataError("candidate and origin shapes differ")
    if np.iscomplexobj(candidate) or np.iscomplexobj(origin):
        c = candidate.astype(complex)
        o = origin.astype(complex)
        re = np.clip(c.real, o.real - epsilon, o.real + epsilon)
        im = np.clip(c.imag, o.imag - epsilon, o.imag + epsilon)
        return re + 1j * im
    return np.clip(candidate, origin - epsilon, origin + epsilon)


def prediction_error_rms(model: MlpModel, x: np.ndarray, y: np.ndarray) -> float:
    """RMS over samples of the Euclidean prediction error."""
    err = forward(model, x) - np.asarray(y)
    return float(np.sqrt(np.mean(np.sum(np.atleast_2d(err) ** 2, axis=1))))


def default_alpha(model: MlpModel, x_val: np.ndarray, y_val: np.ndarray) -> float:
    return 2.0 * prediction_error_rms(model, x_val, y_val)


def complex_fgsm(x: np.ndarray, y: np.ndarray, model: MlpModel, params: AttackParams,
                 alpha: float | None = None) -> np.ndarray:
    """Iterated, clipped FGSM with an output-distance stop.

    Repeats ``x_{t+1} = clip(x_t + eps * sign(grad), x, eps)`` up to
    ``max_iters`` times and stops a sample as soon as
    ``||F(x_{t+1}) - y||_2 >= alpha``; the post-update iterate is returned.
    Works on a single vector or a batch (rows stop independently).  Complex
    input is attacked through its interleaved real form.  Gradients are taken
    in eval mode.
    """
    if not model.is_trained:
        raise ConfigError("model has no normalization constant; train it first")
    alpha = params.alpha if alpha is None else alpha
    if alpha is None:
        raise ConfigError("alpha must be given (or use default_alpha on validation data)")

    if np.iscomplexobj(x):
        from .channel import flatten_complex, unflatten_complex
        shape = np.shape(x)
        flat = flatten_complex(x)
        adv = complex_fgsm(flat, y, model, params, alpha)
        return unflatten_complex(adv, shape)

    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.input_dim:
        raise DataError(f"input length {x.shape[-1]} != model input {model.input_dim}")
    x2 = np.atleast_2d(x)
    y2 = np.atleast_2d(np.asarray(y, dtype=float))
    if y2.shape != (len(x2), model.output_dim):
        raise DataError("target shape does not match model output")

    eps = params.epsilon
    x_t = x2.copy()
    active = np.ones(len(x2), dtype=bool)
    n = 0
    while n < params.max_iters and active.any():
        idx = np.flatnonzero(active)
        _, grad = backward(model, x_t[idx], y2[idx])
        x_t[idx] = clip_ball(fgsm_step(x_t[idx], grad, eps), x2[idx], eps)
        dist = np.linalg.norm(forward(model, x_t[idx]) - y2[idx], axis=1)
        active[idx[dist >= alpha]] = False
        n += 1
    return x_t[0] if x.ndim == 1 else x_t


@dataclass
class RoundLog:
    round: int
    n_train: int
    val_clean_mse: float
    val_adv_mse: float
    alpha: float


@dataclass
class AdvTrainResult:
    model: MlpModel
    rounds: list[RoundLog]
    stop_reason: str


def attacked_mse(model: MlpModel, x: np.ndarray, y: np.ndarray, params: AttackParams,
                 alpha: float) -> float:
    return mse_loss(forward(model, complex_fgsm(x, y, model, params, alpha)), y)


def adversarial_training(x: np.ndarray, y: np.ndarray, train_config: TrainConfig,
                         adv_params: AdvTrainParams,
                         validation: tuple[np.ndarray, np.ndarray] | None = None,
                         model: MlpModel | None = None) -> AdvTrainResult:
    """Train on clean data, then repeatedly add self-generated FGSM inputs and retrain.

    Round 0 is clean training.  Each later round attacks an ``augment_ratio``
    share of the clean training inputs against the current model (labels
    kept), trains the current model further on clean plus adversarial inputs,
    and measures the adversarial validation MSE.  The loop ends when that MSE
    changes by less than ``steady_state_tol`` (relative) or after
    ``max_rounds`` rounds.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) == 0:
        raise DataError("cannot train on an empty dataset")
    rng = np.random.default_rng(train_config.seed)
    if validation is None:
        from .nn import split_indices
        tr, va = split_indices(len(x), train_config.validation_fraction, rng)
        x, y, x_val, y_val = x[tr], y[tr], x[va], y[va]
    else:
        x_val, y_val = (np.asarray(a, dtype=float) for a in validation)
    if model is None:
        model = init_model(x.shape[1], y.shape[1], train_config.seed)
    r_max, input_scale = model.r_max, model.input_scale

    model, _ = train(model, x, y, train_config, validation=(x_val, y_val))
    model.r_max = 1.0 if r_max is None else r_max
    model.input_scale = input_scale

    attack = adv_params.attack
    rounds: list[RoundLog] = []

    def log_round(i: int, n_train: int) -> RoundLog:
        alpha = attack.alpha if attack.alpha is not None else default_alpha(model, x_val, y_val)
        entry = RoundLog(i, n_train, mse_loss(forward(model, x_val), y_val),
                         attacked_mse(model, x_val, y_val, attack, alpha), alpha)
        rounds.append(entry)
        return entry

    prev = log_round(0, len(x))
    if adv_params.max_rounds == 1:
        return AdvTrainResult(model, rounds, "max_rounds")
    if attack.epsilon == 0:
        return AdvTrainResult(model, rounds, "zero_budget")

    for i in range(1, adv_params.max_rounds):
        n_aug = max(1, int(round(adv_params.augment_ratio * len(x))))
        pick = np.sort(rng.permutation(len(x))[:n_aug])
        x_adv = complex_fgsm(x[pick], y[pick], model, attack, prev.alpha)
        x_aug = np.concatenate([x, x_adv])
        y_aug = np.concatenate([y, y[pick]])
        round_cfg = TrainConfig(**{**train_config.__dict__, "seed": int(rng.integers(2**31))})
        model, _ = train(model, x_aug, y_aug, round_cfg, validation=(x_val, y_val))
        model.r_max = 1.0 if r_max is None else r_max
        model.input_scale = input_scale
        cur = log_round(i, len(x_aug))
        change = abs(cur.val_adv_mse - prev.val_adv_mse) / max(prev.val_adv_mse, 1e-300)
        if change < adv_params.steady_state_tol:
            return AdvTrainResult(model, rounds, "steady_state")
        prev = cur
    return AdvTrainResult(model, rounds, "max_rounds")
