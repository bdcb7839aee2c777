"""Self-contained multilayer-perceptron engine on NumPy.

Covers everything the hierarchy needs: softmax classifiers for routing and
class assignment, a squared-error regressor for the network selector, and a
finite-difference gradient check used as the numerical-correctness oracle.

Training is bit-reproducible for a fixed seed: parameter init, epoch
shuffles, and dropout masks all come from one ``numpy.random.default_rng``
stream consumed in a fixed order (init layer by layer, then one permutation
per epoch, then per-batch dropout masks).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "MLPConfig",
    "TrainSpec",
    "MLPModel",
    "train",
    "train_regressor",
    "predict_proba",
    "predict",
    "evaluate",
    "gradient_check",
    "constant_model",
    "model_to_json",
    "model_from_json",
    "save_model_json",
    "load_model_json",
]


@dataclass(frozen=True)
class MLPConfig:
    """Layer widths of a rectified-linear MLP.

    ``hidden_layers`` may be empty (a plain linear softmax/regression layer).
    Dropout applies after each hidden activation during training only.
    """

    input_dim: int
    hidden_layers: tuple[int, ...]
    output_dim: int
    dropout_rate: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden_layers", tuple(int(h) for h in self.hidden_layers))
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("input and output dims must be >= 1")
        if any(h < 1 for h in self.hidden_layers):
            raise ValueError("hidden layer widths must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        widths = [self.input_dim, *self.hidden_layers, self.output_dim]
        return list(zip(widths[:-1], widths[1:]))


@dataclass(frozen=True)
class TrainSpec:
    learning_rate: float = 0.01
    momentum: float = 0.9
    epochs: int = 40
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class MLPModel:
    """Trained parameters plus the config and spec that produced them."""

    config: MLPConfig
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    train_loss_history: list[float] = field(default_factory=list)
    spec: TrainSpec | None = None
    regression: bool = False

    def __post_init__(self) -> None:
        dims = self.config.layer_dims
        if len(self.weights) != len(dims) or len(self.biases) != len(dims):
            raise ValueError("parameter count does not match config depth")
        for (fan_in, fan_out), w, b in zip(dims, self.weights, self.biases):
            if w.shape != (fan_in, fan_out) or b.shape != (fan_out,):
                raise ValueError(
                    f"parameter shape {w.shape}/{b.shape} does not match layer ({fan_in}, {fan_out})"
                )
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ValueError("parameters contain non-finite values")
        for arr in (*self.weights, *self.biases):
            arr.setflags(write=False)

    @property
    def seed(self) -> int | None:
        return self.spec.seed if self.spec is not None else None


def _init_params(config: MLPConfig, rng: np.random.Generator) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Seeded uniform init in [-r, r] with r = sqrt(6 / (fan_in + fan_out))."""
    weights, biases = [], []
    for fan_in, fan_out in config.layer_dims:
        r = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-r, r, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def _forward(
    weights: Sequence[np.ndarray],
    biases: Sequence[np.ndarray],
    x: np.ndarray,
    dropout_masks: Sequence[np.ndarray] | None = None,
) -> list[np.ndarray]:
    """Activations per layer; index 0 is the input, the last entry raw logits."""
    acts = [x]
    h = x
    n_hidden = len(weights) - 1
    for layer in range(n_hidden):
        h = np.maximum(h @ weights[layer] + biases[layer], 0.0)
        if dropout_masks is not None:
            h = h * dropout_masks[layer]
        acts.append(h)
    acts.append(h @ weights[-1] + biases[-1])
    return acts


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _ce_loss(logits: np.ndarray, labels: np.ndarray) -> float:
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    return float(np.mean(log_z - shifted[np.arange(labels.size), labels]))


def _backward(
    weights: Sequence[np.ndarray],
    acts: Sequence[np.ndarray],
    delta_out: np.ndarray,
    dropout_masks: Sequence[np.ndarray] | None = None,
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    grads_w = [np.empty(0)] * len(weights)
    grads_b = [np.empty(0)] * len(weights)
    delta = delta_out
    for layer in range(len(weights) - 1, -1, -1):
        grads_w[layer] = acts[layer].T @ delta
        grads_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = delta @ weights[layer].T
            if dropout_masks is not None:
                delta = delta * dropout_masks[layer - 1]
            delta = delta * (acts[layer] > 0)
    return grads_w, grads_b


def _validate_features(features: np.ndarray, input_dim: int) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"features must be 2-D, got shape {x.shape}")
    if x.shape[1] != input_dim:
        raise ValueError(f"feature dim {x.shape[1]} does not match input dim {input_dim}")
    if not np.isfinite(x).all():
        raise ValueError("features contain non-finite values")
    return x


def _run_sgd(
    x: np.ndarray,
    targets: np.ndarray,
    config: MLPConfig,
    spec: TrainSpec,
    regression: bool,
) -> MLPModel:
    rng = np.random.default_rng(spec.seed)
    weights, biases = _init_params(config, rng)
    vel_w = [np.zeros_like(w) for w in weights]
    vel_b = [np.zeros_like(b) for b in biases]
    n = x.shape[0]
    rate = config.dropout_rate
    history: list[float] = []

    for _ in range(spec.epochs):
        order = rng.permutation(n)
        batch_losses: list[float] = []
        for start in range(0, n, spec.batch_size):
            idx = order[start : start + spec.batch_size]
            xb, tb = x[idx], targets[idx]
            masks = None
            if rate > 0.0:
                masks = [
                    (rng.random((xb.shape[0], h)) >= rate) / (1.0 - rate)
                    for h in config.hidden_layers
                ]
            acts = _forward(weights, biases, xb, masks)
            logits = acts[-1]
            if regression:
                diff = logits - tb
                batch_losses.append(float(np.mean(diff**2)))
                delta = 2.0 * diff / xb.shape[0]
            else:
                batch_losses.append(_ce_loss(logits, tb))
                delta = _softmax(logits)
                delta[np.arange(tb.size), tb] -= 1.0
                delta /= xb.shape[0]
            grads_w, grads_b = _backward(weights, acts, delta, masks)
            for layer in range(len(weights)):
                vel_w[layer] = spec.momentum * vel_w[layer] - spec.learning_rate * grads_w[layer]
                vel_b[layer] = spec.momentum * vel_b[layer] - spec.learning_rate * grads_b[layer]
                weights[layer] = weights[layer] + vel_w[layer]
                biases[layer] = biases[layer] + vel_b[layer]
        history.append(float(np.mean(batch_losses)))

    return MLPModel(
        config=config,
        weights=weights,
        biases=biases,
        train_loss_history=history,
        spec=spec,
        regression=regression,
    )


def train(
    features: np.ndarray,
    labels: Sequence[int],
    config: MLPConfig,
    spec: TrainSpec,
) -> MLPModel:
    """Minimize softmax cross-entropy with mini-batch SGD plus momentum.

    The loss history records the mean over each epoch's batch losses, each
    batch loss evaluated before that batch's update.
    """
    x = _validate_features(features, config.input_dim)
    y = np.asarray(labels, dtype=np.int64)
    if y.ndim != 1 or y.size != x.shape[0]:
        raise ValueError("labels must be 1-D and match the number of samples")
    if y.size < 1:
        raise ValueError("training set is empty")
    if y.min() < 0 or y.max() >= config.output_dim:
        raise ValueError(f"labels out of range [0, {config.output_dim})")
    return _run_sgd(x, y, config, spec, regression=False)


def train_regressor(
    features: np.ndarray,
    targets: np.ndarray,
    config: MLPConfig,
    spec: TrainSpec,
) -> MLPModel:
    """Same SGD loop with an identity output layer and squared-error loss."""
    x = _validate_features(features, config.input_dim)
    t = np.asarray(targets, dtype=np.float64)
    if t.ndim == 1:
        t = t[:, None]
    if t.shape != (x.shape[0], config.output_dim):
        raise ValueError(f"targets shape {t.shape} does not match (N, {config.output_dim})")
    if not np.isfinite(t).all():
        raise ValueError("targets contain non-finite values")
    return _run_sgd(x, t, config, spec, regression=True)


def predict_proba(model: MLPModel, features: np.ndarray) -> np.ndarray:
    """Row-stochastic class probabilities; dropout disabled."""
    if model.regression:
        raise ValueError("predict_proba is undefined for a regression model")
    x = _validate_features(features, model.config.input_dim)
    logits = _forward(model.weights, model.biases, x)[-1]
    return _softmax(logits)


def predict(model: MLPModel, features: np.ndarray) -> np.ndarray:
    """Raw network outputs (regression targets or logits)."""
    x = _validate_features(features, model.config.input_dim)
    return _forward(model.weights, model.biases, x)[-1]


def evaluate(model: MLPModel, features: np.ndarray, labels: Sequence[int]) -> float:
    """Fraction of argmax-correct predictions; ties go to the lowest class index."""
    y = np.asarray(labels, dtype=np.int64)
    if y.size == 0:
        raise ValueError("evaluation set is empty")
    probs = predict_proba(model, features)
    if y.size != probs.shape[0]:
        raise ValueError("labels do not match the number of samples")
    if y.min() < 0 or y.max() >= model.config.output_dim:
        raise ValueError(f"labels out of range [0, {model.config.output_dim})")
    return float(np.mean(np.argmax(probs, axis=1) == y))


def gradient_check(
    config: MLPConfig,
    features: np.ndarray,
    labels: Sequence[int],
    seed: int = 0,
    step: float = 1e-5,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Every parameter is perturbed by ``step`` in both directions. Biases get
    random offsets so the probe point sits away from rectifier kinks (zero
    biases put units fed by dead inputs exactly on the non-differentiable
    point, where one-sided slopes disagree by construction). The relative
    error denominator is floored at 1e-6 so finite-difference noise on
    near-zero gradients does not dominate.
    """
    if config.dropout_rate != 0.0:
        raise ValueError("gradient check requires dropout disabled")
    x = _validate_features(features, config.input_dim)
    y = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(seed)
    weights, biases = _init_params(config, rng)
    biases = [rng.uniform(-0.5, 0.5, size=b.shape) for b in biases]

    acts = _forward(weights, biases, x)
    delta = _softmax(acts[-1])
    delta[np.arange(y.size), y] -= 1.0
    delta /= y.size
    grads_w, grads_b = _backward(weights, acts, delta)

    def loss_at(ws: list[np.ndarray], bs: list[np.ndarray]) -> float:
        return _ce_loss(_forward(ws, bs, x)[-1], y)

    max_err = 0.0
    params = [(weights, grads_w), (biases, grads_b)]
    for arrays, grads in params:
        for layer, arr in enumerate(arrays):
            flat = arr.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                up = loss_at(weights, biases)
                flat[i] = orig - step
                down = loss_at(weights, biases)
                flat[i] = orig
                numeric = (up - down) / (2.0 * step)
                analytic = grads[layer].reshape(-1)[i]
                denom = max(abs(analytic), abs(numeric), 1e-6)
                max_err = max(max_err, abs(analytic - numeric) / denom)
    return max_err


def constant_model(input_dim: int) -> MLPModel:
    """Single-output model that always predicts probability 1: the degenerate
    classifier for clusters with one class (and for one-cluster routing)."""
    config = MLPConfig(input_dim=input_dim, hidden_layers=(), output_dim=1)
    return MLPModel(
        config=config,
        weights=[np.zeros((input_dim, 1))],
        biases=[np.zeros(1)],
    )


def model_to_json(model: MLPModel) -> str:
    payload = {
        "config": {
            "input_dim": model.config.input_dim,
            "hidden_layers": list(model.config.hidden_layers),
            "output_dim": model.config.output_dim,
            "dropout_rate": model.config.dropout_rate,
        },
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "seed": model.seed,
        "spec": None
        if model.spec is None
        else {
            "learning_rate": model.spec.learning_rate,
            "momentum": model.spec.momentum,
            "epochs": model.spec.epochs,
            "batch_size": model.spec.batch_size,
            "seed": model.spec.seed,
        },
        "regression": model.regression,
        "train_loss_history": model.train_loss_history,
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def model_from_json(text: str) -> MLPModel:
    payload = json.loads(text)
    cfg = payload["config"]
    config = MLPConfig(
        input_dim=cfg["input_dim"],
        hidden_layers=tuple(cfg["hidden_layers"]),
        output_dim=cfg["output_dim"],
        dropout_rate=cfg.get("dropout_rate", 0.0),
    )
    spec = None
    if payload.get("spec") is not None:
        spec = TrainSpec(**payload["spec"])
    return MLPModel(
        config=config,
        weights=[np.asarray(w, dtype=np.float64) for w in payload["weights"]],
        biases=[np.asarray(b, dtype=np.float64) for b in payload["biases"]],
        train_loss_history=list(payload.get("train_loss_history", [])),
        spec=spec,
        regression=bool(payload.get("regression", False)),
    )


def save_model_json(model: MLPModel, path: str | Path) -> None:
    Path(path).write_text(model_to_json(model), encoding="utf-8")


def load_model_json(path: str | Path) -> MLPModel:
    return model_from_json(Path(path).read_text(encoding="utf-8"))


def resized(config: MLPConfig, output_dim: int, input_dim: int | None = None) -> MLPConfig:
    """Copy of a config with the output (and optionally input) layer resized."""
    kwargs: dict = {"output_dim": output_dim}
    if input_dim is not None:
        kwargs["input_dim"] = input_dim
    return replace(config, **kwargs)
