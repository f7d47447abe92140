"""
Multilayer perceptron with tansig units, trained online by backpropagation
with momentum on a sum-of-squares loss.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidK, InvalidParameter, NonFiniteLoss


@dataclass(frozen=True)
class MlpConfig:
    layer_sizes: tuple = (40, 25, 16)
    learning_rate: float = 0.02
    momentum: float = 0.9
    max_epochs: int = 500
    target_loss: float = 1e-3
    seed: int = 0
    init_scale: float = 0.5

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2 or min(sizes) < 1:
            raise InvalidParameter(f"layer_sizes needs >= 2 layers of size >= 1, got {sizes}")
        if self.learning_rate < 0:
            raise InvalidParameter("learning_rate must be non-negative")
        if not 0.0 <= self.momentum < 1.0:
            raise InvalidParameter("momentum must lie in [0, 1)")
        if self.max_epochs < 0 or self.target_loss < 0 or self.init_scale <= 0:
            raise InvalidParameter("max_epochs, target_loss must be >= 0 and init_scale > 0")


@dataclass
class MlpModel:
    weights: list  # per layer, fan_out x fan_in
    biases: list
    config: MlpConfig
    weight_velocity: list = field(default_factory=list)
    bias_velocity: list = field(default_factory=list)
    epochs_trained: int = 0

    @property
    def num_classes(self) -> int:
        return self.config.layer_sizes[-1]

    def parameters(self):
        return [*self.weights, *self.biases]


@dataclass(frozen=True)
class Prediction:
    scores: np.ndarray
    ranking: np.ndarray


def tansig(x):
    """Hyperbolic-tangent sigmoid, ``2 / (1 + exp(-2x)) - 1``."""
    return np.tanh(x)


def init_model(cfg: MlpConfig) -> MlpModel:
    """Uniform weights in ``+-init_scale / sqrt(fan_in)``, zero biases and velocity."""
    rng = np.random.default_rng(cfg.seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(cfg.layer_sizes[:-1], cfg.layer_sizes[1:]):
        bound = cfg.init_scale / math.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, (fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpModel(
        weights,
        biases,
        cfg,
        [np.zeros_like(w) for w in weights],
        [np.zeros_like(b) for b in biases],
    )


def _activations(model: MlpModel, x: np.ndarray) -> list:
    acts = [x]
    for w, b in zip(model.weights, model.biases):
        acts.append(tansig(w @ acts[-1] + b))
    return acts


def _check_input(model: MlpModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.config.layer_sizes[0],):
        raise DimensionMismatch(
            f"input shape {x.shape} does not match input layer size {model.config.layer_sizes[0]}"
        )
    return x


def rank_scores(scores) -> np.ndarray:
    """Labels by descending score; equal scores keep the lower label first."""
    return np.argsort(-np.asarray(scores), kind="stable")


def forward(model: MlpModel, x) -> Prediction:
    x = _check_input(model, x)
    scores = _activations(model, x)[-1]
    return Prediction(scores, rank_scores(scores))


def predict_topk(model: MlpModel, x, k: int) -> list:
    if not 1 <= k <= model.num_classes:
        raise InvalidK(f"k={k} outside 1..{model.num_classes}")
    return [int(c) for c in forward(model, x).ranking[:k]]


def encode_target(label, n_out: int) -> np.ndarray:
    """
    Class label to a +1/-1 one-hot target. Array labels are taken as
    explicit target vectors.
    """
    if np.ndim(label) == 0:
        label = int(label)
        if not 0 <= label < n_out:
            raise DimensionMismatch(f"label {label} outside 0..{n_out - 1}")
        target = np.full(n_out, -1.0)
        target[label] = 1.0
        return target
    target = np.asarray(label, dtype=np.float64)
    if target.shape != (n_out,):
        raise DimensionMismatch(f"target shape {target.shape} != ({n_out},)")
    return target


def loss_and_gradients(model: MlpModel, x, target):
    """
    Per-sample loss ``0.5 * sum((out - target)**2)`` and its gradients.

    Returns ``(loss, weight_grads, bias_grads)``.
    """
    x = _check_input(model, x)
    acts = _activations(model, x)
    err = acts[-1] - target
    loss = 0.5 * float(err @ err)
    delta = err * (1.0 - acts[-1] ** 2)
    grad_w = [None] * len(model.weights)
    grad_b = [None] * len(model.weights)
    for layer in range(len(model.weights) - 1, -1, -1):
        grad_w[layer] = np.outer(delta, acts[layer])
        grad_b[layer] = delta
        if layer:
            delta = (model.weights[layer].T @ delta) * (1.0 - acts[layer] ** 2)
    return loss, grad_w, grad_b


def train_epoch(model: MlpModel, samples: Sequence) -> tuple[MlpModel, float]:
    """
    One online pass over *samples* (``(vector, label)`` pairs) in a shuffled
    order seeded by the config seed and the epoch counter.

    Returns an updated copy of the model and the mean per-sample loss, each
    sample's loss taken before its own update.
    """
    if not samples:
        raise InvalidParameter("training needs at least one sample")
    model = copy.deepcopy(model)
    cfg = model.config
    n_out = model.num_classes
    order = np.random.default_rng([cfg.seed, model.epochs_trained]).permutation(len(samples))
    total = 0.0
    for i in order:
        x, label = samples[i]
        loss, grad_w, grad_b = loss_and_gradients(model, x, encode_target(label, n_out))
        if not math.isfinite(loss):
            raise NonFiniteLoss(f"loss became {loss} in epoch {model.epochs_trained}")
        total += loss
        for layer in range(len(model.weights)):
            vw = cfg.momentum * model.weight_velocity[layer] - cfg.learning_rate * grad_w[layer]
            vb = cfg.momentum * model.bias_velocity[layer] - cfg.learning_rate * grad_b[layer]
            model.weight_velocity[layer] = vw
            model.bias_velocity[layer] = vb
            model.weights[layer] = model.weights[layer] + vw
            model.biases[layer] = model.biases[layer] + vb
    for p in model.parameters():
        if not np.all(np.isfinite(p)):
            raise NonFiniteLoss(f"non-finite parameters after epoch {model.epochs_trained}")
    model.epochs_trained += 1
    return model, total / len(samples)


def train(model: MlpModel, samples: Sequence, cfg: Optional[MlpConfig] = None) -> tuple[MlpModel, list]:
    """Run epochs until the epoch loss reaches ``target_loss`` or ``max_epochs`` pass."""
    cfg = cfg or model.config
    if cfg != model.config:
        model = copy.deepcopy(model)
        model.config = cfg
    history = []
    for _ in range(cfg.max_epochs):
        model, loss = train_epoch(model, samples)
        history.append(loss)
        if loss <= cfg.target_loss:
            break
    return model, history
