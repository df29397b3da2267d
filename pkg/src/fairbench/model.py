"""Fully connected scorers and the minibatch trainer.

The scorer maps features to a probability-like score through ReLU hidden
layers and a logistic output unit. Gradients are hand-written: the trainer
backpropagates the derivative of weighted binary cross-entropy plus an
optional fairness penalty, whose gradient with respect to the batch scores is
supplied by a callback.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from .errors import DivergenceError, ShapeError

SCORE_EPS = 1e-15

# penalty(batch_scores, batch_index) -> (value, d value / d batch_scores)
Penalty = Callable[[np.ndarray, np.ndarray], "tuple[float, np.ndarray]"]


@dataclass(frozen=True, eq=False)
class Scorer:
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def layer_sizes(self) -> list[int]:
        return [w.shape[1] for w in self.weights[:-1]]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "layer_sizes": self.layer_sizes,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Scorer":
        weights = tuple(np.asarray(w, dtype=np.float64).reshape(-1, len(b)) for w, b in zip(doc["weights"], doc["biases"]))
        biases = tuple(np.asarray(b, dtype=np.float64) for b in doc["biases"])
        return cls(weights, biases)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    epochs: int = 80
    batch_size: int = 64
    optimizer: str = "adam"
    penalty_weight: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.penalty_weight < 0:
            raise ValueError("penalty_weight must be nonnegative")


def init_scorer(input_dim: int, layer_sizes: Sequence[int] = (), seed: int = 0) -> Scorer:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    if input_dim < 1:
        raise ShapeError("input_dim must be at least 1")
    rng = np.random.default_rng(seed)
    sizes = [input_dim, *layer_sizes, 1]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Scorer(tuple(weights), tuple(biases))


def _check_input(scorer, features):
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != scorer.input_dim:
        raise ShapeError(f"expected features of shape (batch, {scorer.input_dim}), got {features.shape}")
    return features


def _logits(scorer, features):
    """Output logits and the post-activation of every layer (input first)."""
    acts = [features]
    h = features
    last = len(scorer.weights) - 1
    for k, (w, b) in enumerate(zip(scorer.weights, scorer.biases)):
        z = h @ w + b
        if k < last:
            h = np.maximum(z, 0.0)
            acts.append(h)
    return z[:, 0], acts


def forward(scorer: Scorer, features) -> np.ndarray:
    z, _ = _logits(scorer, _check_input(scorer, features))
    return np.clip(expit(z), SCORE_EPS, 1.0 - SCORE_EPS)


def _backward(scorer, acts, dz):
    grads_w, grads_b = [None] * len(scorer.weights), [None] * len(scorer.weights)
    delta = dz[:, None]
    for k in range(len(scorer.weights) - 1, -1, -1):
        grads_w[k] = acts[k].T @ delta
        grads_b[k] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ scorer.weights[k].T) * (acts[k] > 0)
    return grads_w, grads_b


def bce(scores_or_logits, labels, weights=None, *, logits=False) -> float:
    """Mean weighted binary cross-entropy (mean over samples, not weight)."""
    labels = np.asarray(labels, dtype=np.float64)
    weights = np.ones_like(labels) if weights is None else np.asarray(weights, dtype=np.float64)
    if logits:
        z = np.asarray(scores_or_logits, dtype=np.float64)
        per = np.logaddexp(0.0, z) - labels * z
    else:
        s = np.clip(scores_or_logits, SCORE_EPS, 1 - SCORE_EPS)
        per = -(labels * np.log(s) + (1 - labels) * np.log1p(-s))
    return float(np.mean(weights * per))


def loss_and_grad(scorer, features, labels, weights=None, penalty=None, penalty_weight=0.0, index=None):
    """Objective value and parameter gradients on one batch.

    Returns ``(loss, bce_value, grads_w, grads_b)``.
    """
    features = _check_input(scorer, features)
    labels = np.asarray(labels, dtype=np.float64)
    b = labels.shape[0]
    weights = np.ones(b) if weights is None else np.asarray(weights, dtype=np.float64)
    z, acts = _logits(scorer, features)
    s = expit(z)
    data_loss = float(np.mean(weights * (np.logaddexp(0.0, z) - labels * z)))
    dz = weights * (s - labels) / b
    loss = data_loss
    if penalty is not None and penalty_weight > 0:
        value, grad_s = penalty(np.clip(s, SCORE_EPS, 1 - SCORE_EPS), np.arange(b) if index is None else index)
        loss += penalty_weight * value
        dz = dz + penalty_weight * np.asarray(grad_s) * s * (1.0 - s)
    gw, gb = _backward(scorer, acts, dz)
    return loss, data_loss, gw, gb


def train(scorer: Scorer, dataset, config: TrainConfig, penalty: Penalty | None = None,
          labels=None, weights=None) -> Scorer:
    """Minibatch training of ``scorer`` on ``dataset``.

    ``labels`` and ``weights`` override the dataset's own columns (used by
    reductions that retrain on reweighted, relabelled copies of the data).
    The penalty callback receives the batch scores and the dataset row indices
    of the batch.
    """
    X = dataset.features
    y = np.asarray(dataset.labels if labels is None else labels, dtype=np.float64)
    w = np.asarray(dataset.weights if weights is None else weights, dtype=np.float64)
    n = X.shape[0]
    if n == 0:
        raise ValueError("cannot train on an empty dataset")
    _check_input(scorer, X[:1])

    params = [p.copy() for p in scorer.weights] + [p.copy() for p in scorer.biases]
    n_layers = len(scorer.weights)
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    lr = config.learning_rate
    step = 0
    for epoch in range(config.epochs):
        order = np.random.default_rng([config.seed, epoch]).permutation(n)
        for batch, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            current = Scorer(tuple(params[:n_layers]), tuple(params[n_layers:]))
            loss, _, gw, gb = loss_and_grad(current, X[idx], y[idx], w[idx], penalty, config.penalty_weight, idx)
            if not np.isfinite(loss):
                raise DivergenceError(epoch, batch, loss)
            grads = gw + gb
            step += 1
            if config.optimizer == "sgd":
                for p, g in zip(params, grads):
                    p -= lr * g
            else:
                c1 = 1.0 - beta1 ** step
                c2 = 1.0 - beta2 ** step
                for p, g, mk, vk in zip(params, grads, m, v):
                    mk *= beta1
                    mk += (1 - beta1) * g
                    vk *= beta2
                    vk += (1 - beta2) * g * g
                    p -= lr * (mk / c1) / (np.sqrt(vk / c2) + eps)
    return Scorer(tuple(params[:n_layers]), tuple(params[n_layers:]))
