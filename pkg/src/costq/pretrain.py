"""Supervised initialization of the classification-action outputs.

Classification actions are terminal, so their optimal Q-values equal the
immediate reward: 0 for the true class and the misclassification reward
otherwise. That makes them trainable from synthetic partially-observed states
before any interaction: we sample masks whose density is biased towards the
empty observation (p = u^3 with u uniform) and regress the classification
outputs onto their terminal values. Feature-action outputs receive no direct
supervision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .env import Observation
from .errors import TrainingDiverged

Array = np.ndarray


@dataclass
class PretrainConfig:
    state_count: int
    learning_rate: float = 1e-3
    batch_size: int = 128
    lr_scale: float = 0.3
    lr_min: float = 1e-7
    rounds: int = 10  # loss-tracking granularity for the LR-reduction trigger

    def __post_init__(self):
        if self.state_count < 0:
            raise ValueError("state_count must be non-negative")
        if self.batch_size <= 0 or self.learning_rate <= 0:
            raise ValueError("batch_size and learning_rate must be positive")


def generate_masked_state(x: Array, rng: np.random.Generator) -> Observation:
    """Synthetic observation of ``x``: draw u ~ U(0,1), reveal each feature
    independently with probability u^3."""
    u = rng.random()
    p = u ** 3
    m = (rng.random(len(x)) < p).astype(x.dtype)
    return Observation(x_bar=x * m, m=m)


def generate_masked_batch(features: Array, rng: np.random.Generator,
                          count: int) -> tuple[Array, Array]:
    """``count`` masked states from random rows; returns (inputs, row_indices)."""
    n = features.shape[1]
    rows = rng.integers(len(features), size=count)
    u = rng.random(count)
    p = u ** 3
    m = (rng.random((count, n)) < p[:, None]).astype(features.dtype)
    inputs = np.empty((count, 2 * n), dtype=features.dtype)
    inputs[:, :n] = features[rows] * m
    inputs[:, n:] = m
    return inputs, rows


def classification_loss_and_gradients(theta: nn.NetworkParams, inputs: Array,
                                      labels: Array, n_classes: int,
                                      wrong_value: float = -1.0):
    """MSE over the classification outputs only, against their terminal values.

    Feature-action outputs contribute nothing to the loss; they are touched
    only through the dueling combination and the shared trunk.
    """
    q, cache = nn.forward_cached(theta, inputs)
    batch = inputs.shape[0]
    target = np.full((batch, n_classes), wrong_value, dtype=q.dtype)
    target[np.arange(batch), labels] = 0.0
    diff = q[:, :n_classes] - target
    loss = float(np.mean(diff * diff))
    d_q = np.zeros_like(q)
    d_q[:, :n_classes] = 2.0 * diff / (batch * n_classes)
    grads = nn.backward_from_output_grad(theta, inputs, cache, d_q)
    return loss, grads


def pretrain_classifier_head(theta: nn.NetworkParams, features: Array,
                             labels: Array, n_classes: int, cfg: PretrainConfig,
                             rng: np.random.Generator,
                             max_grad_norm: float = 1.0) -> list[float]:
    """Train the classification outputs on synthetic masked states, in place.

    Processes ``cfg.state_count`` generated states in minibatches. The learning
    rate drops by ``lr_scale`` whenever a tracking round fails to improve on
    the best round loss so far (mirroring the main loop's trigger). Returns the
    per-round mean losses.
    """
    if cfg.state_count == 0:
        return []
    labels = np.asarray(labels)
    adam = nn.AdamState.for_params(theta)
    lr = cfg.learning_rate
    n_batches = max(1, -(-cfg.state_count // cfg.batch_size))
    per_round = max(1, n_batches // max(1, cfg.rounds))

    round_losses: list[float] = []
    best = -np.inf
    acc: list[float] = []
    for b in range(n_batches):
        size = min(cfg.batch_size, cfg.state_count - b * cfg.batch_size)
        inputs, rows = generate_masked_batch(features, rng, size)
        loss, grads = classification_loss_and_gradients(
            theta, inputs, labels[rows], n_classes)
        if not np.isfinite(loss):
            raise TrainingDiverged(f"pretraining loss became non-finite at batch {b}")
        nn.clip_gradient_norm(grads, max_grad_norm)
        nn.adam_step(theta, adam, grads, lr)
        acc.append(loss)
        if len(acc) == per_round or b == n_batches - 1:
            mean_loss = float(np.mean(acc))
            round_losses.append(mean_loss)
            acc = []
            # reward framing: higher is better, so compare negated losses
            if -mean_loss > best:
                best = -mean_loss
            else:
                lr = max(lr * cfg.lr_scale, cfg.lr_min)
    return round_losses
