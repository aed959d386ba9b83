"""Dueling MLP with manual backpropagation, Adam, gradient clipping and soft target updates.

The network is a plain feed-forward net: three ReLU hidden layers feeding two
linear heads that share the last hidden layer. The scalar value head and the
per-action advantage head are combined into Q-values as

    Q(s, a) = V(s) + A(s, a) - mean_a' A(s, a')

Everything runs on numpy arrays; no autodiff framework is involved. Gradients
are derived by hand in ``loss_and_gradients`` and checked against finite
differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TrainingDiverged

Array = np.ndarray

# Order of parameter blocks everywhere (gradients, Adam moments, checkpoints):
# hidden 1..3 weight then bias, value head weight/bias, advantage head weight/bias.
BLOCK_NAMES = (
    "hidden1.weight", "hidden1.bias",
    "hidden2.weight", "hidden2.bias",
    "hidden3.weight", "hidden3.bias",
    "value.weight", "value.bias",
    "advantage.weight", "advantage.bias",
)


@dataclass
class LayerParams:
    """One dense layer computing ``input @ weight + bias``."""

    weight: Array  # (fan_in, fan_out)
    bias: Array    # (fan_out,)


@dataclass
class NetworkParams:
    """Weights of the dueling Q-network (either the online or the target copy)."""

    hidden: list[LayerParams]
    value: LayerParams
    advantage: LayerParams

    @property
    def n_inputs(self) -> int:
        return self.hidden[0].weight.shape[0]

    @property
    def n_features(self) -> int:
        # Network input is the masked feature vector concatenated with the mask.
        return self.n_inputs // 2

    @property
    def n_actions(self) -> int:
        return self.advantage.bias.size

    @property
    def hidden_sizes(self) -> tuple[int, ...]:
        return tuple(layer.bias.size for layer in self.hidden)

    @property
    def dtype(self) -> np.dtype:
        return self.hidden[0].weight.dtype

    def blocks(self) -> list[Array]:
        """All parameter arrays in the declared block order."""
        out = []
        for layer in self.hidden:
            out.extend((layer.weight, layer.bias))
        out.extend((self.value.weight, self.value.bias))
        out.extend((self.advantage.weight, self.advantage.bias))
        return out

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            hidden=[LayerParams(l.weight.copy(), l.bias.copy()) for l in self.hidden],
            value=LayerParams(self.value.weight.copy(), self.value.bias.copy()),
            advantage=LayerParams(self.advantage.weight.copy(), self.advantage.bias.copy()),
        )


@dataclass
class GradientSet:
    """Per-parameter gradients, shape-congruent with ``NetworkParams.blocks()``."""

    blocks: list[Array]

    def global_norm(self) -> float:
        """L2 norm over all parameters jointly."""
        total = 0.0
        for b in self.blocks:
            total += float(np.sum(b * b))
        return float(np.sqrt(total))

    @classmethod
    def zeros_like(cls, params: NetworkParams) -> "GradientSet":
        return cls([np.zeros_like(b) for b in params.blocks()])


@dataclass
class AdamState:
    """Adam optimizer moments, shape-congruent with the parameter blocks."""

    first_moment: list[Array]
    second_moment: list[Array]
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8

    @classmethod
    def for_params(cls, params: NetworkParams, beta1: float = 0.9,
                   beta2: float = 0.999, eps_hat: float = 1e-8) -> "AdamState":
        blocks = params.blocks()
        return cls(
            first_moment=[np.zeros_like(b) for b in blocks],
            second_moment=[np.zeros_like(b) for b in blocks],
            step_count=0,
            beta1=beta1,
            beta2=beta2,
            eps_hat=eps_hat,
        )


def init_params(n_features: int, n_actions: int,
                hidden_sizes: tuple[int, int, int] = (128, 128, 128),
                rng: np.random.Generator | None = None,
                dtype=np.float64) -> NetworkParams:
    """Fresh network: uniform +-sqrt(6/(fan_in+fan_out)) weights, zero biases."""
    if rng is None:
        rng = np.random.default_rng()
    if len(hidden_sizes) != 3:
        raise ValueError(f"expected 3 hidden layer sizes, got {hidden_sizes!r}")

    def dense(fan_in, fan_out):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)
        return LayerParams(w, np.zeros(fan_out, dtype=dtype))

    widths = [2 * n_features, *hidden_sizes]
    hidden = [dense(widths[i], widths[i + 1]) for i in range(3)]
    return NetworkParams(
        hidden=hidden,
        value=dense(hidden_sizes[-1], 1),
        advantage=dense(hidden_sizes[-1], n_actions),
    )


def dueling_combine(value: Array, advantage: Array) -> Array:
    """Q = V + A - mean_a A, broadcast over the batch."""
    return value + advantage - advantage.mean(axis=1, keepdims=True)


def _check_input(params: NetworkParams, x: Array) -> None:
    if x.ndim != 2 or x.shape[1] != params.n_inputs:
        raise ValueError(
            f"observation batch has shape {x.shape}, expected (batch, {params.n_inputs})"
        )


def forward_cached(params: NetworkParams, x: Array):
    """Forward pass returning Q-values plus the hidden activations needed for backprop."""
    _check_input(params, x)
    h1 = np.maximum(x @ params.hidden[0].weight + params.hidden[0].bias, 0.0)
    h2 = np.maximum(h1 @ params.hidden[1].weight + params.hidden[1].bias, 0.0)
    h3 = np.maximum(h2 @ params.hidden[2].weight + params.hidden[2].bias, 0.0)
    v = h3 @ params.value.weight + params.value.bias
    a = h3 @ params.advantage.weight + params.advantage.bias
    q = dueling_combine(v, a)
    return q, (h1, h2, h3, v, a)


def forward(params: NetworkParams, x: Array) -> Array:
    """Q-values for a batch of observations, jointly for all actions."""
    q, _ = forward_cached(params, x)
    return q


def forward_components(params: NetworkParams, x: Array):
    """(Q, V, A) for a batch; V has shape (batch, 1), A has shape (batch, actions)."""
    q, (_, _, _, v, a) = forward_cached(params, x)
    return q, v, a


def backward_from_output_grad(params: NetworkParams, x: Array, cache, d_q: Array) -> GradientSet:
    """Backpropagate an upstream gradient on the Q outputs down to every parameter.

    The dueling combination routes gradient into both heads: the value head
    receives the per-row sum of d_q, the advantage head receives d_q minus its
    per-row mean.
    """
    h1, h2, h3, _, _ = cache
    d_v = d_q.sum(axis=1, keepdims=True)
    d_a = d_q - d_q.mean(axis=1, keepdims=True)

    g_vw = h3.T @ d_v
    g_vb = d_v.sum(axis=0)
    g_aw = h3.T @ d_a
    g_ab = d_a.sum(axis=0)

    d_h3 = d_v @ params.value.weight.T + d_a @ params.advantage.weight.T
    d_z3 = d_h3 * (h3 > 0)
    g_w3 = h2.T @ d_z3
    g_b3 = d_z3.sum(axis=0)

    d_h2 = d_z3 @ params.hidden[2].weight.T
    d_z2 = d_h2 * (h2 > 0)
    g_w2 = h1.T @ d_z2
    g_b2 = d_z2.sum(axis=0)

    d_h1 = d_z2 @ params.hidden[1].weight.T
    d_z1 = d_h1 * (h1 > 0)
    g_w1 = x.T @ d_z1
    g_b1 = d_z1.sum(axis=0)

    return GradientSet([g_w1, g_b1, g_w2, g_b2, g_w3, g_b3, g_vw, g_vb, g_aw, g_ab])


def loss_and_gradients(params: NetworkParams, x: Array, action_indices: Array,
                       targets: Array) -> tuple[float, GradientSet]:
    """Mean squared error between targets and Q(s, a) plus its gradient.

    Targets are treated as constants; gradient flows only through the selected
    actions' output paths. The loss is normalized by the batch size so the
    learning rate is batch-size invariant.
    """
    targets = np.asarray(targets, dtype=params.dtype)
    if not np.all(np.isfinite(targets)):
        raise ValueError("non-finite target in batch")
    action_indices = np.asarray(action_indices)
    q, cache = forward_cached(params, x)
    batch = x.shape[0]
    rows = np.arange(batch)
    diff = q[rows, action_indices] - targets
    loss = float(np.mean(diff * diff))

    d_q = np.zeros_like(q)
    d_q[rows, action_indices] = 2.0 * diff / batch
    grads = backward_from_output_grad(params, x, cache, d_q)
    return loss, grads


def backward(params: NetworkParams, x: Array, action_indices: Array,
             targets: Array) -> GradientSet:
    """Gradient of the batch MSE loss; see ``loss_and_gradients``."""
    _, grads = loss_and_gradients(params, x, action_indices, targets)
    return grads


def clip_gradient_norm(grads: GradientSet, max_norm: float = 1.0) -> GradientSet:
    """Scale the whole gradient down when its global L2 norm exceeds ``max_norm``."""
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    norm = grads.global_norm()
    if norm > max_norm:
        scale = max_norm / norm
        for b in grads.blocks:
            b *= scale
    return grads


def adam_step(params: NetworkParams, adam: AdamState, grads: GradientSet,
              lr: float) -> None:
    """One Adam update, in place on ``params`` and ``adam``."""
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    for name, g in zip(BLOCK_NAMES, grads.blocks):
        if not np.all(np.isfinite(g)):
            raise TrainingDiverged(f"non-finite gradient in block {name}")
    adam.step_count += 1
    t = adam.step_count
    bias1 = 1.0 - adam.beta1 ** t
    bias2 = 1.0 - adam.beta2 ** t
    for name, p, m, v, g in zip(BLOCK_NAMES, params.blocks(),
                                adam.first_moment, adam.second_moment, grads.blocks):
        m *= adam.beta1
        m += (1.0 - adam.beta1) * g
        v *= adam.beta2
        v += (1.0 - adam.beta2) * (g * g)
        update = lr * (m / bias1) / (np.sqrt(v / bias2) + adam.eps_hat)
        if not np.all(np.isfinite(update)):
            raise TrainingDiverged(
                f"non-finite Adam update in block {name} at step {t} (lr={lr})"
            )
        p -= update


def soft_update(target: NetworkParams, online: NetworkParams, rho: float) -> None:
    """Move the target copy towards the online parameters: phi := (1-rho)*phi + rho*theta."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    for t, o in zip(target.blocks(), online.blocks()):
        if t.shape != o.shape:
            raise ValueError("target and online parameters are not shape-congruent")
        t[...] = (1.0 - rho) * t + rho * o
