"""Action selection and Q-learning target computation.

Behavior is epsilon-greedy over the online network; the stochastic target
policy used by the multi-step correction is eta-greedy over the same network.
Targets come in three flavours: a plain one-step bootstrap from the target
network, the double estimator (argmax under the online network, value under
the target copy) and the full multi-step recursion with truncated importance
weights. All targets respect action legality and are optionally clipped at
zero, since every reward in this problem is non-positive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .replay import Episode, Transition

Array = np.ndarray

ONE_STEP = "one_step"
DOUBLE_Q = "double_q"
RETRACE = "retrace"
TARGET_MODES = (ONE_STEP, DOUBLE_Q, RETRACE)


@dataclass
class LinearSchedule:
    """Linear decay from start to end over a fixed number of steps, then flat."""

    start: float
    end: float
    steps: int

    def value(self, t: int) -> float:
        if self.steps <= 0 or t >= self.steps:
            return self.end
        frac = t / self.steps
        return self.start + (self.end - self.start) * frac


@dataclass
class PolicyConfig:
    """Exploration (epsilon) and target-policy (eta) schedules."""

    epsilon: LinearSchedule
    eta: LinearSchedule


@dataclass
class TargetConfig:
    gamma: float = 1.0
    trace_coefficient: float = 1.0  # multiplies the truncated importance weight
    clip_targets_at_zero: bool = True
    mode: str = DOUBLE_Q

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if not 0.0 <= self.trace_coefficient <= 1.0:
            raise ValueError("trace coefficient must lie in [0, 1]")
        if self.mode not in TARGET_MODES:
            raise ValueError(f"unknown target mode {self.mode!r}")


def masked_argmax(q_values: Array, legal_mask: Array) -> int:
    """Greedy legal action; ties break towards the lowest action index."""
    if not legal_mask.any():
        raise ValueError("no legal action available")
    masked = np.where(legal_mask, q_values, -np.inf)
    return int(np.argmax(masked))


def select_action(q_values: Array, legal_mask: Array, epsilon: float,
                  rng: np.random.Generator) -> int:
    """Epsilon-greedy draw: uniform over legal actions with probability epsilon,
    otherwise the greedy legal action."""
    if not legal_mask.any():
        raise ValueError("no legal action available")
    if epsilon > 0 and rng.random() < epsilon:
        legal = np.flatnonzero(legal_mask)
        return int(legal[rng.integers(len(legal))])
    return masked_argmax(q_values, legal_mask)


def eta_greedy_probs(q_values: Array, legal_mask: Array, eta: float) -> Array:
    """Probability vector of the eta-greedy policy.

    The greedy legal action gets 1 - eta + eta/L, every other legal action
    eta/L, illegal actions 0 (L = number of legal actions). The same formula
    describes the epsilon-greedy behavior policy, so this also supplies the
    recorded behavior probabilities.
    """
    greedy = masked_argmax(q_values, legal_mask)
    n_legal = int(legal_mask.sum())
    probs = np.where(legal_mask, eta / n_legal, 0.0)
    probs[greedy] += 1.0 - eta
    return probs


def eta_greedy_prob_matrix(q_values: Array, legal_mask: Array, eta: float) -> Array:
    """Row-wise ``eta_greedy_probs`` for a batch."""
    masked = np.where(legal_mask, q_values, -np.inf)
    greedy = masked.argmax(axis=1)
    n_legal = legal_mask.sum(axis=1)
    probs = np.where(legal_mask, eta / n_legal[:, None], 0.0)
    probs[np.arange(len(greedy)), greedy] += 1.0 - eta
    return probs


def _stack_inputs(observations) -> Array:
    return np.stack([o.network_input() for o in observations])


def one_step_targets(transitions: list[Transition], theta: nn.NetworkParams,
                     phi: nn.NetworkParams, cfg: TargetConfig) -> Array:
    """Bootstrap targets for a batch of transitions (one_step or double_q mode)."""
    targets = np.empty(len(transitions))
    live = [i for i, tr in enumerate(transitions) if not tr.terminal]
    if live:
        next_inputs = _stack_inputs([transitions[i].next_observation for i in live])
        q_phi = nn.forward(phi, next_inputs)
        if cfg.mode == ONE_STEP:
            q_select = q_phi
        else:
            q_select = nn.forward(theta, next_inputs)
        for row, i in enumerate(live):
            legal = transitions[i].legal_next_actions
            best = masked_argmax(q_select[row], legal)
            targets[i] = transitions[i].reward + cfg.gamma * q_phi[row, best]
    for i, tr in enumerate(transitions):
        if tr.terminal:
            targets[i] = tr.reward
    if cfg.clip_targets_at_zero:
        np.minimum(targets, 0.0, out=targets)
    return targets


def one_step_target(transition: Transition, theta: nn.NetworkParams,
                    phi: nn.NetworkParams, cfg: TargetConfig) -> float:
    """Target for a single transition; see ``one_step_targets``."""
    return float(one_step_targets([transition], theta, phi, cfg)[0])


def retrace_targets_tabular(rewards: Array, next_actions: Array,
                            next_behavior_probs: Array, next_q_target: Array,
                            next_policy_probs: Array, gamma: float,
                            trace_coefficient: float, clip_at_zero: bool) -> Array:
    """Multi-step targets from tabular inputs, via the backward O(T) recursion.

    For an episode of length T the inputs describe states s_1 .. s_{T-1} (the
    successors of the non-terminal steps): row t holds Q-target values, target
    policy probabilities, the taken action and its recorded behavior
    probability at s_{t+1}. The terminal successor contributes zero by the
    boundary convention Q(terminal, .) = 0, so the last target is its reward.

        q_t = r_t + gamma * E_{a~pi}[Q(s_{t+1}, a)]
                  + gamma * c * min(pi(a_{t+1}|s_{t+1}) / mu_{t+1}, 1)
                          * (q_{t+1} - Q(s_{t+1}, a_{t+1}))

    When clipping is on, each q_t is clamped to at most zero right after its
    recursion step, so later (earlier-in-time) targets see the clipped value.
    """
    length = len(rewards)
    targets = np.empty(length)
    targets[-1] = rewards[-1]
    if clip_at_zero:
        targets[-1] = min(targets[-1], 0.0)
    if length == 1:
        return targets

    next_behavior_probs = np.asarray(next_behavior_probs, dtype=float)
    if np.any(next_behavior_probs <= 0.0):
        raise ValueError("recorded behavior probability must be positive")
    taken = np.arange(length - 1), np.asarray(next_actions)
    rho = np.minimum(next_policy_probs[taken] / next_behavior_probs, 1.0)
    weights = trace_coefficient * rho
    expected = np.sum(next_policy_probs * next_q_target, axis=1)
    q_taken = next_q_target[taken]

    for t in range(length - 2, -1, -1):
        q_t = rewards[t] + gamma * expected[t] + gamma * weights[t] * (targets[t + 1] - q_taken[t])
        targets[t] = min(q_t, 0.0) if clip_at_zero else q_t
    return targets


def retrace_targets(episode: Episode, theta: nn.NetworkParams,
                    phi: nn.NetworkParams, cfg: TargetConfig,
                    eta: float = 0.0) -> Array:
    """Multi-step targets for one stored episode.

    The target policy is eta-greedy over the online network, restricted to the
    legal actions of each successor state; behavior probabilities were recorded
    when the episode was generated.
    """
    rewards = np.array([tr.reward for tr in episode])
    if len(episode) == 1:
        return retrace_targets_tabular(
            rewards, np.empty(0, dtype=int), np.empty(0), np.empty((0, theta.n_actions)),
            np.empty((0, theta.n_actions)), cfg.gamma, cfg.trace_coefficient,
            cfg.clip_targets_at_zero)

    next_inputs = _stack_inputs([tr.observation for tr in episode[1:]])
    legal = np.stack([tr.legal_next_actions for tr in episode[:-1]])
    q_phi = nn.forward(phi, next_inputs)
    q_theta = nn.forward(theta, next_inputs)
    policy = eta_greedy_prob_matrix(q_theta, legal, eta)
    next_actions = np.array([tr.action for tr in episode[1:]])
    behavior = np.array([tr.behavior_prob for tr in episode[1:]])
    return retrace_targets_tabular(
        rewards, next_actions, behavior, q_phi, policy,
        cfg.gamma, cfg.trace_coefficient, cfg.clip_targets_at_zero)


def batch_loss(batch, theta: nn.NetworkParams, phi: nn.NetworkParams,
               cfg: TargetConfig, eta: float = 0.0) -> tuple[float, nn.GradientSet]:
    """Loss and gradient for one sampled batch.

    In retrace mode the batch is a list of episodes and every step of every
    episode contributes one squared error; otherwise it is a list of
    transitions with bootstrap targets. Targets are constants with respect to
    the differentiation.
    """
    if cfg.mode == RETRACE:
        episodes: list[Episode] = batch
        transitions = [tr for ep in episodes for tr in ep]
        targets = np.concatenate(
            [retrace_targets(ep, theta, phi, cfg, eta) for ep in episodes])
    else:
        transitions = list(batch)
        targets = one_step_targets(transitions, theta, phi, cfg)

    inputs = _stack_inputs([tr.observation for tr in transitions])
    actions = np.array([tr.action for tr in transitions])
    return nn.loss_and_gradients(theta, inputs, actions, targets)
