"""Episodic environment where an agent buys features and finally classifies.

Each episode handles one sample. The hidden state is the full feature vector,
the label and the set of features bought so far; the agent only observes the
masked feature values alongside the acquisition mask. Feature purchases cost
``lambda * cost`` reward, classification ends the episode with reward 0 when
correct and -1 (configurable per class pair) otherwise. An optional terminal
action forwards the sample to an external high-performance classifier for the
summed cost of all features not yet bought.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, IllegalActionError

Array = np.ndarray


@dataclass
class ActionSpace:
    """Fixed action layout: classification actions first, then one action per
    feature, then (optionally) the external-classifier query last."""

    n_classes: int
    n_features: int
    has_hpc: bool = False

    @property
    def n_actions(self) -> int:
        return self.n_classes + self.n_features + (1 if self.has_hpc else 0)

    @property
    def hpc_action(self) -> int:
        if not self.has_hpc:
            raise IllegalActionError("no external classifier is configured")
        return self.n_classes + self.n_features

    def classify(self, class_index: int) -> int:
        return class_index

    def feature(self, feature_index: int) -> int:
        return self.n_classes + feature_index

    def is_classify(self, action: int) -> bool:
        return 0 <= action < self.n_classes

    def is_feature(self, action: int) -> bool:
        return self.n_classes <= action < self.n_classes + self.n_features

    def is_hpc(self, action: int) -> bool:
        return self.has_hpc and action == self.n_classes + self.n_features

    def feature_of(self, action: int) -> int:
        return action - self.n_classes


@dataclass
class Observation:
    """What the agent sees: masked feature values and the acquisition mask."""

    x_bar: Array
    m: Array

    def network_input(self) -> Array:
        return np.concatenate((self.x_bar, self.m))


@dataclass
class EnvState:
    """Hidden episode state; the label never leaks into observations."""

    sample_index: int
    x: Array
    y: int
    acquired: Array  # boolean, one flag per feature


@dataclass
class StepInfo:
    was_classification: bool
    was_correct: bool | None
    features_used: int
    hpc_used: bool


@dataclass
class StepResult:
    reward: float
    next_observation: Observation | None  # None marks the terminal state
    episode_done: bool
    info: StepInfo


def default_misclassification_rewards(n_classes: int) -> Array:
    """Reward matrix indexed [predicted, true]: 0 on the diagonal, -1 elsewhere."""
    r = np.full((n_classes, n_classes), -1.0)
    np.fill_diagonal(r, 0.0)
    return r


class Environment:
    """One sample-classification episode process over a fixed data split.

    ``reset()`` without an index draws uniformly from the split (training
    regime); evaluation passes explicit indices to visit each sample once.
    Illegal actions raise instead of being absorbed: legality masking is the
    agent's job and silent acceptance would hide agent bugs.
    """

    def __init__(self, features: Array, labels: Array, costs: Array, lam: float,
                 rng: np.random.Generator | None = None,
                 hpc_predictions: Array | None = None,
                 misclassification_rewards: Array | None = None):
        if len(features) == 0:
            raise ConfigError("environment needs a non-empty data split")
        if not 0.0 <= lam <= 1.0:
            raise ConfigError(f"lambda must lie in [0, 1], got {lam}")
        costs = np.asarray(costs, dtype=float)
        if costs.shape != (features.shape[1],) or np.any(costs < 0):
            raise ConfigError("costs must be one non-negative value per feature")

        self.features = features
        self.labels = np.asarray(labels)
        self.costs = costs
        self.lam = float(lam)
        self.rng = rng
        self.hpc_predictions = hpc_predictions
        n_classes = int(self.labels.max()) + 1
        self.actions = ActionSpace(
            n_classes=n_classes,
            n_features=features.shape[1],
            has_hpc=hpc_predictions is not None,
        )
        if misclassification_rewards is None:
            misclassification_rewards = default_misclassification_rewards(n_classes)
        misclassification_rewards = np.asarray(misclassification_rewards, dtype=float)
        if misclassification_rewards.shape != (n_classes, n_classes):
            raise ConfigError("misclassification reward matrix must be classes x classes")
        if np.any(misclassification_rewards > 0) or np.any(np.diag(misclassification_rewards) != 0):
            raise ConfigError(
                "misclassification rewards must be non-positive with a zero diagonal"
            )
        self.misclassification_rewards = misclassification_rewards

        self.state: EnvState | None = None
        self._done = True

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def reset(self, sample_index: int | None = None) -> Observation:
        """Start a new episode with no disclosed features."""
        if sample_index is None:
            if self.rng is None:
                raise ConfigError("random reset needs an rng; pass sample_index instead")
            sample_index = int(self.rng.integers(len(self.features)))
        x = self.features[sample_index]
        self.state = EnvState(
            sample_index=sample_index,
            x=x,
            y=int(self.labels[sample_index]),
            acquired=np.zeros(self.n_features, dtype=bool),
        )
        self._done = False
        return self.observation()

    def observation(self) -> Observation:
        """Current masked view: zeros where a feature is still unknown."""
        acquired = self.state.acquired
        mask = acquired.astype(self.features.dtype)
        return Observation(x_bar=self.state.x * mask, m=mask)

    def legal_actions(self) -> Array:
        """Boolean mask over the full action space: every class, each feature
        not yet bought, and the external query when configured."""
        if self._done or self.state is None:
            raise IllegalActionError("episode is not active; call reset() first")
        legal = np.ones(self.actions.n_actions, dtype=bool)
        offset = self.actions.n_classes
        legal[offset:offset + self.n_features] = ~self.state.acquired
        return legal

    def step(self, action: int) -> StepResult:
        if self._done or self.state is None:
            raise IllegalActionError("episode is over; call reset() first")
        acts = self.actions
        state = self.state
        if not 0 <= action < acts.n_actions:
            raise IllegalActionError(f"action {action} outside the action space")

        if acts.is_classify(action):
            reward = float(self.misclassification_rewards[action, state.y])
            self._done = True
            return StepResult(
                reward=reward,
                next_observation=None,
                episode_done=True,
                info=StepInfo(
                    was_classification=True,
                    was_correct=action == state.y,
                    features_used=int(state.acquired.sum()),
                    hpc_used=False,
                ),
            )

        if acts.is_hpc(action):
            remaining = self.costs[~state.acquired].sum()
            predicted = int(self.hpc_predictions[state.sample_index])
            reward = -self.lam * float(remaining)
            reward += float(self.misclassification_rewards[predicted, state.y])
            self._done = True
            return StepResult(
                reward=reward,
                next_observation=None,
                episode_done=True,
                info=StepInfo(
                    was_classification=False,
                    was_correct=predicted == state.y,
                    features_used=int(state.acquired.sum()),
                    hpc_used=True,
                ),
            )

        feature = acts.feature_of(action)
        if state.acquired[feature]:
            raise IllegalActionError(f"feature {feature} was already acquired")
        state.acquired[feature] = True
        return StepResult(
            reward=-self.lam * float(self.costs[feature]),
            next_observation=self.observation(),
            episode_done=False,
            info=StepInfo(
                was_classification=False,
                was_correct=None,
                features_used=int(state.acquired.sum()),
                hpc_used=False,
            ),
        )
