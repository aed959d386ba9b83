"""Training harness: parallel-environment loop, schedules, learning-rate
adaptation, early stopping, evaluation, lambda sweeps and run reports.

One training step means: every environment in the pool advances once under the
epsilon-greedy behavior policy, then exactly one gradient update and one soft
target update are applied. Epochs are a fixed number of training steps and
drive the schedule bookkeeping (learning-rate decay on training reward,
early stopping on validation reward).
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, asdict, replace
from pathlib import Path

import numpy as np

from . import agent, nn
from .agent import LinearSchedule, TargetConfig
from .checkpoint import save_checkpoint
from .config import Hyperparameters
from .data import Dataset
from .env import Environment, default_misclassification_rewards
from .errors import CostqError, TrainingDiverged
from .pretrain import PretrainConfig, pretrain_classifier_head
from .replay import ReplayBuffer, Transition

log = logging.getLogger(__name__)

Array = np.ndarray

POINT_COLUMNS = ("lambda", "seed", "split", "mean_cost", "accuracy",
                 "mean_reward", "objective")


@dataclass
class TradeoffPoint:
    """One (cost, accuracy) outcome of a trained model on one split.

    ``mean_cost`` is the raw expected summed feature cost per sample (an
    external-classifier query counts all remaining features); the objective is
    the 0/1 error plus lambda times that cost.
    """

    lam: float
    seed: int
    split: str
    mean_cost: float
    accuracy: float
    mean_reward: float
    objective: float
    run_id: str = ""


@dataclass
class EvalStats:
    """Full evaluation detail behind a trade-off point."""

    accuracy: float
    mean_cost: float
    mean_reward: float
    objective: float
    feature_usage_histogram: list[int]
    hpc_fraction: float
    n_samples: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunReport:
    """Machine-readable record of one training run (one JSON document)."""

    run_id: str
    seed: int
    lam: float
    config: dict
    class_labels: list[str]
    feature_names: list[str]
    costs: list[float]
    pretrain_round_losses: list[float]
    epochs: list[dict]
    final_validation: dict
    checkpoint_path: str | None
    stopped_early: bool
    total_steps: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        return cls(**json.loads(text))


def adapt_learning_rate(history: list[float], lr: float, scale: float = 0.3,
                        lr_min: float = 1e-7) -> float:
    """Drop the learning rate when the latest epoch reward fails to beat the
    best earlier epoch; floor at ``lr_min``."""
    if len(history) < 2:
        return lr
    prev = [r for r in history[:-1] if not math.isnan(r)]
    best_prev = max(prev) if prev else -math.inf
    latest = history[-1]
    if math.isnan(latest) or latest <= best_prev:
        return max(lr * scale, lr_min)
    return lr


def early_stop(validation_history: list[float], patience: int = 3) -> bool:
    """True after ``patience`` consecutive epochs without a new best reward."""
    best = -math.inf
    streak = 0
    for r in validation_history:
        if r > best:
            best = r
            streak = 0
        else:
            streak += 1
    return streak >= patience


def greedy_policy(theta: nn.NetworkParams):
    """Batch policy choosing the greedy legal action (ties to lowest index)."""

    def policy(obs_batch: Array, legal_batch: Array) -> Array:
        q = nn.forward(theta, obs_batch)
        return np.where(legal_batch, q, -np.inf).argmax(axis=1)

    return policy


def evaluate_policy(features: Array, labels: Array, costs: Array, lam: float,
                    policy, hpc_predictions: Array | None = None,
                    misclassification_rewards: Array | None = None,
                    dtype=np.float64, chunk: int = 512) -> EvalStats:
    """Run ``policy`` once over every sample of a split and aggregate.

    The policy maps a batch of observations plus legality masks to one action
    per row. Episodes are advanced in lock-step waves so the policy sees large
    batches. Deterministic for a deterministic policy.
    """
    n_samples, n_features = features.shape
    total_cost = float(costs.sum())
    correct = np.zeros(n_samples, dtype=bool)
    cost_used = np.zeros(n_samples)
    reward_sum = np.zeros(n_samples)
    n_used = np.zeros(n_samples, dtype=np.int64)
    hpc_used = np.zeros(n_samples, dtype=bool)

    pool = [Environment(features, labels, costs, lam,
                        hpc_predictions=hpc_predictions,
                        misclassification_rewards=misclassification_rewards)
            for _ in range(min(chunk, n_samples))]
    n_actions = pool[0].actions.n_actions

    for start in range(0, n_samples, len(pool)):
        indices = list(range(start, min(start + len(pool), n_samples)))
        active = []
        for slot, sample in enumerate(indices):
            obs = pool[slot].reset(sample)
            active.append((slot, sample, obs))
        while active:
            obs_mat = np.empty((len(active), 2 * n_features), dtype=dtype)
            legal_mat = np.empty((len(active), n_actions), dtype=bool)
            for row, (slot, _, obs) in enumerate(active):
                obs_mat[row, :n_features] = obs.x_bar
                obs_mat[row, n_features:] = obs.m
                legal_mat[row] = pool[slot].legal_actions()
            actions = policy(obs_mat, legal_mat)
            still = []
            for row, (slot, sample, _) in enumerate(active):
                env = pool[slot]
                action = int(actions[row])
                result = env.step(action)
                reward_sum[sample] += result.reward
                if env.actions.is_feature(action):
                    cost_used[sample] += costs[env.actions.feature_of(action)]
                if result.episode_done:
                    info = result.info
                    correct[sample] = bool(info.was_correct)
                    n_used[sample] = info.features_used
                    hpc_used[sample] = info.hpc_used
                    if info.hpc_used:
                        cost_used[sample] = total_cost
                else:
                    still.append((slot, sample, result.next_observation))
            active = still

    accuracy = float(correct.mean())
    mean_cost = float(cost_used.mean())
    return EvalStats(
        accuracy=accuracy,
        mean_cost=mean_cost,
        mean_reward=float(reward_sum.mean()),
        objective=(1.0 - accuracy) + lam * mean_cost,
        feature_usage_histogram=np.bincount(n_used, minlength=n_features + 1).tolist(),
        hpc_fraction=float(hpc_used.mean()),
        n_samples=n_samples,
    )


def evaluate_params(theta: nn.NetworkParams, features: Array, labels: Array,
                    costs: Array, lam: float, hpc_predictions: Array | None = None,
                    misclassification_rewards: Array | None = None,
                    chunk: int = 512) -> EvalStats:
    """Greedy evaluation of a parameter set over one split."""
    return evaluate_policy(features, labels, costs, lam, greedy_policy(theta),
                           hpc_predictions=hpc_predictions,
                           misclassification_rewards=misclassification_rewards,
                           dtype=theta.dtype, chunk=chunk)


def tradeoff_point(stats: EvalStats, lam: float, seed: int, split: str,
                   run_id: str = "") -> TradeoffPoint:
    return TradeoffPoint(lam=lam, seed=seed, split=split,
                         mean_cost=stats.mean_cost, accuracy=stats.accuracy,
                         mean_reward=stats.mean_reward, objective=stats.objective,
                         run_id=run_id)


class Trainer:
    """Owns the mutable training state of one run; ``train()`` drives it."""

    def __init__(self, dataset: Dataset, splits: dict[str, Array], costs: Array,
                 hp: Hyperparameters, hpc_predictions: Array | None = None,
                 initial_params: nn.NetworkParams | None = None):
        hp.validate()
        if not dataset.normalized:
            log.warning("training on an un-normalized dataset")
        self.hp = hp
        self.seed = hp.resolved_seed()
        self.dtype = np.float64 if hp.precision == "double" else np.float32
        self.dataset = dataset
        self.costs = np.asarray(costs, dtype=np.float64)

        streams = np.random.SeedSequence(self.seed).spawn(4)
        self.init_rng = np.random.default_rng(streams[0])
        self.pretrain_rng = np.random.default_rng(streams[1])
        self.env_rng = np.random.default_rng(streams[2])
        self.buffer_rng = np.random.default_rng(streams[3])

        self.train_x = dataset.features[splits["train"]].astype(self.dtype)
        self.train_y = dataset.labels[splits["train"]]
        self.val_x = dataset.features[splits["validation"]].astype(self.dtype)
        self.val_y = dataset.labels[splits["validation"]]
        self.hpc_train = (hpc_predictions[splits["train"]]
                          if hpc_predictions is not None else None)
        self.hpc_val = (hpc_predictions[splits["validation"]]
                        if hpc_predictions is not None else None)

        n_classes = dataset.n_classes
        self.misclass = default_misclassification_rewards(n_classes)
        self.misclass[self.misclass < 0] = hp.misclassification_reward
        n_actions = n_classes + dataset.n_features + (1 if hpc_predictions is not None else 0)

        if initial_params is not None:
            self.theta = initial_params.copy()
        else:
            self.theta = nn.init_params(dataset.n_features, n_actions,
                                        hp.hidden_sizes, self.init_rng, self.dtype)
        self.pretrain_round_losses: list[float] = []
        if hp.pretrain:
            states = hp.pretrain_states
            if states is None:
                states = 100 * len(self.train_x)
            pcfg = PretrainConfig(state_count=states, learning_rate=hp.lr_pretrain,
                                  batch_size=hp.pretrain_batch,
                                  lr_scale=hp.lr_scale, lr_min=hp.lr_min)
            self.pretrain_round_losses = pretrain_classifier_head(
                self.theta, self.train_x, self.train_y, n_classes, pcfg,
                self.pretrain_rng, hp.max_grad_norm)
        # target copy synced once, after any pretraining
        self.phi = self.theta.copy()
        self.adam = nn.AdamState.for_params(self.theta)

        self.buffer = ReplayBuffer(hp.memory_episodes, self.buffer_rng)
        self.envs = [Environment(self.train_x, self.train_y, self.costs, hp.lam,
                                 rng=self.env_rng, hpc_predictions=self.hpc_train,
                                 misclassification_rewards=self.misclass)
                     for _ in range(hp.env_count)]
        self.current = [e.reset() for e in self.envs]
        self.partials: list[list[Transition]] = [[] for _ in self.envs]
        self.partial_rewards = [0.0 for _ in self.envs]

        self.target_cfg = TargetConfig(gamma=hp.gamma,
                                       trace_coefficient=hp.retrace_lambda,
                                       clip_targets_at_zero=hp.clip_targets,
                                       mode=hp.target_mode)
        self.epsilon = LinearSchedule(hp.epsilon_start, hp.epsilon_end,
                                      hp.resolved_epsilon_steps())
        self.eta = LinearSchedule(hp.eta_start, hp.eta_end, hp.resolved_eta_steps())
        self.lr = hp.lr_start
        self.step_count = 0

    def _pool_step(self, epsilon: float) -> list[float]:
        """Advance every environment once; returns rewards of episodes that finished."""
        n = self.dataset.n_features
        obs_mat = np.empty((len(self.envs), 2 * n), dtype=self.dtype)
        for i, obs in enumerate(self.current):
            obs_mat[i, :n] = obs.x_bar
            obs_mat[i, n:] = obs.m
        q = nn.forward(self.theta, obs_mat)

        finished = []
        for i, env in enumerate(self.envs):
            legal = env.legal_actions()
            action = agent.select_action(q[i], legal, epsilon, self.env_rng)
            mu = float(agent.eta_greedy_probs(q[i], legal, epsilon)[action])
            result = env.step(action)
            legal_next = None if result.episode_done else env.legal_actions()
            self.partials[i].append(Transition(
                observation=self.current[i], action=action, reward=result.reward,
                next_observation=result.next_observation, behavior_prob=mu,
                legal_next_actions=legal_next))
            self.partial_rewards[i] += result.reward
            if result.episode_done:
                self.buffer.push_episode(self.partials[i])
                finished.append(self.partial_rewards[i])
                self.partials[i] = []
                self.partial_rewards[i] = 0.0
                self.current[i] = env.reset()
            else:
                self.current[i] = result.next_observation
        return finished

    def prefill(self) -> None:
        """Fill the buffer with random-agent experience before any update."""
        budget = self.hp.resolved_prefill()
        while self.buffer.total_steps < budget:
            self._pool_step(1.0)

    def update(self) -> float:
        """One gradient step plus one soft target update; returns the loss."""
        hp = self.hp
        if self.target_cfg.mode == agent.RETRACE:
            batch = self.buffer.sample_episodes(hp.batch_step_budget)
        else:
            batch = self.buffer.sample_transitions(hp.batch_step_budget)
        eta_now = self.eta.value(self.step_count)
        try:
            loss, grads = agent.batch_loss(batch, self.theta, self.phi,
                                           self.target_cfg, eta_now)
        except ValueError as exc:
            # non-finite targets mean the network blew up, not bad input data
            raise TrainingDiverged(
                f"target computation failed at step {self.step_count}: {exc}") from exc
        if not math.isfinite(loss):
            raise TrainingDiverged(f"loss became non-finite at step {self.step_count}")
        nn.clip_gradient_norm(grads, hp.max_grad_norm)
        nn.adam_step(self.theta, self.adam, grads, self.lr)
        nn.soft_update(self.phi, self.theta, hp.rho)
        self.step_count += 1
        return loss

    def validation_stats(self) -> EvalStats:
        return evaluate_params(self.theta, self.val_x, self.val_y, self.costs,
                               self.hp.lam, hpc_predictions=self.hpc_val,
                               misclassification_rewards=self.misclass)


def train(dataset: Dataset, splits: dict[str, Array], costs: Array,
          hp: Hyperparameters, hpc_predictions: Array | None = None,
          out_dir=None, initial_params: nn.NetworkParams | None = None,
          run_id: str | None = None) -> tuple[RunReport, nn.NetworkParams]:
    """Full training run; returns the report and the final online parameters.

    When ``out_dir`` is given, the checkpoint and the JSON report are written
    there. On divergence the last consistent parameters are checkpointed before
    the error propagates.
    """
    trainer = Trainer(dataset, splits, costs, hp,
                      hpc_predictions=hpc_predictions, initial_params=initial_params)
    hp = trainer.hp
    if run_id is None:
        run_id = f"lam{hp.lam:g}_seed{trainer.seed}"
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)

    trainer.prefill()

    epochs: list[dict] = []
    train_history: list[float] = []
    val_history: list[float] = []

    def record_epoch(epoch: int, train_reward: float | None, stats: EvalStats):
        epochs.append({
            "epoch": epoch,
            "train_reward": train_reward,
            "validation_reward": stats.mean_reward,
            "validation_accuracy": stats.accuracy,
            "validation_cost": stats.mean_cost,
            "learning_rate": trainer.lr,
            "epsilon": trainer.epsilon.value(trainer.step_count),
            "eta": trainer.eta.value(trainer.step_count),
        })

    stats = trainer.validation_stats()  # epoch 0: before any gradient update
    val_history.append(stats.mean_reward)
    record_epoch(0, None, stats)

    stopped_early = False
    diverged: TrainingDiverged | None = None
    try:
        for epoch in range(1, hp.max_epochs + 1):
            finished: list[float] = []
            for _ in range(hp.epoch_length):
                finished.extend(trainer._pool_step(
                    trainer.epsilon.value(trainer.step_count)))
                trainer.update()
            train_reward = float(np.mean(finished)) if finished else math.nan
            train_history.append(train_reward)
            trainer.lr = adapt_learning_rate(train_history, trainer.lr,
                                             hp.lr_scale, hp.lr_min)
            stats = trainer.validation_stats()
            val_history.append(stats.mean_reward)
            record_epoch(epoch, train_reward, stats)
            log.info("%s epoch %d: train %.4f val %.4f acc %.4f cost %.3f lr %.2e",
                     run_id, epoch, train_reward, stats.mean_reward,
                     stats.accuracy, stats.mean_cost, trainer.lr)
            if early_stop(val_history):
                stopped_early = True
                break
    except TrainingDiverged as exc:
        diverged = exc

    checkpoint_path = None
    if out_dir is not None:
        # recorded relative to the report so the report is location-independent
        checkpoint_path = "checkpoint.diverged.bin" if diverged else "checkpoint.bin"
        save_checkpoint(out_dir / checkpoint_path, trainer.theta, trainer.phi,
                        trainer.adam, meta=_checkpoint_meta(trainer, hp, run_id))

    report = RunReport(
        run_id=run_id,
        seed=trainer.seed,
        lam=hp.lam,
        config=hp.to_dict(),
        class_labels=list(dataset.class_labels),
        feature_names=list(dataset.feature_names),
        costs=[float(c) for c in trainer.costs],
        pretrain_round_losses=trainer.pretrain_round_losses,
        epochs=epochs,
        final_validation=stats.to_dict(),
        checkpoint_path=checkpoint_path,
        stopped_early=stopped_early,
        total_steps=trainer.step_count,
    )
    if out_dir is not None:
        (out_dir / "report.json").write_text(report.to_json() + "\n")
    if diverged is not None:
        raise diverged
    return report, trainer.theta


def _checkpoint_meta(trainer: Trainer, hp: Hyperparameters, run_id: str) -> dict:
    dataset = trainer.dataset
    meta = {
        "run_id": run_id,
        "seed": trainer.seed,
        "lambda": repr(hp.lam),
        "target_mode": hp.target_mode,
        "class_labels": json.dumps(dataset.class_labels),
        "feature_names": json.dumps(dataset.feature_names),
        "costs": json.dumps([float(c) for c in trainer.costs]),
        "has_hpc": str(trainer.hpc_train is not None).lower(),
    }
    if dataset.normalized:
        meta["feature_means"] = json.dumps([float(v) for v in dataset.feature_means])
        meta["feature_stds"] = json.dumps([float(v) for v in dataset.feature_stds])
    return meta


def sweep(dataset: Dataset, splits: dict[str, Array], costs: Array,
          hp: Hyperparameters, lambdas: list[float], seeds: list[int],
          hpc_predictions: Array | None = None, out_dir=None
          ) -> tuple[list[TradeoffPoint], list[dict]]:
    """Train and evaluate one run per (lambda, seed); failures are recorded and
    the sweep continues. Returns validation and test points for every run."""
    unique = list(dict.fromkeys(lambdas))
    if len(unique) != len(lambdas):
        log.warning("duplicate lambda entries removed: %s", lambdas)
    if out_dir is not None:
        out_dir = Path(out_dir)

    test_x = dataset.features[splits["test"]]
    test_y = dataset.labels[splits["test"]]
    hpc_test = hpc_predictions[splits["test"]] if hpc_predictions is not None else None
    misclass = default_misclassification_rewards(dataset.n_classes)
    misclass[misclass < 0] = hp.misclassification_reward

    points: list[TradeoffPoint] = []
    failures: list[dict] = []
    for lam in unique:
        for seed in seeds:
            run_hp = replace(hp, lam=lam, seed=seed)
            run_id = f"lam{lam:g}_seed{seed}"
            run_dir = (out_dir / run_id) if out_dir is not None else None
            try:
                report, theta = train(dataset, splits, costs, run_hp,
                                      hpc_predictions=hpc_predictions,
                                      out_dir=run_dir, run_id=run_id)
            except CostqError as exc:
                log.error("run %s failed: %s", run_id, exc)
                failures.append({"run_id": run_id, "lambda": lam, "seed": seed,
                                 "error": str(exc)})
                continue
            val = report.final_validation
            points.append(TradeoffPoint(
                lam=lam, seed=seed, split="validation",
                mean_cost=val["mean_cost"], accuracy=val["accuracy"],
                mean_reward=val["mean_reward"], objective=val["objective"],
                run_id=run_id))
            test_stats = evaluate_params(
                theta, test_x.astype(theta.dtype), test_y, costs, lam,
                hpc_predictions=hpc_test, misclassification_rewards=misclass)
            points.append(tradeoff_point(test_stats, lam, seed, "test", run_id))
    if out_dir is not None:
        write_points(out_dir / "points.csv", points)
        if failures:
            (out_dir / "failures.json").write_text(json.dumps(failures, indent=2) + "\n")
    return points, failures


def write_points(path, points: list[TradeoffPoint], append: bool = False) -> None:
    """Trade-off points as delimited text, one row per point."""
    path = Path(path)
    mode = "a" if append else "w"
    write_header = not append or not path.exists() or path.stat().st_size == 0
    with open(path, mode, newline="") as fh:
        writer = csv.writer(fh)
        if write_header:
            writer.writerow(POINT_COLUMNS)
        for p in points:
            writer.writerow([repr(p.lam), p.seed, p.split, repr(p.mean_cost),
                             repr(p.accuracy), repr(p.mean_reward), repr(p.objective)])


def read_points(path) -> list[TradeoffPoint]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != POINT_COLUMNS:
            raise CostqError(f"{path}: unexpected point columns {header}")
        points = []
        for row in reader:
            lam, seed, split = float(row[0]), int(row[1]), row[2]
            points.append(TradeoffPoint(
                lam=lam, seed=seed, split=split, mean_cost=float(row[3]),
                accuracy=float(row[4]), mean_reward=float(row[5]),
                objective=float(row[6]), run_id=f"lam{lam:g}_seed{seed}"))
    return points
