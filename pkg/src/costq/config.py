"""Run configuration: an INI-style file with sections for data, network,
schedules, training and sweep, plus CLI flag overrides.

Reference values for a full-scale run (thousands of parallel environments,
50k-step batches, 40k-episode memory) are impractical on a workstation, so the
defaults here are scaled down; every knob remains configurable.
"""

from __future__ import annotations

import configparser
import secrets
from dataclasses import dataclass, field, asdict

from .agent import TARGET_MODES
from .errors import ConfigError

_SECTIONS = {
    "data": {
        "path", "label_column", "cost_mode", "cost_file", "hpc_predictions",
        "split_fractions", "split_seed", "train_index_file",
        "validation_index_file", "test_index_file",
    },
    "network": {"hidden_sizes", "precision"},
    "schedules": {
        "epsilon_start", "epsilon_end", "epsilon_steps",
        "eta_start", "eta_end", "eta_steps",
    },
    "training": {
        "lambda", "gamma", "retrace_lambda", "rho", "env_count",
        "batch_step_budget", "memory_episodes", "epoch_length", "max_epochs",
        "lr_start", "lr_min", "lr_scale", "lr_pretrain", "target_mode",
        "clip_targets", "max_grad_norm", "pretrain", "pretrain_states",
        "pretrain_batch", "seed", "prefill_steps", "misclassification_reward",
    },
    "sweep": {"lambdas", "seeds"},
}


@dataclass
class DataConfig:
    path: str | None = None
    label_column: str = "label"
    cost_mode: str = "uniform"          # uniform | random | file
    cost_file: str | None = None
    hpc_predictions: str | None = None
    split_fractions: tuple[float, float, float] = (0.6, 0.2, 0.2)
    split_seed: int = 0
    split_files: dict[str, str] | None = None

    def validate(self) -> None:
        if self.cost_mode not in ("uniform", "random", "file"):
            raise ConfigError(f"unknown cost_mode {self.cost_mode!r}")
        if self.cost_mode == "file" and not self.cost_file:
            raise ConfigError("cost_mode=file needs cost_file")
        if self.split_files is not None and set(self.split_files) != {
                "train", "validation", "test"}:
            raise ConfigError("split index files must cover train, validation and test")


@dataclass
class Hyperparameters:
    """Every knob of the training loop; see the README for the full table."""

    lam: float = 0.01
    gamma: float = 1.0
    retrace_lambda: float = 1.0         # trace coefficient of the multi-step target
    rho: float = 0.1                    # soft target-update factor
    env_count: int = 64
    batch_step_budget: int = 512
    memory_episodes: int = 5000
    epoch_length: int = 200             # training steps per epoch
    max_epochs: int = 30
    epsilon_start: float = 1.0
    epsilon_end: float = 0.1
    epsilon_steps: int | None = None    # default: 2 * epoch_length
    eta_start: float = 0.5
    eta_end: float = 0.0
    eta_steps: int | None = None        # default: epsilon_steps
    lr_start: float = 5e-4
    lr_min: float = 1e-7
    lr_scale: float = 0.3
    lr_pretrain: float = 1e-3
    hidden_sizes: tuple[int, int, int] = (128, 128, 128)
    precision: str = "double"           # double | single
    target_mode: str = "retrace"        # one_step | double_q | retrace
    clip_targets: bool = True
    max_grad_norm: float = 1.0
    pretrain: bool = False
    pretrain_states: int | None = None  # default: 100 * training-split size
    pretrain_batch: int = 128
    seed: int | None = None             # default: fresh entropy, echoed in the report
    prefill_steps: int | None = None    # default: batch_step_budget
    misclassification_reward: float = -1.0

    def resolved_epsilon_steps(self) -> int:
        return self.epsilon_steps if self.epsilon_steps is not None else 2 * self.epoch_length

    def resolved_eta_steps(self) -> int:
        return self.eta_steps if self.eta_steps is not None else self.resolved_epsilon_steps()

    def resolved_prefill(self) -> int:
        return self.prefill_steps if self.prefill_steps is not None else self.batch_step_budget

    def resolved_seed(self) -> int:
        if self.seed is None:
            self.seed = secrets.randbits(32)
        return self.seed

    def validate(self) -> None:
        checks = [
            (0.0 <= self.lam <= 1.0, "lambda must lie in [0, 1]"),
            (0.0 < self.gamma <= 1.0, "gamma must lie in (0, 1]"),
            (0.0 <= self.retrace_lambda <= 1.0, "retrace_lambda must lie in [0, 1]"),
            (0.0 <= self.rho <= 1.0, "rho must lie in [0, 1]"),
            (self.env_count > 0, "env_count must be positive"),
            (self.batch_step_budget > 0, "batch_step_budget must be positive"),
            (self.memory_episodes > 0, "memory_episodes must be positive"),
            (self.epoch_length > 0, "epoch_length must be positive"),
            (self.max_epochs > 0, "max_epochs must be positive"),
            (0.0 <= self.epsilon_start <= 1.0 and 0.0 <= self.epsilon_end <= 1.0,
             "epsilon must lie in [0, 1]"),
            (0.0 <= self.eta_start <= 1.0 and 0.0 <= self.eta_end <= 1.0,
             "eta must lie in [0, 1]"),
            (self.lr_start > 0 and self.lr_min > 0 and self.lr_min <= self.lr_start,
             "learning rates must be positive with lr_min <= lr_start"),
            (0.0 < self.lr_scale < 1.0, "lr_scale must lie in (0, 1)"),
            (self.lr_pretrain > 0, "lr_pretrain must be positive"),
            (len(self.hidden_sizes) == 3 and all(h > 0 for h in self.hidden_sizes),
             "hidden_sizes must be 3 positive widths"),
            (self.precision in ("double", "single"), "precision must be double or single"),
            (self.target_mode in TARGET_MODES,
             f"target_mode must be one of {TARGET_MODES}"),
            (self.max_grad_norm > 0, "max_grad_norm must be positive"),
            (self.pretrain_batch > 0, "pretrain_batch must be positive"),
            (self.misclassification_reward <= 0,
             "misclassification_reward must be non-positive"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SweepConfig:
    lambdas: list[float] = field(default_factory=lambda: [0.0, 0.003, 0.01, 0.03, 0.1])
    seeds: list[int] = field(default_factory=lambda: [1, 2, 3])


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    hp: Hyperparameters = field(default_factory=Hyperparameters)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def validate(self) -> None:
        self.data.validate()
        self.hp.validate()
        if not self.sweep.lambdas or not self.sweep.seeds:
            raise ConfigError("sweep needs at least one lambda and one seed")


def _parse(value: str, kind, key: str):
    try:
        if kind is bool:
            lowered = value.strip().lower()
            if lowered in ("true", "yes", "1", "on"):
                return True
            if lowered in ("false", "no", "0", "off"):
                return False
            raise ValueError(value)
        return kind(value)
    except ValueError:
        raise ConfigError(f"cannot parse {key} = {value!r} as {kind.__name__}") from None


def _parse_list(value: str, kind, key: str):
    return [_parse(item.strip(), kind, key) for item in value.split(",") if item.strip()]


def load_config(path) -> RunConfig:
    """Parse the configuration file; unknown sections or keys are errors."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")

    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        unknown = set(parser[section]) - _SECTIONS[section]
        if unknown:
            raise ConfigError(f"unknown key(s) in [{section}]: {sorted(unknown)}")

    cfg = RunConfig()
    if parser.has_section("data"):
        sec = parser["data"]
        d = cfg.data
        d.path = sec.get("path", d.path)
        d.label_column = sec.get("label_column", d.label_column)
        d.cost_mode = sec.get("cost_mode", d.cost_mode)
        d.cost_file = sec.get("cost_file", d.cost_file) or None
        d.hpc_predictions = sec.get("hpc_predictions", d.hpc_predictions) or None
        if "split_fractions" in sec:
            fracs = _parse_list(sec["split_fractions"], float, "split_fractions")
            if len(fracs) != 3:
                raise ConfigError("split_fractions needs exactly 3 values")
            d.split_fractions = tuple(fracs)
        if "split_seed" in sec:
            d.split_seed = _parse(sec["split_seed"], int, "split_seed")
        files = {name: sec.get(f"{name}_index_file")
                 for name in ("train", "validation", "test")
                 if sec.get(f"{name}_index_file")}
        if files:
            d.split_files = files

    if parser.has_section("network"):
        sec = parser["network"]
        if "hidden_sizes" in sec:
            sizes = _parse_list(sec["hidden_sizes"], int, "hidden_sizes")
            if len(sizes) != 3:
                raise ConfigError("hidden_sizes needs exactly 3 widths")
            cfg.hp.hidden_sizes = tuple(sizes)
        if "precision" in sec:
            cfg.hp.precision = sec["precision"].strip()

    if parser.has_section("schedules"):
        sec = parser["schedules"]
        for key, kind in (("epsilon_start", float), ("epsilon_end", float),
                          ("epsilon_steps", int), ("eta_start", float),
                          ("eta_end", float), ("eta_steps", int)):
            if key in sec:
                setattr(cfg.hp, key, _parse(sec[key], kind, key))

    if parser.has_section("training"):
        sec = parser["training"]
        mapping = {
            "lambda": ("lam", float), "gamma": ("gamma", float),
            "retrace_lambda": ("retrace_lambda", float), "rho": ("rho", float),
            "env_count": ("env_count", int),
            "batch_step_budget": ("batch_step_budget", int),
            "memory_episodes": ("memory_episodes", int),
            "epoch_length": ("epoch_length", int), "max_epochs": ("max_epochs", int),
            "lr_start": ("lr_start", float), "lr_min": ("lr_min", float),
            "lr_scale": ("lr_scale", float), "lr_pretrain": ("lr_pretrain", float),
            "target_mode": ("target_mode", str), "clip_targets": ("clip_targets", bool),
            "max_grad_norm": ("max_grad_norm", float), "pretrain": ("pretrain", bool),
            "pretrain_states": ("pretrain_states", int),
            "pretrain_batch": ("pretrain_batch", int), "seed": ("seed", int),
            "prefill_steps": ("prefill_steps", int),
            "misclassification_reward": ("misclassification_reward", float),
        }
        for key, (attr, kind) in mapping.items():
            if key in sec:
                setattr(cfg.hp, attr, _parse(sec[key], kind, key))

    if parser.has_section("sweep"):
        sec = parser["sweep"]
        if "lambdas" in sec:
            cfg.sweep.lambdas = _parse_list(sec["lambdas"], float, "lambdas")
        if "seeds" in sec:
            cfg.sweep.seeds = _parse_list(sec["seeds"], int, "seeds")

    cfg.validate()
    return cfg
