"""costq: classification that pays for its features.

A Q-learning agent decides, per sample, which feature values to buy and when
to commit to a class, trading expected error against lambda-scaled feature
cost. The package bundles the dueling network, the episodic environment, the
episode replay buffer, target computation (one-step, double estimator and
multi-step with importance truncation), supervised pretraining, the data
pipeline, the training harness and a CLI.
"""

from .agent import (LinearSchedule, PolicyConfig, TargetConfig, eta_greedy_probs,
                    one_step_target, retrace_targets, select_action)
from .checkpoint import load_checkpoint, save_checkpoint
from .config import DataConfig, Hyperparameters, RunConfig, SweepConfig, load_config
from .data import (CostSchedule, Dataset, assign_costs, load_dataset,
                   load_hpc_predictions, make_splits, normalize)
from .env import ActionSpace, Environment, Observation, StepResult
from .errors import (ConfigError, CostqError, DataError, IllegalActionError,
                     NotReadyError, TrainingDiverged)
from .hull import convex_hull_select
from .nn import (AdamState, GradientSet, NetworkParams, adam_step, backward,
                 clip_gradient_norm, forward, init_params, soft_update)
from .pretrain import PretrainConfig, generate_masked_state, pretrain_classifier_head
from .replay import Episode, ReplayBuffer, Transition
from .train import (EvalStats, RunReport, TradeoffPoint, adapt_learning_rate,
                    early_stop, evaluate_params, evaluate_policy, sweep, train)

__version__ = "0.1.0"
