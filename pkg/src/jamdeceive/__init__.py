"""Reactive-jammer deception game: slotted simulator, exact planner, tabular and deep Q-learning."""
from .baselines import StrategyKind, build_strategy, restricted_action_set, wd_policy
from .drl import DqnHyperparams, Experience, ReplayPool, actor_learner_loop, select_action
from .env import (
    ActionKind,
    ConfigError,
    EnvConfig,
    InfeasibleAction,
    State,
    StepOutcome,
    enumerate_kernel,
    feasible_actions,
    sample_outcomes,
    step,
    validate_config,
)
from .estimators import DQNAgent, QLearningAgent, RuleAgent, ValueIterationAgent
from .harness import SweepResult, SweepSpec, run_sweep, summarize
from .planning import Metrics, Policy, QTable, TabularHyperparams, evaluate_policy, q_learning, value_iteration

__version__ = "0.1.0"
