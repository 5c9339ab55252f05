"""scikit-learn style wrappers around the planners and learners.

``fit`` takes an :class:`~jamdeceive.env.EnvConfig` (or a dict of its fields)
in place of a data matrix; ``predict`` maps an ``(n, 2)`` array of
(energy, queue) rows to action indices.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .baselines import wd_policy
from .drl import DqnHyperparams, actor_learner_loop, greedy_policy
from .env import ActionKind
from .planning import Policy, TabularHyperparams, evaluate_policy, q_learning, value_iteration
from .validation import check_action_set, check_config, check_rng, check_states


def _action_set(actions):
    if actions is None:
        return None
    return check_action_set(ActionKind[a] if isinstance(a, str) else a for a in actions)


class PolicyMixin:
    """``predict`` and ``evaluate`` for any estimator exposing ``policy_``."""

    def predict(self, X):
        check_is_fitted(self, "policy_")
        states = check_states(X, self.env_config_)
        return self.policy_.actions[states[:, 0], states[:, 1]]

    def predict_kinds(self, X) -> list[ActionKind]:
        return [ActionKind(int(a)) for a in self.predict(X)]

    def evaluate(self, horizon=100_000, seeds=range(10)):
        check_is_fitted(self, "policy_")
        return evaluate_policy(self.env_config_, self.policy_, horizon, seeds)


class ValueIterationAgent(PolicyMixin, BaseEstimator):
    def __init__(self, gamma=0.99, tol=1e-9, actions=None):
        self.gamma = gamma
        self.tol = tol
        self.actions = actions

    def fit(self, X, y=None):
        cfg = check_config(X)
        self.env_config_ = cfg
        self.q_table_, self.policy_, self.n_iter_ = value_iteration(
            cfg, self.gamma, self.tol, allowed=_action_set(self.actions))
        return self


class QLearningAgent(PolicyMixin, BaseEstimator):
    def __init__(self, steps=2_000_000, gamma=0.99, lr_exponent=0.6, eps_start=1.0, eps_end=0.05,
                 eps_decay_fraction=0.5, log_every=100_000, actions=None, reference=None,
                 random_state=None):
        self.steps = steps
        self.gamma = gamma
        self.lr_exponent = lr_exponent
        self.eps_start = eps_start
        self.eps_end = eps_end
        self.eps_decay_fraction = eps_decay_fraction
        self.log_every = log_every
        self.actions = actions
        self.reference = reference
        self.random_state = random_state

    def hyperparams(self) -> TabularHyperparams:
        return TabularHyperparams(
            steps=self.steps, gamma=self.gamma, lr_exponent=self.lr_exponent,
            eps_start=self.eps_start, eps_end=self.eps_end,
            eps_decay_fraction=self.eps_decay_fraction, log_every=self.log_every)

    def fit(self, X, y=None):
        cfg = check_config(X)
        self.env_config_ = cfg
        self.q_table_, self.learning_curve_ = q_learning(
            cfg, self.hyperparams(), check_rng(self.random_state), reference=self.reference,
            allowed=_action_set(self.actions))
        self.policy_ = self.q_table_.greedy()
        return self


class DQNAgent(PolicyMixin, BaseEstimator):
    def __init__(self, replay_capacity=10_000, batch_size=32, gamma=0.99, eps_start=1.0,
                 eps_end=0.01, eps_decay_steps=50_000, target_sync=200, flush_period=1000,
                 learning_rate=1e-3, total_steps=200_000, hidden=(200, 200), rounds_per_flush=None,
                 eval_every=1, eval_horizon=10_000, eval_seed=12345, keep_best=True, actions=None,
                 random_state=None):
        self.replay_capacity = replay_capacity
        self.batch_size = batch_size
        self.gamma = gamma
        self.eps_start = eps_start
        self.eps_end = eps_end
        self.eps_decay_steps = eps_decay_steps
        self.target_sync = target_sync
        self.flush_period = flush_period
        self.learning_rate = learning_rate
        self.total_steps = total_steps
        self.hidden = hidden
        self.rounds_per_flush = rounds_per_flush
        self.eval_every = eval_every
        self.eval_horizon = eval_horizon
        self.eval_seed = eval_seed
        self.keep_best = keep_best
        self.actions = actions
        self.random_state = random_state

    def hyperparams(self) -> DqnHyperparams:
        params = self.get_params()
        return DqnHyperparams.from_dict(
            {k: v for k, v in params.items() if k not in ("actions", "random_state")})

    def fit(self, X, y=None):
        cfg = check_config(X)
        allowed = _action_set(self.actions)
        self.env_config_ = cfg
        self.network_, self.log_ = actor_learner_loop(
            cfg, self.hyperparams(), check_rng(self.random_state), allowed=allowed)
        self.policy_ = greedy_policy(self.network_, cfg, allowed)
        return self


class RuleAgent(PolicyMixin, BaseEstimator):
    """Fixed rule, no learning. Only the no-deception rule ``"wd"`` is defined."""

    def __init__(self, rule="wd"):
        self.rule = rule

    def fit(self, X, y=None):
        if self.rule != "wd":
            raise ValueError(f"unknown rule {self.rule!r}")
        cfg = check_config(X)
        self.env_config_ = cfg
        self.policy_ = Policy.from_rule(wd_policy, cfg)
        return self
