"""Comparison strategies: the full four-mode agent and its three ablations."""
from __future__ import annotations

import enum

import numpy as np

from .env import ActionKind, EnvConfig, State

A = ActionKind


class StrategyKind(str, enum.Enum):
    Proposed = "proposed"
    DH = "dh"
    DB = "db"
    WD = "wd"

    @classmethod
    def parse(cls, name) -> "StrategyKind":
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).lower())
        except ValueError:
            raise ValueError(f"unknown strategy {name!r}; choose from {[k.value for k in cls]}") from None


_ACTION_SETS = {
    StrategyKind.Proposed: frozenset(A),
    StrategyKind.DH: frozenset({A.PassiveHarvest, A.ActiveTransmit, A.DeceiveHarvest}),
    StrategyKind.DB: frozenset({A.PassiveHarvest, A.ActiveTransmit, A.DeceiveBackscatter}),
    StrategyKind.WD: frozenset({A.PassiveHarvest, A.ActiveTransmit}),
}


def restricted_action_set(kind) -> frozenset[ActionKind]:
    return _ACTION_SETS[StrategyKind.parse(kind)]


def wd_policy(s: State, cfg: EnvConfig) -> ActionKind:
    """Transmit whenever there is data and enough energy, otherwise harvest."""
    if s[1] >= 1 and s[0] >= cfg.cost_active:
        return A.ActiveTransmit
    return A.PassiveHarvest


def build_strategy(kind, cfg: EnvConfig, trainer: str = "vi", hp=None, random_state=None):
    """Fitted estimator for ``kind``; its ``policy_`` is the decision table.

    WD ignores ``trainer`` and ``hp``. The other strategies learn over their
    restricted action set with the chosen trainer (``vi``, ``tabular`` or
    ``dqn``); ``hp`` is the trainer's hyperparameter object or dict.
    """
    from .estimators import DQNAgent, QLearningAgent, RuleAgent, ValueIterationAgent

    kind = StrategyKind.parse(kind)
    if kind is StrategyKind.WD:
        return RuleAgent().fit(cfg)
    actions = tuple(a.name for a in sorted(restricted_action_set(kind)))
    hp = hp if hp is not None else {}
    if not isinstance(hp, dict):
        hp = {k: v for k, v in vars(hp).items()}
    if trainer == "vi":
        est = ValueIterationAgent(actions=actions, **hp)
    elif trainer == "tabular":
        est = QLearningAgent(actions=actions, random_state=random_state, **hp)
    elif trainer == "dqn":
        est = DQNAgent(actions=actions, random_state=random_state, **hp)
    else:
        raise ValueError(f"unknown trainer {trainer!r}; choose vi, tabular or dqn")
    return est.fit(cfg)


def strategy_policy(kind, cfg: EnvConfig, trainer: str = "vi", hp=None, random_state=None):
    return build_strategy(kind, cfg, trainer, hp, random_state).policy_


def never_deceives(actions: np.ndarray) -> bool:
    return bool(np.isin(actions, [int(A.PassiveHarvest), int(A.ActiveTransmit)]).all())
