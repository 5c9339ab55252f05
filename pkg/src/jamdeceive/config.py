"""Run configuration files (YAML).

Top-level keys::

    env:         EnvConfig fields, e.g. p_attack: 0.6
    oracle:      gamma, tol                      (value iteration)
    trainer:     kind (vi|tabular|dqn), seed, params: {hyperparameters}
    evaluation:  horizon, seeds
    strategy:    proposed|dh|db|wd               (evaluate command)
    sweep:       figure (jamming|arrival), values, strategies, trainer, params
    output_dir:  where outputs go
    command:     written by manifests; informational

Unknown keys are rejected at every level. All sections are optional.
"""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .baselines import StrategyKind
from .drl import DqnHyperparams
from .env import ConfigError, EnvConfig
from .harness import ALL_STRATEGIES, GRID, SweepSpec, arrival_sweep, jamming_sweep
from .planning import TabularHyperparams

OUTPUT_ENV_VAR = "JAMDECEIVE_OUTPUT_DIR"
TRAINERS = ("vi", "tabular", "dqn")
FIGURES = ("jamming", "arrival")
_VI_KEYS = ("gamma", "tol")


def _reject_unknown(section: str, data: dict, allowed) -> None:
    if not isinstance(data, dict):
        raise ConfigError(section, f"expected a mapping, got {type(data).__name__}")
    extra = sorted(set(data) - set(allowed))
    if extra:
        raise ConfigError(f"{section}.{extra[0]}" if section else extra[0], "unknown key")


def _validated_params(kind: str, params: dict, section: str) -> dict:
    try:
        if kind == "vi":
            _reject_unknown(f"{section}.params", params, _VI_KEYS)
            gamma = params.get("gamma", 0.99)
            if not 0.0 <= gamma < 1.0:
                raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
            if params.get("tol", 1e-9) <= 0:
                raise ValueError("tol must be positive")
        elif kind == "tabular":
            TabularHyperparams(**params).validate()
        elif kind == "dqn":
            DqnHyperparams.from_dict(params).validate()
        else:
            raise ConfigError(f"{section}.kind", f"unknown trainer {kind!r}; choose from {TRAINERS}")
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}.params", str(exc)) from exc
    return dict(params)


@dataclass
class TrainerSection:
    kind: str = "vi"
    seed: int = 0
    params: dict = field(default_factory=dict)


@dataclass
class EvalSection:
    horizon: int = 100_000
    seeds: list = field(default_factory=lambda: list(range(10)))


@dataclass
class OracleSection:
    gamma: float = 0.99
    tol: float = 1e-9


@dataclass
class SweepSection:
    figure: str = "jamming"
    values: list | None = None
    strategies: list = field(default_factory=lambda: list(ALL_STRATEGIES))
    trainer: str = "vi"
    params: dict = field(default_factory=dict)


@dataclass
class RunConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    oracle: OracleSection = field(default_factory=OracleSection)
    trainer: TrainerSection = field(default_factory=TrainerSection)
    evaluation: EvalSection = field(default_factory=EvalSection)
    strategy: str = "proposed"
    sweep: SweepSection = field(default_factory=SweepSection)
    output_dir: str = "out"
    command: str | None = None

    @classmethod
    def from_dict(cls, data: dict | None) -> "RunConfig":
        data = dict(data or {})
        _reject_unknown("", data, [f.name for f in dataclasses.fields(cls)])
        env = EnvConfig.from_dict(data.get("env") or {})

        o = data.get("oracle") or {}
        _reject_unknown("oracle", o, _VI_KEYS)
        oracle = OracleSection(**o)
        _validated_params("vi", o, "oracle")

        t = data.get("trainer") or {}
        _reject_unknown("trainer", t, ("kind", "seed", "params"))
        trainer = TrainerSection(**t)
        trainer.params = _validated_params(trainer.kind, dict(trainer.params or {}), "trainer")

        e = data.get("evaluation") or {}
        _reject_unknown("evaluation", e, ("horizon", "seeds"))
        evaluation = EvalSection(**e)
        if int(evaluation.horizon) != evaluation.horizon or evaluation.horizon < 1:
            raise ConfigError("evaluation.horizon", "must be a positive integer")
        if not evaluation.seeds:
            raise ConfigError("evaluation.seeds", "at least one seed is required")
        evaluation.seeds = [int(s) for s in evaluation.seeds]

        try:
            strategy = StrategyKind.parse(data.get("strategy", "proposed")).value
        except ValueError as exc:
            raise ConfigError("strategy", str(exc)) from exc

        s = data.get("sweep") or {}
        _reject_unknown("sweep", s, ("figure", "values", "strategies", "trainer", "params"))
        sweep = SweepSection(**s)
        if sweep.figure not in FIGURES:
            raise ConfigError("sweep.figure", f"choose from {FIGURES}, got {sweep.figure!r}")
        if sweep.trainer not in TRAINERS:
            raise ConfigError("sweep.trainer", f"choose from {TRAINERS}, got {sweep.trainer!r}")
        sweep.params = _validated_params(sweep.trainer, dict(sweep.params or {}), "sweep")
        try:
            sweep.strategies = [StrategyKind.parse(x).value for x in sweep.strategies]
        except ValueError as exc:
            raise ConfigError("sweep.strategies", str(exc)) from exc

        cfg = cls(env=env, oracle=oracle, trainer=trainer, evaluation=evaluation, strategy=strategy,
                  sweep=sweep, output_dir=str(data.get("output_dir", "out")),
                  command=data.get("command"))
        cfg.sweep_spec().validate()
        return cfg

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["env"] = self.env.to_dict()
        if out["command"] is None:
            del out["command"]
        return out

    def sweep_spec(self) -> SweepSpec:
        kw = dict(strategies=list(self.sweep.strategies), trainer=self.sweep.trainer,
                  trainer_params=dict(self.sweep.params), horizon=int(self.evaluation.horizon),
                  seeds=list(self.evaluation.seeds), train_seed=int(self.trainer.seed))
        if self.sweep.figure == "jamming":
            spec = jamming_sweep(base=self.env, **kw)
        else:
            spec = arrival_sweep(base=self.env, **kw)
        if self.sweep.values is not None:
            spec.values = list(self.sweep.values)
        return spec


def default_sweep_values() -> list:
    return list(GRID)


def _set_path(data: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = data
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(dotted, "cannot set a key below a scalar")
    node[keys[-1]] = value


def load_run_config(path, overrides: dict | None = None) -> RunConfig:
    """Read ``path`` and apply dotted-key ``overrides`` (flags win over the file)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror or exc}") from exc
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError("config", f"{path} is not valid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config", f"{path} must contain a mapping")
    env_out = os.environ.get(OUTPUT_ENV_VAR)
    if env_out:
        data["output_dir"] = env_out
    for key, value in (overrides or {}).items():
        _set_path(data, key, value)
    return RunConfig.from_dict(data)


def dump_manifest(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True, default_flow_style=None)
