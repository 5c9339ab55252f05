"""Parameter sweeps over the attack or arrival probability, one row per (value, strategy)."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from .baselines import StrategyKind, build_strategy
from .env import ConfigError, EnvConfig, validate_config
from .io import write_csv
from .planning import evaluate_policy

SWEEPABLE = ("p_attack", "p_arrival")
GRID = tuple(round(0.1 * k, 1) for k in range(1, 10))
ALL_STRATEGIES = ("proposed", "dh", "db", "wd")
RESULT_COLUMNS = ("param", "value", "strategy", "throughput", "throughput_ci",
                  "dropped", "dropped_ci", "seeds", "horizon")


class SweepError(RuntimeError):
    pass


@dataclass
class SweepSpec:
    param: str
    values: list
    base: EnvConfig = field(default_factory=EnvConfig)
    strategies: list = field(default_factory=lambda: list(ALL_STRATEGIES))
    trainer: str = "vi"
    trainer_params: dict = field(default_factory=dict)
    horizon: int = 100_000
    seeds: list = field(default_factory=lambda: list(range(10)))
    train_seed: int = 0

    def validate(self) -> "SweepSpec":
        if self.param not in SWEEPABLE:
            raise ConfigError("param", f"can only sweep {SWEEPABLE}, got {self.param!r}")
        if not self.values:
            raise ConfigError("values", "sweep needs at least one value")
        for v in self.values:
            validate_config(self.base.replace(**{self.param: v}))
        if not self.strategies:
            raise ConfigError("strategies", "sweep needs at least one strategy")
        self.strategies = [StrategyKind.parse(s).value for s in self.strategies]
        if not self.seeds:
            raise ConfigError("seeds", "at least one evaluation seed is required")
        if self.horizon < 1:
            raise ConfigError("horizon", "must be >= 1")
        return self


def jamming_sweep(**kw) -> SweepSpec:
    """Attack probability 0.1..0.9 at the base arrival probability."""
    return SweepSpec(param="p_attack", values=list(GRID), **kw)


def arrival_sweep(base: EnvConfig | None = None, **kw) -> SweepSpec:
    """Arrival probability 0.1..0.9 with the attack probability pinned at 0.6."""
    base = (base or EnvConfig()).replace(p_attack=0.6)
    return SweepSpec(param="p_arrival", values=list(GRID), base=base, **kw)


@dataclass(frozen=True)
class SweepRow:
    param: str
    value: float
    strategy: str
    throughput: float
    throughput_ci: float
    dropped: float
    dropped_ci: float
    seeds: int
    horizon: int

    def as_tuple(self):
        return tuple(getattr(self, c) for c in RESULT_COLUMNS)


@dataclass
class SweepResult:
    rows: list

    def to_csv(self, path):
        return write_csv(path, RESULT_COLUMNS, (r.as_tuple() for r in self.rows))

    def get(self, value, strategy) -> SweepRow:
        for r in self.rows:
            if r.value == value and r.strategy == strategy:
                return r
        raise KeyError((value, strategy))

    def series(self, strategy) -> list[tuple[float, float]]:
        return [(r.value, r.throughput) for r in self.rows if r.strategy == strategy]


def _run_point(spec: SweepSpec, value, strategy) -> SweepRow:
    try:
        cfg = validate_config(spec.base.replace(**{spec.param: value}))
        est = build_strategy(strategy, cfg, spec.trainer, spec.trainer_params, spec.train_seed)
        m = evaluate_policy(cfg, est.policy_, spec.horizon, spec.seeds)
    except Exception as exc:
        raise SweepError(f"sweep point {spec.param}={value}, strategy={strategy}: {exc}") from exc
    return SweepRow(spec.param, float(value), strategy, m.avg_throughput, m.throughput_ci,
                    m.avg_dropped, m.dropped_ci, len(spec.seeds), spec.horizon)


def run_sweep(spec: SweepSpec, jobs: int = 1) -> SweepResult:
    """Evaluate every (value, strategy) pair; each point is trained from scratch.

    Output order is fixed (sweep values, then strategy order of the spec), so
    the result does not depend on ``jobs``.
    """
    spec.validate()
    tasks = [(v, s) for v in spec.values for s in spec.strategies]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_point, spec, v, s) for v, s in tasks]
            rows = [f.result() for f in futures]
    else:
        rows = [_run_point(spec, v, s) for v, s in tasks]
    return SweepResult(rows)


@dataclass
class PointSummary:
    value: float
    ratios: dict
    ordering: list
    ordered: bool


def summarize(result: SweepResult, required=ALL_STRATEGIES) -> list[PointSummary]:
    """Proposed-vs-other throughput ratios and the strategy ranking at each sweep value.

    ``ordered`` is true when Proposed >= DH >= DB >= WD.
    """
    out = []
    for value in sorted({r.value for r in result.rows}):
        tp = {r.strategy: r.throughput for r in result.rows if r.value == value}
        missing = [s for s in required if s not in tp]
        if missing:
            raise KeyError(f"sweep value {value} lacks strategies {missing}")
        base = tp["proposed"]
        ratios = {}
        for s in required:
            if s == "proposed":
                continue
            ratios[s] = 1.0 if tp[s] == base else (base / tp[s] if tp[s] > 0 else float("inf"))
        ordering = sorted(tp, key=lambda s: -tp[s])
        chain = [tp[s] for s in ALL_STRATEGIES]
        ordered = all(a >= b for a, b in zip(chain, chain[1:]))
        out.append(PointSummary(value, ratios, ordering, ordered))
    return out


def summary_rows(summaries: list[PointSummary]):
    for p in summaries:
        yield (p.value, p.ratios.get("dh"), p.ratios.get("db"), p.ratios.get("wd"),
               ">".join(p.ordering), p.ordered)


SUMMARY_COLUMNS = ("value", "proposed_over_dh", "proposed_over_db", "proposed_over_wd",
                   "ordering", "ordered")
