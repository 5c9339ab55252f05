"""Exact planning and tabular learning over the finite jamming MDP."""
from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from .env import (
    N_ACTIONS,
    ActionKind,
    EnvConfig,
    State,
    _slot,
    build_kernel,
    feasible_mask,
)
from .io import write_csv
from .validation import check_positive_int, check_probability

__all__ = [
    "Metrics",
    "Policy",
    "QTable",
    "TabularHyperparams",
    "evaluate_policy",
    "q_learning",
    "value_iteration",
]


@dataclass
class QTable:
    """Action values indexed ``[energy, queue, action]``.

    Entries outside ``mask`` are infeasible (or excluded by a restricted action
    set); they hold 0 and are never chosen by :meth:`greedy`.
    """

    values: np.ndarray
    mask: np.ndarray

    @classmethod
    def zeros(cls, cfg: EnvConfig, allowed=None) -> "QTable":
        mask = feasible_mask(cfg, allowed)
        return cls(np.zeros(mask.shape), mask)

    def greedy(self) -> "Policy":
        masked = np.where(self.mask, self.values, -np.inf)
        # argmax keeps the first maximum, i.e. the ActionKind order
        return Policy(np.argmax(masked, axis=-1).astype(np.int64))

    def state_values(self) -> np.ndarray:
        return np.where(self.mask, self.values, -np.inf).max(axis=-1)

    def max_norm_distance(self, other: "QTable") -> float:
        both = self.mask & other.mask
        return float(np.max(np.abs(self.values - other.values)[both]))

    def rows(self):
        e_n, q_n, _ = self.values.shape
        for e in range(e_n):
            for q in range(q_n):
                for a in ActionKind:
                    if self.mask[e, q, a]:
                        yield e, q, a.name, float(self.values[e, q, a])

    def to_csv(self, path):
        return write_csv(path, ["energy", "queue", "action", "q_value"], self.rows())


@dataclass
class Policy:
    """Deterministic stationary policy stored as an action-index table ``[energy, queue]``."""

    actions: np.ndarray

    def __call__(self, s: State) -> ActionKind:
        return ActionKind(int(self.actions[s[0], s[1]]))

    def is_feasible(self, cfg: EnvConfig, allowed=None) -> bool:
        mask = feasible_mask(cfg, allowed)
        e, q = np.indices(self.actions.shape)
        return bool(mask[e, q, self.actions].all())

    def used_actions(self, states=None) -> set[ActionKind]:
        if states is None:
            return {ActionKind(int(a)) for a in np.unique(self.actions)}
        return {self(s) for s in states}

    @classmethod
    def from_rule(cls, rule, cfg: EnvConfig) -> "Policy":
        table = np.zeros((cfg.e_max + 1, cfg.d_max + 1), dtype=np.int64)
        for e in range(cfg.e_max + 1):
            for q in range(cfg.d_max + 1):
                table[e, q] = int(rule(State(e, q), cfg))
        return cls(table)

    def rows(self):
        e_n, q_n = self.actions.shape
        for e in range(e_n):
            for q in range(q_n):
                yield e, q, ActionKind(int(self.actions[e, q])).name

    def to_csv(self, path):
        return write_csv(path, ["energy", "queue", "action"], self.rows())


def value_iteration(cfg: EnvConfig, gamma: float = 0.99, tol: float = 1e-9, allowed=None,
                    trace: list | None = None, kernel=None):
    """Optimal discounted Q by repeated Bellman backups.

    Stops once successive tables differ by less than ``tol`` in sup-norm, which
    bounds the Bellman residual of the returned table by ``gamma * tol``.
    Returns ``(QTable, Policy, iterations)``; if ``trace`` is a list the
    successive sup-norm differences are appended to it.
    """
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    kernel = kernel if kernel is not None else build_kernel(cfg)
    mask = feasible_mask(cfg, allowed).reshape(-1, N_ACTIONS)
    q = np.zeros_like(kernel.R)
    iterations = 0
    while True:
        v = np.where(mask, q, -np.inf).max(axis=1)
        new = np.where(mask, kernel.R + gamma * (kernel.P @ v), 0.0)
        delta = float(np.max(np.abs(new - q)))
        q = new
        iterations += 1
        if trace is not None:
            trace.append(delta)
        if delta < tol:
            break
    shape = (cfg.e_max + 1, cfg.d_max + 1, N_ACTIONS)
    table = QTable(q.reshape(shape), mask.reshape(shape))
    return table, table.greedy(), iterations


def bellman_residual(table: QTable, cfg: EnvConfig, gamma: float, kernel=None) -> np.ndarray:
    """Per-pair ``|T Q - Q|`` over feasible pairs, computed branch by branch."""
    kernel = kernel if kernel is not None else build_kernel(cfg)
    v = table.state_values().reshape(-1)
    q = table.values.reshape(-1, N_ACTIONS)
    mask = table.mask.reshape(-1, N_ACTIONS)
    backed = kernel.R + gamma * np.einsum("sat,t->sa", kernel.P, v)
    return np.abs(backed - q)[mask]


@dataclass
class TabularHyperparams:
    steps: int = 2_000_000
    gamma: float = 0.99
    lr_exponent: float = 0.6
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_fraction: float = 0.5
    log_every: int = 100_000
    initial_state: tuple = (0, 0)

    def validate(self) -> "TabularHyperparams":
        check_positive_int("steps", self.steps, allow_zero=True)
        check_positive_int("log_every", self.log_every)
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.lr_exponent <= 0.5 or self.lr_exponent > 1.0:
            raise ValueError("lr_exponent must lie in (0.5, 1] for a convergent schedule")
        check_probability("eps_start", self.eps_start)
        check_probability("eps_end", self.eps_end)
        check_probability("eps_decay_fraction", self.eps_decay_fraction)
        return self

    def epsilon(self, t: int) -> float:
        decay = self.eps_decay_fraction * self.steps
        frac = 1.0 if decay <= 0 else min(1.0, t / decay)
        return self.eps_start + (self.eps_end - self.eps_start) * frac


@numba.njit(cache=True)
def _pick(u_explore, u_choice, eps, qrow, mrow):
    if u_explore < eps:
        k = 0
        for a in range(4):
            if mrow[a]:
                k += 1
        j = int(u_choice * k)
        for a in range(4):
            if mrow[a]:
                if j == 0:
                    return a
                j -= 1
    best = -1
    for a in range(4):
        if mrow[a] and (best < 0 or qrow[a] > qrow[best]):
            best = a
    return best


@numba.njit(cache=True)
def _q_learning_chunk(Q, visits, mask, energy, queue, t0, total, eps_start, eps_end,
                      decay, gamma, lr_exponent, env_u, agent_u, params):
    d1 = params[1] + 1
    for i in range(env_u.shape[0]):
        t = t0 + i
        frac = 1.0 if decay <= 0 else min(1.0, t / decay)
        eps = eps_start + (eps_end - eps_start) * frac
        s = energy * d1 + queue
        a = _pick(agent_u[i, 0], agent_u[i, 1], eps, Q[s], mask[s])
        energy, queue, delivered, _, _, _, _ = _slot(
            energy, queue, a, env_u[i, 0], env_u[i, 1], env_u[i, 2], params)
        s2 = energy * d1 + queue
        nxt = -np.inf
        for b in range(4):
            if mask[s2, b] and Q[s2, b] > nxt:
                nxt = Q[s2, b]
        # first visit uses step size 1
        alpha = (1.0 + visits[s, a]) ** (-lr_exponent)
        visits[s, a] += 1
        Q[s, a] += alpha * (delivered + gamma * nxt - Q[s, a])
    return energy, queue


@dataclass
class LearningCurve:
    step: list = field(default_factory=list)
    epsilon: list = field(default_factory=list)
    oracle_distance: list = field(default_factory=list)

    def rows(self):
        return zip(self.step, self.epsilon, self.oracle_distance)

    def to_csv(self, path):
        return write_csv(path, ["step", "epsilon", "oracle_distance"], self.rows())


def q_learning(cfg: EnvConfig, hp: TabularHyperparams, rng: np.random.Generator,
               reference: QTable | None = None, allowed=None):
    """Epsilon-greedy tabular Q-learning on one continuing trajectory.

    Infeasible actions are masked in both selection and the TD max. The n-th
    update of a pair uses step size ``n ** -lr_exponent``. Returns
    ``(QTable, LearningCurve)``; the curve's ``oracle_distance`` column is the
    max-norm distance to ``reference`` (NaN without one).
    """
    hp.validate()
    table = QTable.zeros(cfg, allowed)
    n = cfg.n_states
    Q = table.values.reshape(n, N_ACTIONS)
    mask = table.mask.reshape(n, N_ACTIONS)
    visits = np.zeros((n, N_ACTIONS), dtype=np.int64)
    energy, queue = hp.initial_state
    curve = LearningCurve()
    params = cfg._params()

    def record(t):
        curve.step.append(t)
        curve.epsilon.append(hp.epsilon(t))
        curve.oracle_distance.append(
            table.max_norm_distance(reference) if reference is not None else float("nan"))

    record(0)
    t = 0
    while t < hp.steps:
        m = min(hp.log_every, hp.steps - t)
        env_u = rng.random((m, 3))
        agent_u = rng.random((m, 2))
        energy, queue = _q_learning_chunk(
            Q, visits, mask, energy, queue, t, hp.steps, hp.eps_start, hp.eps_end,
            hp.eps_decay_fraction * hp.steps, hp.gamma, hp.lr_exponent, env_u, agent_u, params)
        t += m
        record(t)
    table.visits = visits.reshape(table.mask.shape)
    return table, curve


@numba.njit(cache=True)
def _simulate(actions, energy, queue, draws, params):
    delivered = 0
    dropped = 0
    energy_sum = 0.0
    for i in range(draws.shape[0]):
        a = actions[energy, queue]
        energy, queue, dl, dr, _, _, _ = _slot(
            energy, queue, a, draws[i, 0], draws[i, 1], draws[i, 2], params)
        delivered += dl
        dropped += dr
        energy_sum += energy
    return delivered, dropped, energy_sum


def simulate_totals(cfg: EnvConfig, policy: Policy, horizon: int, seed, initial_state=(0, 0)):
    """Total delivered, dropped and summed post-slot energy over one seeded run."""
    draws = np.random.default_rng(seed).random((horizon, 3))
    return _simulate(np.ascontiguousarray(policy.actions, dtype=np.int64),
                     int(initial_state[0]), int(initial_state[1]), draws, cfg._params())


def _ci(values: np.ndarray) -> float:
    if len(values) < 2:
        return 0.0
    return float(1.96 * values.std(ddof=1) / np.sqrt(len(values)))


@dataclass
class Metrics:
    avg_throughput: float
    avg_dropped: float
    avg_energy: float
    slots: int
    throughput_ci: float
    dropped_ci: float
    seeds: list
    per_seed_throughput: np.ndarray
    per_seed_dropped: np.ndarray

    def rows(self):
        for seed, tp, dr in zip(self.seeds, self.per_seed_throughput, self.per_seed_dropped):
            yield seed, float(tp), float(dr), self.slots

    def to_csv(self, path):
        return write_csv(path, ["seed", "throughput", "dropped", "horizon"], self.rows())


def evaluate_policy(cfg: EnvConfig, policy: Policy, horizon: int = 100_000, seeds=range(10),
                    initial_state=(0, 0)) -> Metrics:
    """Long-run average delivered/dropped packets per slot, one run per seed.

    Seed ``k`` drives ``np.random.default_rng(k)``, so a run is reproduced
    exactly by stepping :func:`jamdeceive.env.step` with that generator.
    """
    check_positive_int("horizon", horizon)
    seeds = list(seeds)
    if not seeds:
        raise ValueError("at least one seed is required")
    if not policy.is_feasible(cfg):
        raise ValueError("policy selects an infeasible action")
    tot = np.array([simulate_totals(cfg, policy, horizon, s, initial_state) for s in seeds], dtype=float)
    tp, dr = tot[:, 0] / horizon, tot[:, 1] / horizon
    return Metrics(
        avg_throughput=float(tp.mean()),
        avg_dropped=float(dr.mean()),
        avg_energy=float(tot[:, 2].mean() / horizon),
        slots=horizon,
        throughput_ci=_ci(tp),
        dropped_ci=_ci(dr),
        seeds=seeds,
        per_seed_throughput=tp,
        per_seed_dropped=dr,
    )


def reachable_states(cfg: EnvConfig, policy: Policy, start=(0, 0), kernel=None) -> list[State]:
    """States reachable with positive probability from ``start`` while following ``policy``."""
    kernel = kernel if kernel is not None else build_kernel(cfg)
    d1 = cfg.d_max + 1
    acts = policy.actions.reshape(-1)
    seen = {start[0] * d1 + start[1]}
    frontier = list(seen)
    while frontier:
        s = frontier.pop()
        for t in np.flatnonzero(kernel.P[s, acts[s]]):
            if int(t) not in seen:
                seen.add(int(t))
                frontier.append(int(t))
    return [State(i // d1, i % d1) for i in sorted(seen)]
