"""Deep Q-learning split into an on-device actor and an offloaded learner.

The actor acts from a frozen copy of the network and buffers its experiences.
Every ``flush_period`` experiences the buffer is shipped to the learner, which
adds it to the replay pool, runs a few minibatch updates and returns a fresh
snapshot. Nothing else is shared between the two sides.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields

import numba
import numpy as np

from .env import N_ACTIONS, ActionKind, EnvConfig, State, _slot, all_states, encode_state, feasible_mask
from .io import write_csv
from .neural import AdamState, MlpNetwork, backward, forward, mlp_new, optimizer_step
from .planning import Policy, _pick, evaluate_policy
from .validation import check_positive_int, check_probability


@dataclass(frozen=True)
class Experience:
    state: State
    action: ActionKind
    reward: float
    next: State


class ReplayPool:
    """Fixed-capacity FIFO ring buffer of experiences stored as flat arrays."""

    def __init__(self, capacity: int):
        self.capacity = check_positive_int("capacity", capacity)
        self.states = np.zeros((capacity, 2), dtype=np.int64)
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, 2), dtype=np.int64)
        self.inserted = 0

    def __len__(self):
        return min(self.inserted, self.capacity)

    def add(self, exp: Experience):
        self.extend([exp.state], [int(exp.action)], [exp.reward], [exp.next])

    def extend(self, states, actions, rewards, next_states):
        states = np.asarray(states, dtype=np.int64).reshape(-1, 2)
        for k in range(len(states)):
            i = self.inserted % self.capacity
            self.states[i] = states[k]
            self.actions[i] = actions[k]
            self.rewards[i] = rewards[k]
            self.next_states[i] = np.asarray(next_states[k])
            self.inserted += 1

    def _order(self) -> np.ndarray:
        if self.inserted <= self.capacity:
            return np.arange(self.inserted)
        start = self.inserted % self.capacity
        return (np.arange(self.capacity) + start) % self.capacity

    def contents(self) -> list[Experience]:
        """Stored experiences, oldest first."""
        return [Experience(State(*map(int, self.states[i])), ActionKind(int(self.actions[i])),
                           float(self.rewards[i]), State(*map(int, self.next_states[i])))
                for i in self._order()]

    def sample(self, batch_size: int, rng: np.random.Generator):
        """Uniform minibatch without replacement: ``(states, actions, rewards, next_states)``."""
        if batch_size > len(self):
            raise ValueError(f"batch of {batch_size} from a pool of {len(self)}")
        idx = rng.choice(len(self), size=batch_size, replace=False)
        return self.states[idx], self.actions[idx], self.rewards[idx], self.next_states[idx]


@dataclass
class DqnHyperparams:
    replay_capacity: int = 10_000
    batch_size: int = 32
    gamma: float = 0.99
    eps_start: float = 1.0
    eps_end: float = 0.01
    eps_decay_steps: int = 50_000
    target_sync: int = 200
    flush_period: int = 1000
    learning_rate: float = 1e-3
    total_steps: int = 200_000
    hidden: tuple = (200, 200)
    rounds_per_flush: int | None = None
    eval_every: int = 1
    eval_horizon: int = 10_000
    eval_seed: int = 12345
    keep_best: bool = True

    def validate(self) -> "DqnHyperparams":
        for name in ("replay_capacity", "batch_size", "target_sync", "flush_period",
                     "total_steps", "eval_every", "eval_horizon"):
            check_positive_int(name, getattr(self, name))
        check_positive_int("eps_decay_steps", self.eps_decay_steps, allow_zero=True)
        if self.rounds_per_flush is not None:
            check_positive_int("rounds_per_flush", self.rounds_per_flush)
        if self.batch_size > self.replay_capacity:
            raise ValueError("batch_size exceeds replay_capacity")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        check_probability("eps_start", self.eps_start)
        check_probability("eps_end", self.eps_end)
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        for w in self.hidden:
            check_positive_int("hidden width", w)
        return self

    @property
    def rounds(self) -> int:
        # keep sample throughput and gradient throughput balanced
        if self.rounds_per_flush is not None:
            return self.rounds_per_flush
        return max(1, self.flush_period // self.batch_size)

    def epsilon(self, t: int) -> float:
        if self.eps_decay_steps == 0:
            return self.eps_end
        frac = min(1.0, t / self.eps_decay_steps)
        return self.eps_start + (self.eps_end - self.eps_start) * frac

    @classmethod
    def from_dict(cls, data: dict) -> "DqnHyperparams":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown DQN hyperparameter(s): {sorted(unknown)}")
        data = dict(data)
        if "hidden" in data:
            data["hidden"] = tuple(data["hidden"])
        return cls(**data)


def _all_inputs(cfg: EnvConfig) -> np.ndarray:
    return encode_state(np.array(all_states(cfg), dtype=np.float64), cfg)


def q_values_table(net: MlpNetwork, cfg: EnvConfig) -> np.ndarray:
    """Network outputs for every state, shape ``(n_states, 4)`` in state-index order."""
    return forward(net, _all_inputs(cfg))


def greedy_policy(net: MlpNetwork, cfg: EnvConfig, allowed=None) -> Policy:
    q = q_values_table(net, cfg)
    mask = feasible_mask(cfg, allowed).reshape(-1, N_ACTIONS)
    acts = np.argmax(np.where(mask, q, -np.inf), axis=1)
    return Policy(acts.reshape(cfg.e_max + 1, cfg.d_max + 1).astype(np.int64))


def select_action(net: MlpNetwork, s: State, epsilon: float, cfg: EnvConfig,
                  rng: np.random.Generator, allowed=None) -> ActionKind:
    """Epsilon-greedy over feasible actions; greedy ties go to the lowest ActionKind."""
    check_probability("epsilon", epsilon)
    mrow = feasible_mask(cfg, allowed)[s[0], s[1]]
    qrow = forward(net, encode_state(s, cfg))
    u = rng.random(2)
    return ActionKind(int(_pick(u[0], u[1], epsilon, qrow, mrow)))


@numba.njit(cache=True)
def _act_segment(qvals, mask, energy, queue, t0, eps_start, eps_end, decay, env_u, agent_u, params,
                 states, actions, rewards, next_states, explored):
    d1 = params[1] + 1
    for i in range(env_u.shape[0]):
        t = t0 + i
        if decay == 0:
            eps = eps_end
        else:
            eps = eps_start + (eps_end - eps_start) * min(1.0, t / decay)
        s = energy * d1 + queue
        a = _pick(agent_u[i, 0], agent_u[i, 1], eps, qvals[s], mask[s])
        states[i, 0] = energy
        states[i, 1] = queue
        actions[i] = a
        explored[i] = agent_u[i, 0] < eps
        energy, queue, delivered, _, _, _, _ = _slot(
            energy, queue, a, env_u[i, 0], env_u[i, 1], env_u[i, 2], params)
        rewards[i] = delivered
        next_states[i, 0] = energy
        next_states[i, 1] = queue
    return energy, queue


class Learner:
    """Online network, target network and optimizer state; lives off-device."""

    def __init__(self, net: MlpNetwork, cfg: EnvConfig, hp: DqnHyperparams, allowed=None):
        self.online = net
        self.target = net.copy()
        self.opt = AdamState(lr=hp.learning_rate)
        self.cfg = cfg
        self.mask = feasible_mask(cfg, allowed)
        self.rounds_done = 0

    def snapshot(self) -> MlpNetwork:
        return self.online.copy()


def learner_train_round(learner: Learner, batch, hp: DqnHyperparams) -> float:
    """One TD(0) minibatch update; returns the pre-update mean squared TD error.

    ``batch`` is a list of :class:`Experience` or the tuple returned by
    :meth:`ReplayPool.sample`.
    """
    if isinstance(batch, (list, tuple)) and batch and isinstance(batch[0], Experience):
        s = np.array([e.state for e in batch], dtype=np.int64)
        a = np.array([int(e.action) for e in batch], dtype=np.int64)
        r = np.array([e.reward for e in batch], dtype=np.float64)
        s2 = np.array([e.next for e in batch], dtype=np.int64)
    else:
        s, a, r, s2 = batch
    if len(a) == 0:
        raise ValueError("empty training batch")
    cfg = learner.cfg
    next_q = forward(learner.target, encode_state(s2, cfg))
    next_q = np.where(learner.mask[s2[:, 0], s2[:, 1]], next_q, -np.inf)
    y = r + hp.gamma * next_q.max(axis=1)
    x = encode_state(s, cfg)
    q = forward(learner.online, x)
    rows = np.arange(len(a))
    err = q[rows, a] - y
    grad_out = np.zeros_like(q)
    grad_out[rows, a] = 2.0 * err / len(a)
    optimizer_step(learner.online, backward(learner.online, x, grad_out), learner.opt)
    learner.rounds_done += 1
    if learner.rounds_done % hp.target_sync == 0:
        learner.target = learner.online.copy()
    return float(np.mean(err ** 2))


@dataclass
class TrainingLog:
    step: list = field(default_factory=list)
    epsilon: list = field(default_factory=list)
    loss: list = field(default_factory=list)
    eval_throughput: list = field(default_factory=list)
    eval_dropped: list = field(default_factory=list)
    # filled only with keep_trace=True
    snapshots: list = field(default_factory=list)
    decisions: list = field(default_factory=list)

    COLUMNS = ("step", "epsilon", "loss", "eval_throughput", "eval_dropped")

    @property
    def exchanges(self) -> int:
        return len(self.step)

    def rows(self):
        return zip(self.step, self.epsilon, self.loss, self.eval_throughput, self.eval_dropped)

    def to_csv(self, path):
        return write_csv(path, self.COLUMNS, self.rows())


def actor_learner_loop(cfg: EnvConfig, hp: DqnHyperparams, rng: np.random.Generator,
                       allowed=None, keep_trace: bool = False):
    """Train a Q-network; returns ``(online network, TrainingLog)``.

    With ``keep_best`` the returned network is the snapshot with the highest
    logged evaluation throughput (latest wins ties), otherwise the final one.
    With ``keep_trace`` the log also keeps every snapshot the actor used and a
    per-step record ``(step, energy, queue, action, explored, snapshot_id)``.
    """
    hp.validate()
    init_rng, actor_rng, learner_rng = rng.spawn(3)
    net = mlp_new([2, *hp.hidden, N_ACTIONS], rng=init_rng)
    learner = Learner(net, cfg, hp, allowed)
    pool = ReplayPool(hp.replay_capacity)
    mask = feasible_mask(cfg, allowed).reshape(-1, N_ACTIONS)
    params = cfg._params()
    log = TrainingLog()

    snapshot = learner.snapshot()
    best, best_score = snapshot, -np.inf
    energy, queue = 0, 0
    t = 0
    flushes = 0
    while t < hp.total_steps:
        n = min(hp.flush_period, hp.total_steps - t)
        qvals = np.ascontiguousarray(q_values_table(snapshot, cfg))
        if keep_trace:
            log.snapshots.append(snapshot)
        env_u = actor_rng.random((n, 3))
        agent_u = actor_rng.random((n, 2))
        states = np.empty((n, 2), dtype=np.int64)
        actions = np.empty(n, dtype=np.int64)
        rewards = np.empty(n)
        next_states = np.empty((n, 2), dtype=np.int64)
        explored = np.empty(n, dtype=np.bool_)
        energy, queue = _act_segment(qvals, mask, energy, queue, t, hp.eps_start, hp.eps_end,
                                     hp.eps_decay_steps, env_u, agent_u, params,
                                     states, actions, rewards, next_states, explored)
        if not mask[states[:, 0] * (cfg.d_max + 1) + states[:, 1], actions].all():
            raise RuntimeError("actor selected an infeasible action")
        if keep_trace:
            sid = len(log.snapshots) - 1
            log.decisions.extend(
                (t + i, int(states[i, 0]), int(states[i, 1]), int(actions[i]), bool(explored[i]), sid)
                for i in range(n))
        t += n
        flushes += 1

        # exchange: experiences go to the learner, a new snapshot comes back
        pool.extend(states, actions, rewards, next_states)
        losses = []
        if len(pool) >= hp.batch_size:
            for _ in range(hp.rounds):
                losses.append(learner_train_round(learner, pool.sample(hp.batch_size, learner_rng), hp))
        if not learner.online.is_finite():
            raise FloatingPointError(f"non-finite network parameters after step {t}")
        snapshot = learner.snapshot()

        log.step.append(t)
        log.epsilon.append(hp.epsilon(t))
        log.loss.append(float(np.mean(losses)) if losses else float("nan"))
        if flushes % hp.eval_every == 0 or t >= hp.total_steps:
            m = evaluate_policy(cfg, greedy_policy(snapshot, cfg, allowed), hp.eval_horizon, [hp.eval_seed])
            log.eval_throughput.append(m.avg_throughput)
            log.eval_dropped.append(m.avg_dropped)
            if m.avg_throughput >= best_score:
                best, best_score = snapshot, m.avg_throughput
        else:
            log.eval_throughput.append(float("nan"))
            log.eval_dropped.append(float("nan"))
    if hp.keep_best and np.isfinite(best_score):
        return best, log
    return learner.online, log
