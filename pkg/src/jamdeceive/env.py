"""Slotted IoT-device / reactive-jammer environment.

The device state is (battery energy, queued packets). Each slot the device picks
one of four operation modes; the jammer fires on any detected transmission with
probability ``p_attack``.

Slot order: pay energy cost, draw the attack, resolve the action, add arrivals
(overflow is dropped), clip the battery.  Every slot consumes exactly three
uniforms ``(u_attack, u_ambient, u_arrival)`` from the random source, whether or
not they are needed, so that scalar stepping and the batch simulators see the
same stream.
"""
from __future__ import annotations

import dataclasses
import enum
import itertools
from dataclasses import dataclass
from typing import NamedTuple

import numba
import numpy as np

__all__ = [
    "ActionKind",
    "ConfigError",
    "EnvConfig",
    "InfeasibleAction",
    "State",
    "StepOutcome",
    "Kernel",
    "all_states",
    "build_kernel",
    "encode_state",
    "enumerate_kernel",
    "feasible_actions",
    "feasible_mask",
    "sample_outcomes",
    "step",
    "validate_config",
]

PASSIVE, ACTIVE, DECEIVE_HARVEST, DECEIVE_BACKSCATTER = 0, 1, 2, 3
N_ACTIONS = 4


class ActionKind(enum.IntEnum):
    """Operation mode. The integer value doubles as the greedy tie-break order."""

    PassiveHarvest = PASSIVE
    ActiveTransmit = ACTIVE
    DeceiveHarvest = DECEIVE_HARVEST
    DeceiveBackscatter = DECEIVE_BACKSCATTER

    @property
    def transmits(self) -> bool:
        return self != ActionKind.PassiveHarvest


class ConfigError(ValueError):
    """Invalid environment or run configuration; ``field`` names the culprit."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class InfeasibleAction(ValueError):
    pass


class State(NamedTuple):
    energy: int
    queue: int


@dataclass(frozen=True)
class EnvConfig:
    e_max: int = 10
    d_max: int = 10
    cost_fake: int = 1
    cost_active: int = 3
    tx_packets: int = 3
    harvest_jam: int = 3
    bs_packets: int = 1
    p_attack: float = 0.6
    p_arrival: float = 0.5
    arrival_batch: int = 2
    p_ambient: float = 0.3
    ambient_gain: int = 1
    # physical units, informational only
    energy_unit_uJ: float = 60.0
    packet_bits: int = 300

    @property
    def n_states(self) -> int:
        return (self.e_max + 1) * (self.d_max + 1)

    def replace(self, **changes) -> "EnvConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "EnvConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigError(key, "unknown environment key")
        return validate_config(cls(**data))

    def _params(self) -> tuple:
        return (
            self.e_max, self.d_max, self.cost_fake, self.cost_active,
            self.tx_packets, self.harvest_jam, self.bs_packets,
            float(self.p_attack), float(self.p_arrival), self.arrival_batch,
            float(self.p_ambient), self.ambient_gain,
        )


_INT_FIELDS = ("e_max", "d_max", "cost_fake", "cost_active", "tx_packets",
               "harvest_jam", "bs_packets", "arrival_batch", "ambient_gain",
               "packet_bits")


def validate_config(cfg: EnvConfig) -> EnvConfig:
    """Return ``cfg`` unchanged if it is valid, else raise :class:`ConfigError`.

    Fields are checked in declaration order and the first violation is reported.
    """
    for f in dataclasses.fields(cfg):
        name, value = f.name, getattr(cfg, f.name)
        if isinstance(value, bool) or not isinstance(value, (int, float, np.integer, np.floating)):
            raise ConfigError(name, f"expected a number, got {value!r}")
        if name in _INT_FIELDS and int(value) != value:
            raise ConfigError(name, f"expected an integer, got {value!r}")
        if not np.isfinite(value):
            raise ConfigError(name, "must be finite")
        if name.startswith("p_"):
            if not 0.0 <= value <= 1.0:
                raise ConfigError(name, f"probability {value} outside [0, 1]")
        elif name in ("e_max", "d_max"):
            if value < 1:
                raise ConfigError(name, f"capacity must be >= 1, got {value}")
        elif value < 0:
            raise ConfigError(name, f"must be non-negative, got {value}")
        if name in ("cost_fake", "cost_active") and value > cfg.e_max:
            raise ConfigError(name, f"cost {value} exceeds battery capacity {cfg.e_max}")
    return cfg


def feasible_actions(s: State, cfg: EnvConfig) -> frozenset[ActionKind]:
    energy, queue = s
    acts = {ActionKind.PassiveHarvest}
    if energy >= cfg.cost_active and queue >= 1:
        acts.add(ActionKind.ActiveTransmit)
    if energy >= cfg.cost_fake:
        acts.add(ActionKind.DeceiveHarvest)
        if queue >= 1:
            acts.add(ActionKind.DeceiveBackscatter)
    return frozenset(acts)


def all_states(cfg: EnvConfig) -> list[State]:
    """States in index order: ``index = energy * (d_max + 1) + queue``."""
    return [State(e, q) for e in range(cfg.e_max + 1) for q in range(cfg.d_max + 1)]


def state_index(s: State, cfg: EnvConfig) -> int:
    return s[0] * (cfg.d_max + 1) + s[1]


def feasible_mask(cfg: EnvConfig, allowed=None) -> np.ndarray:
    """Boolean array (e_max+1, d_max+1, 4); ``allowed`` further restricts actions."""
    e = np.arange(cfg.e_max + 1)[:, None]
    q = np.arange(cfg.d_max + 1)[None, :]
    mask = np.zeros((cfg.e_max + 1, cfg.d_max + 1, N_ACTIONS), dtype=bool)
    mask[..., PASSIVE] = True
    mask[..., ACTIVE] = (e >= cfg.cost_active) & (q >= 1)
    mask[..., DECEIVE_HARVEST] = np.broadcast_to(e >= cfg.cost_fake, mask.shape[:2])
    mask[..., DECEIVE_BACKSCATTER] = (e >= cfg.cost_fake) & (q >= 1)
    if allowed is not None:
        keep = np.zeros(N_ACTIONS, dtype=bool)
        keep[[int(a) for a in allowed]] = True
        mask &= keep
    return mask


def encode_state(s, cfg: EnvConfig) -> np.ndarray:
    """Scale (energy, queue) into [0, 1]^2; accepts one state or an (n, 2) array."""
    arr = np.asarray(s, dtype=np.float64)
    return arr / np.array([cfg.e_max, cfg.d_max], dtype=np.float64)


@numba.njit(cache=True)
def _slot(energy, queue, action, u_attack, u_ambient, u_arrival, params):
    (e_max, d_max, cost_fake, cost_active, tx_packets, harvest_jam, bs_packets,
     p_attack, p_arrival, arrival_batch, p_ambient, ambient_gain) = params
    delivered = 0
    dropped = 0
    ambient = False
    passive = False

    if action == 1:
        energy -= cost_active
    elif action != 0:
        energy -= cost_fake
    attacked = action != 0 and u_attack < p_attack

    if action == 1:
        n = min(tx_packets, queue)
        queue -= n
        if attacked:
            dropped += n
        else:
            delivered += n
    elif action == 2:
        if attacked:
            energy += harvest_jam
        else:
            passive = True
    elif action == 3:
        if attacked:
            n = min(bs_packets, queue)
            queue -= n
            delivered += n
        else:
            passive = True
    else:
        passive = True

    if passive and u_ambient < p_ambient:
        energy += ambient_gain
        ambient = True

    arrival = u_arrival < p_arrival
    if arrival:
        queue += arrival_batch
        if queue > d_max:
            dropped += queue - d_max
            queue = d_max
    if energy > e_max:
        energy = e_max
    return energy, queue, delivered, dropped, attacked, arrival, ambient


@dataclass(frozen=True)
class StepOutcome:
    next: State
    delivered: int
    dropped: int
    attacked: bool
    arrival: bool
    ambient: bool


def _check_feasible(s: State, a, cfg: EnvConfig) -> ActionKind:
    a = ActionKind(a)
    if not (0 <= s[0] <= cfg.e_max and 0 <= s[1] <= cfg.d_max):
        raise ValueError(f"state {tuple(s)} outside [0, {cfg.e_max}] x [0, {cfg.d_max}]")
    if a not in feasible_actions(s, cfg):
        raise InfeasibleAction(f"{a.name} is not feasible in state {tuple(s)}")
    return a


def step(s: State, a: ActionKind, cfg: EnvConfig, rng: np.random.Generator) -> StepOutcome:
    """Advance one slot. Draws exactly three uniforms from ``rng``."""
    a = _check_feasible(s, a, cfg)
    u = rng.random(3)
    e, q, delivered, dropped, attacked, arrival, ambient = _slot(
        int(s[0]), int(s[1]), int(a), u[0], u[1], u[2], cfg._params())
    return StepOutcome(State(int(e), int(q)), int(delivered), int(dropped),
                       bool(attacked), bool(arrival), bool(ambient))


@numba.njit(cache=True)
def _repeat_slot(energy, queue, action, u, params):
    out = np.empty((u.shape[0], 4), dtype=np.int64)
    for i in range(u.shape[0]):
        e, q, dl, dr, _, _, _ = _slot(energy, queue, action, u[i, 0], u[i, 1], u[i, 2], params)
        out[i, 0] = e
        out[i, 1] = q
        out[i, 2] = dl
        out[i, 3] = dr
    return out


def sample_outcomes(s: State, a: ActionKind, cfg: EnvConfig, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` independent slots from the same ``(s, a)``, as rows ``(energy, queue, delivered, dropped)``.

    Consumes ``rng`` exactly like ``n`` calls of :func:`step`.
    """
    a = _check_feasible(s, a, cfg)
    u = rng.random((n, 3))
    return _repeat_slot(int(s[0]), int(s[1]), int(a), u, cfg._params())


def enumerate_kernel(s: State, a: ActionKind, cfg: EnvConfig) -> list[tuple[float, State, int, int]]:
    """All outcome branches of one slot as ``(prob, next, delivered, dropped)``.

    Written branch by branch, independently of the sampler, so the two can be
    checked against each other. Zero-probability branches are omitted and
    branches with identical outcomes are merged.
    """
    a = _check_feasible(s, a, cfg)
    energy, queue = s
    cost = {ActionKind.PassiveHarvest: 0, ActionKind.ActiveTransmit: cfg.cost_active}.get(a, cfg.cost_fake)

    attack_branches = [(True, cfg.p_attack), (False, 1.0 - cfg.p_attack)] if a.transmits else [(False, 1.0)]
    arrival_branches = [(True, cfg.p_arrival), (False, 1.0 - cfg.p_arrival)]
    merged: dict[tuple[State, int, int], float] = {}
    for (attacked, pa), (arrived, pr) in itertools.product(attack_branches, arrival_branches):
        e, q, delivered, dropped = energy - cost, queue, 0, 0
        harvesting = False
        if a == ActionKind.ActiveTransmit:
            sent = min(cfg.tx_packets, q)
            q -= sent
            if attacked:
                dropped = sent
            else:
                delivered = sent
        elif a == ActionKind.DeceiveHarvest and attacked:
            e += cfg.harvest_jam
        elif a == ActionKind.DeceiveBackscatter and attacked:
            delivered = min(cfg.bs_packets, q)
            q -= delivered
        else:
            harvesting = True
        ambient_branches = [(cfg.ambient_gain, cfg.p_ambient), (0, 1.0 - cfg.p_ambient)] if harvesting else [(0, 1.0)]
        if arrived:
            overflow = max(0, q + cfg.arrival_batch - cfg.d_max)
            q = q + cfg.arrival_batch - overflow
            dropped += overflow
        for gain, pg in ambient_branches:
            prob = pa * pr * pg
            if prob <= 0.0:
                continue
            key = (State(min(e + gain, cfg.e_max), q), delivered, dropped)
            merged[key] = merged.get(key, 0.0) + prob
    return [(p, nxt, dl, dr) for (nxt, dl, dr), p in merged.items()]


@dataclass(frozen=True)
class Kernel:
    """Dense transition model over flattened states.

    ``P[s, a, s']`` transition probabilities, ``R[s, a]`` expected delivered
    packets, ``D[s, a]`` expected drops; infeasible rows are zero and flagged
    false in ``mask`` (shape ``(n_states, 4)``).
    """

    P: np.ndarray
    R: np.ndarray
    D: np.ndarray
    mask: np.ndarray


def build_kernel(cfg: EnvConfig) -> Kernel:
    n = cfg.n_states
    P = np.zeros((n, N_ACTIONS, n))
    R = np.zeros((n, N_ACTIONS))
    D = np.zeros((n, N_ACTIONS))
    mask = feasible_mask(cfg).reshape(n, N_ACTIONS)
    for i, s in enumerate(all_states(cfg)):
        for a in feasible_actions(s, cfg):
            for p, nxt, delivered, dropped in enumerate_kernel(s, a, cfg):
                P[i, a, state_index(nxt, cfg)] += p
                R[i, a] += p * delivered
                D[i, a] += p * dropped
    return Kernel(P, R, D, mask)


def kernel_rows(cfg: EnvConfig):
    """Rows ``(energy, queue, action, prob, next_energy, next_queue, delivered, dropped)``."""
    for s in all_states(cfg):
        for a in sorted(feasible_actions(s, cfg)):
            for p, nxt, delivered, dropped in enumerate_kernel(s, a, cfg):
                yield (s.energy, s.queue, a.name, p, nxt.energy, nxt.queue, delivered, dropped)
