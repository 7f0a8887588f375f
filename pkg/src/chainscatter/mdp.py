"""The gateway's decision problem: states, the static action grid, and one-frame steps."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .chain import (ChainConfig, Mempool, Transaction, background_arrivals, mine_block,
                    observe_mempool, settle, submit_transaction)
from .radio import (InfeasibleAllocation, RadioConfig, TransmitterState, sample_busy_slots,
                    step_radio)


class ConfigTooLarge(ValueError):
    """The action grid would exceed the configured size limit."""


@dataclass(frozen=True)
class NetworkState:
    busy: int
    transmitters: tuple[TransmitterState, ...]
    mempools: np.ndarray = field(compare=False)  # (K, M) data units per fee interval

    def key(self) -> tuple:
        """Hashable form used by tabular learners."""
        tx = tuple(v for t in self.transmitters for v in (t.queue, t.energy))
        return (self.busy,) + tx + tuple(self.mempools.ravel().tolist())


@dataclass(frozen=True)
class Action:
    harvest: int
    backscatter: tuple[int, ...]
    active: tuple[int, ...]
    chain: int       # zero-based chain index
    fee_index: int   # zero-based fee interval

    @property
    def allocation(self) -> tuple[int, ...]:
        return (self.harvest,) + self.backscatter + self.active


@dataclass(frozen=True)
class StepResult:
    next_state: NetworkState
    reward: float
    info: dict


def _compositions(width: int, budget: int):
    """Nonnegative integer tuples of ``width`` entries summing to at most ``budget``, lexicographic."""
    if width == 0:
        yield ()
        return
    for head in range(budget + 1):
        for tail in _compositions(width - 1, budget - head):
            yield (head,) + tail


class ActionTable:
    """Dense enumeration of every allocation with harvest + backscatter + active <= Y,
    crossed with chain and fee interval.

    Index layout is ``(allocation * K + chain) * M + fee`` with allocations in
    lexicographic order of ``(harvest, backscatter..., active...)``.
    """

    def __init__(self, radio: RadioConfig, chain: ChainConfig, max_size: int = 10**6):
        n = radio.num_transmitters
        k, m = chain.num_chains, chain.fee_intervals
        n_alloc = math.comb(radio.frame_slots + 2 * n + 1, 2 * n + 1)
        if n_alloc * k * m > max_size:
            raise ConfigTooLarge(f"action table would hold {n_alloc * k * m} entries (limit {max_size})")
        allocs = np.array(list(_compositions(2 * n + 1, radio.frame_slots)), dtype=np.int64)
        self.num_transmitters = n
        self.num_chains = k
        self.fee_intervals = m
        self.frame_slots = radio.frame_slots
        self.allocations = allocs
        self._alloc_index = {tuple(row): i for i, row in enumerate(allocs.tolist())}

        reps = k * m
        self.harvest = np.repeat(allocs[:, 0], reps)
        self.backscatter = np.repeat(allocs[:, 1:1 + n], reps, axis=0)
        self.active = np.repeat(allocs[:, 1 + n:], reps, axis=0)
        self.chain = np.tile(np.repeat(np.arange(k), m), len(allocs))
        self.fee = np.tile(np.arange(m), len(allocs) * k)
        self.size = len(allocs) * reps
        self._busy_use = self.harvest + self.backscatter.sum(axis=1)
        self._frame_use = self._busy_use + self.active.sum(axis=1)
        self._masks: dict[int, np.ndarray] = {}

    def __len__(self):
        return self.size

    def action(self, index: int) -> Action:
        return Action(int(self.harvest[index]), tuple(self.backscatter[index].tolist()),
                      tuple(self.active[index].tolist()), int(self.chain[index]), int(self.fee[index]))

    def index_of(self, allocation, chain: int = 0, fee_index: int = 0) -> int:
        a = self._alloc_index[tuple(int(v) for v in allocation)]
        return (a * self.num_chains + chain) * self.fee_intervals + fee_index

    def mask(self, busy: int) -> np.ndarray:
        cached = self._masks.get(busy)
        if cached is None:
            cached = (self._busy_use <= busy) & (self._frame_use <= self.frame_slots)
            cached.flags.writeable = False
            self._masks[busy] = cached
        return cached

    def feasible_allocations(self, busy: int) -> np.ndarray:
        """Row indices into ``allocations`` that respect the busy-period budget."""
        use = self.allocations[:, 0] + self.allocations[:, 1:1 + self.num_transmitters].sum(axis=1)
        return np.flatnonzero(use <= busy)


def build_action_table(radio: RadioConfig, chain: ChainConfig, max_size: int = 10**6) -> ActionTable:
    return ActionTable(radio, chain, max_size)


def feasible_mask(state: NetworkState, table: ActionTable) -> np.ndarray:
    return table.mask(state.busy)


def fee_rate(fee_index: int, cfg: ChainConfig, position: float | None = None) -> float:
    """Quoted fee rate for zero-based interval ``fee_index``."""
    eta = cfg.fee_position if position is None else position
    return cfg.fee_min + (fee_index + eta) * cfg.interval_width


def encode_state(state: NetworkState, radio: RadioConfig, chain: ChainConfig) -> np.ndarray:
    parts = [state.busy / radio.frame_slots]
    for t, p in zip(state.transmitters, radio.transmitters):
        parts.append(t.queue / p.queue_capacity if p.queue_capacity else 0.0)
        parts.append(t.energy / p.energy_capacity if p.energy_capacity else 0.0)
    head = np.array(parts)
    return np.concatenate([head, state.mempools.ravel() / chain.mempool_capacity])


def state_width(radio: RadioConfig, chain: ChainConfig) -> int:
    return 1 + 2 * radio.num_transmitters + chain.num_chains * chain.fee_intervals


class Environment:
    """Gym-style wrapper around one radio network and ``K`` chains.

    Randomness is split over four generators so that, for instance, changing the
    attacker share leaves the radio and mempool trajectories untouched.
    """

    def __init__(self, radio: RadioConfig, chain: ChainConfig, rng: np.random.Generator,
                 table: ActionTable | None = None):
        self.radio = radio
        self.chain = chain
        self.table = table or ActionTable(radio, chain)
        streams = rng.spawn(4)
        self._busy_rng, self._radio_rng, self._chain_rng, self._attack_rng = streams
        self.state: NetworkState | None = None

    def reset(self) -> NetworkState:
        self.pools = [Mempool(self.chain.mempool_capacity) for _ in range(self.chain.num_chains)]
        self.last_blocks: list[list[Transaction]] = [[] for _ in range(self.chain.num_chains)]
        states = tuple(TransmitterState() for _ in self.radio.transmitters)
        self.state = self._observe(states)
        return self.state

    def _observe(self, transmitters) -> NetworkState:
        busy = sample_busy_slots(self._busy_rng, self.radio)
        hists = np.stack([observe_mempool(p, self.chain) for p in self.pools])
        return NetworkState(busy, tuple(transmitters), hists)

    def encode(self, state: NetworkState | None = None) -> np.ndarray:
        return encode_state(state or self.state, self.radio, self.chain)

    def mask(self) -> np.ndarray:
        return self.table.mask(self.state.busy)

    def step(self, action) -> StepResult:
        """Run one frame. ``action`` is a table index or an :class:`Action`."""
        if not isinstance(action, Action):
            action = self.table.action(int(action))
        state, cfg = self.state, self.chain
        if not (0 <= action.chain < cfg.num_chains and 0 <= action.fee_index < cfg.fee_intervals):
            raise InfeasibleAllocation(f"chain/fee index out of range: {action.chain}, {action.fee_index}")
        transmitters, outcome = step_radio(state.transmitters, state.busy, action.harvest,
                                           action.backscatter, action.active, self.radio,
                                           self._radio_rng)
        delivered = outcome.total_delivered

        gateway_tx = None
        target = self.pools[action.chain]
        if delivered > 0:
            tx = target.make_transaction(delivered, fee_rate(action.fee_index, cfg), is_gateway=True)
            if submit_transaction(target, tx):
                gateway_tx = tx
        for pool in self.pools:
            background_arrivals(pool, self._chain_rng, cfg)
        blocks = [mine_block(pool, cfg) for pool in self.pools]
        self.last_blocks = blocks
        result = settle(blocks[action.chain], gateway_tx, cfg.share(action.chain),
                        cfg.confirmation_depth, self._attack_rng, cfg)
        if gateway_tx is not None and not result.included:
            target.remove([gateway_tx])

        reward = cfg.reward_per_unit * result.stored_units - result.fee_charged
        self.state = self._observe(transmitters)
        info = {
            "delivered": delivered,
            "stored": result.stored_units,
            "fee_charged": result.fee_charged,
            "included": result.included,
            "attacked": result.attacked,
            "dropped_arrivals": sum(outcome.dropped_arrivals),
            "outcome": outcome,
        }
        return StepResult(self.state, reward, info)
