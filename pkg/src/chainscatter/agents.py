"""Decision policies for the gateway: D3QN, tabular Q-learning and three heuristics."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .chain import ChainConfig, fee_interval
from .mdp import ActionTable, NetworkState
from .neural import Adam, QNetwork, sync_target


class EmptyMask(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    episodes: int = 3000
    steps_per_episode: int = 200
    batch_size: int = 32
    gamma: float = 0.9
    epsilon_start: float = 0.9
    epsilon_end: float = 0.0
    target_sync: int = 10000
    learning_rate: float = 1e-3
    replay_capacity: int = 50000
    hidden: tuple[int, ...] = (32, 32, 32)
    q_learning_rate: float = 0.1
    checkpoint_every: int = 0

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        for eps in (self.epsilon_start, self.epsilon_end):
            if not 0.0 <= eps <= 1.0:
                raise ValueError("epsilon values must lie in [0, 1]")
        if self.batch_size > self.replay_capacity:
            raise ValueError("batch_size cannot exceed replay_capacity")
        if min(self.episodes, self.steps_per_episode) < 0 or self.batch_size < 1 or self.target_sync < 1:
            raise ValueError("episode/step counts must be nonnegative, batch and sync positive")


class ReplayMemory:
    """Fixed-capacity ring buffer of ``(s, a, r, s', busy')`` experiences.

    ``busy'`` is the busy-slot count of ``s'``; it selects the feasibility mask used
    when bootstrapping from ``s'``.
    """

    def __init__(self, capacity: int, state_width: int):
        self.capacity = capacity
        self.states = np.zeros((capacity, state_width))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_width))
        self.next_busy = np.zeros(capacity, dtype=np.int64)
        self.size = 0
        self._head = 0
        self.pushed = 0

    def __len__(self):
        return self.size

    def push(self, s, a, r, s_next, busy_next=0) -> None:
        i = self._head
        self.states[i] = s
        self.actions[i] = a
        self.rewards[i] = r
        self.next_states[i] = s_next
        self.next_busy[i] = busy_next
        self._head = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        self.pushed += 1

    def ordered(self) -> np.ndarray:
        """Slot indices from oldest to newest."""
        start = self._head if self.size == self.capacity else 0
        return (start + np.arange(self.size)) % self.capacity

    def sample(self, batch_size: int, rng: np.random.Generator):
        idx = rng.integers(0, self.size, size=batch_size)
        return (self.states[idx], self.actions[idx], self.rewards[idx],
                self.next_states[idx], self.next_busy[idx])


def epsilon_at(step: float, total: float, start: float = 0.9, end: float = 0.0) -> float:
    if total <= 0:
        return start
    frac = min(max(step / total, 0.0), 1.0)
    return start + (end - start) * frac


def select_action(q_values, mask, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy over feasible indices; ties go to the lowest index."""
    mask = np.asarray(mask, dtype=bool)
    if epsilon > 0 and rng.random() < epsilon:
        feasible = np.flatnonzero(mask)
        if feasible.size == 0:
            raise EmptyMask("no feasible action")
        return int(feasible[rng.integers(feasible.size)])
    if not mask.any():
        raise EmptyMask("no feasible action")
    return int(np.argmax(np.where(mask, q_values, -np.inf)))


def double_q_targets(rewards, next_states, next_masks, online: QNetwork, target: QNetwork,
                     gamma: float) -> np.ndarray:
    """``r + gamma * Q_target(s', argmax_a Q_online(s', a))`` with infeasible ``a`` excluded."""
    rewards = np.asarray(rewards, dtype=float)
    if gamma == 0.0:
        return rewards.copy()
    if target is online:
        q = online.forward(next_states)
        return rewards + gamma * np.where(next_masks, q, -np.inf).max(axis=1)
    best = online.greedy(next_states, next_masks)
    return rewards + gamma * target.q_selected(next_states, best)


class D3QNAgent:
    """Online/target dueling networks with replay and Adam."""

    def __init__(self, state_width: int, table: ActionTable, cfg: TrainConfig,
                 rng: np.random.Generator):
        self.table = table
        self.cfg = cfg
        self.rng = rng
        self.online = QNetwork(state_width, len(table), cfg.hidden, rng=rng)
        self.target = self.online.copy()
        self.optimizer = Adam(self.online.params, cfg.learning_rate)
        self.memory = ReplayMemory(cfg.replay_capacity, state_width)
        self.train_steps = 0
        self._busy_masks = np.stack([table.mask(b) for b in range(table.frame_slots + 1)])

    def act(self, encoded, mask, epsilon: float) -> int:
        q = self.online.forward(encoded) if epsilon < 1.0 else None
        return select_action(q, mask, epsilon, self.rng)

    def remember(self, s, a, r, s_next, busy_next) -> None:
        self.memory.push(s, a, r, s_next, busy_next)

    def train_step(self, batch=None) -> float | None:
        """One Adam step on a replay mini-batch; returns the batch-mean loss."""
        if batch is None:
            if len(self.memory) < self.cfg.batch_size:
                return None
            batch = self.memory.sample(self.cfg.batch_size, self.rng)
        s, a, r, s_next, busy_next = batch
        y = double_q_targets(r, s_next, self._busy_masks[busy_next], self.online, self.target,
                             self.cfg.gamma)
        grads, loss = self.online.backward(s, a, y)
        self.optimizer.step(self.online.params, grads)
        self.train_steps += 1
        if self.train_steps % self.cfg.target_sync == 0:
            sync_target(self.online, self.target)
        return loss


def q_learning_update(table, s, a: int, r: float, s_next, alpha: float, gamma: float,
                      mask_next=None):
    """``Q(s,a) <- (1-alpha) Q(s,a) + alpha (r + gamma max_feasible Q(s',.))``.

    ``table`` maps a state key to a 1-D array of action values; unseen states read as 0.
    """
    row_next = table.get(s_next)
    if row_next is None:
        best = 0.0
    elif mask_next is None:
        best = float(row_next.max())
    else:
        best = float(np.max(np.where(mask_next, row_next, -np.inf)))
    row = table[s]
    row[a] = (1.0 - alpha) * row[a] + alpha * (r + gamma * best)
    return table


class QTable(defaultdict):
    """State key -> action-value row, zero-initialised on first access."""

    def __init__(self, n_actions: int):
        super().__init__(lambda: np.zeros(n_actions))
        self.n_actions = n_actions

    def get(self, key, default=None):
        return dict.get(self, key, default)


class QLearningAgent:
    def __init__(self, table: ActionTable, cfg: TrainConfig, rng: np.random.Generator):
        self.table = table
        self.cfg = cfg
        self.rng = rng
        self.q = QTable(len(table))

    def act(self, key, mask, epsilon: float) -> int:
        row = self.q.get(key)
        if row is None:
            row = np.zeros(len(self.table))
        return select_action(row, mask, epsilon, self.rng)

    def update(self, key, a, r, key_next, mask_next) -> None:
        q_learning_update(self.q, key, a, r, key_next, self.cfg.q_learning_rate, self.cfg.gamma,
                          mask_next)


def fee_estimate_last_block(block, cfg: ChainConfig) -> int:
    """Interval (zero-based) of the size-weighted mean fee rate in ``block``; 0 if empty."""
    total = sum(tx.size for tx in block)
    if total <= 0:
        return 0
    mean = sum(tx.size * tx.fee_rate for tx in block) / total
    return fee_interval(mean, cfg)


def _split(total: int, parts: int) -> list[int]:
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def htt_policy(state: NetworkState, table: ActionTable, fee_index: int, chain: int = 0) -> int:
    """Harvest through the whole busy period, share the idle slots equally."""
    n = table.num_transmitters
    active = _split(table.frame_slots - state.busy, n)
    return table.index_of([state.busy] + [0] * n + active, chain, fee_index)


def backscatter_policy(state: NetworkState, table: ActionTable, fee_index: int, chain: int = 0) -> int:
    """Backscatter in every busy slot, shared equally; never transmit actively."""
    n = table.num_transmitters
    return table.index_of([0] + _split(state.busy, n) + [0] * n, chain, fee_index)


def random_policy(state: NetworkState, table: ActionTable, rng: np.random.Generator,
                  last_blocks, cfg: ChainConfig) -> int:
    """Uniform feasible allocation, uniform chain, fee from that chain's last block."""
    feasible = table.feasible_allocations(state.busy)
    alloc = table.allocations[feasible[rng.integers(feasible.size)]]
    chain = int(rng.integers(table.num_chains))
    return table.index_of(alloc, chain, fee_estimate_last_block(last_blocks[chain], cfg))
