"""Mempools, greedy block building and the double-spend settlement of the gateway transaction."""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ChainConfig:
    num_chains: int = 3
    mempool_capacity: int = 50
    block_capacity: int = 30
    background_count: int = 5
    background_size_max: int = 10
    fee_min: float = 0.01
    fee_max: float = 0.8
    fee_intervals: int = 4
    # Hash share of the attacker on each chain; a single value applies to all.
    attacker_share: tuple[float, ...] = (0.05,)
    confirmation_depth: int = 2
    reward_per_unit: float = 1.0
    # Position of the quoted fee inside its interval, 0 = lower edge, 1 = upper edge.
    fee_position: float = 0.2
    fee_on_submit: bool = False
    refund_on_attack: bool = False

    def __post_init__(self):
        if self.num_chains < 1:
            raise ValueError("num_chains must be >= 1")
        if not 0 < self.block_capacity <= self.mempool_capacity:
            raise ValueError("need 0 < block_capacity <= mempool_capacity")
        if not self.fee_min < self.fee_max:
            raise ValueError("fee_min must be below fee_max")
        if self.fee_intervals < 1:
            raise ValueError("fee_intervals must be >= 1")
        if self.background_count < 0 or self.background_size_max < 1:
            raise ValueError("background_count >= 0 and background_size_max >= 1 required")
        if len(self.attacker_share) not in (1, self.num_chains):
            raise ValueError("attacker_share needs one value or one per chain")
        if any(not 0.0 <= q <= 1.0 for q in self.attacker_share):
            raise ValueError("attacker_share values must lie in [0, 1]")
        if self.confirmation_depth < 1:
            raise ValueError("confirmation_depth must be >= 1")
        if not 0.0 <= self.fee_position <= 1.0:
            raise ValueError("fee_position must lie in [0, 1]")

    def share(self, chain: int) -> float:
        shares = self.attacker_share
        return shares[0] if len(shares) == 1 else shares[chain]

    @property
    def interval_width(self) -> float:
        return (self.fee_max - self.fee_min) / self.fee_intervals


@dataclass(frozen=True, slots=True)
class Transaction:
    id: int
    size: float
    fee_rate: float
    arrival_seq: int
    is_gateway: bool = False


@dataclass(frozen=True)
class SettleOutcome:
    included: bool = False
    attacked: bool = False
    fee_charged: float = 0.0
    stored_units: float = 0.0


class Mempool:
    """Pending transactions of one chain, bounded by ``capacity`` data units."""

    def __init__(self, capacity: float):
        self.capacity = capacity
        self.pending: list[Transaction] = []
        self.total_size = 0.0
        self._seq = itertools.count()

    def __len__(self):
        return len(self.pending)

    def __iter__(self):
        return iter(self.pending)

    def __contains__(self, tx):
        return tx in self.pending

    def next_seq(self) -> int:
        return next(self._seq)

    def make_transaction(self, size, fee_rate, is_gateway=False) -> Transaction:
        seq = self.next_seq()
        return Transaction(seq, size, fee_rate, seq, is_gateway)

    def remove(self, txs) -> None:
        gone = {tx.id for tx in txs}
        if not gone:
            return
        self.pending = [tx for tx in self.pending if tx.id not in gone]
        self.total_size = sum(tx.size for tx in self.pending)


def submit_transaction(pool: Mempool, tx: Transaction) -> bool:
    """Add ``tx`` to the pool, evicting cheaper transactions if it does not fit.

    Eviction runs over non-gateway transactions by ascending fee rate, oldest
    first on ties. A non-gateway ``tx`` takes part in that order itself, so it
    never displaces transactions paying more than it does. Returns ``False``
    (pool untouched) when ``tx`` cannot be admitted.
    """
    if tx.size > pool.capacity:
        return False
    overflow = pool.total_size + tx.size - pool.capacity
    if overflow <= 1e-12:
        pool.pending.append(tx)
        pool.total_size += tx.size
        return True

    candidates = [t for t in pool.pending if not t.is_gateway]
    if not tx.is_gateway:
        candidates.append(tx)
    candidates.sort(key=lambda t: (t.fee_rate, t.arrival_seq))
    victims = []
    freed = 0.0
    for cand in candidates:
        if freed >= overflow - 1e-12:
            break
        if cand is tx:
            return False
        victims.append(cand)
        freed += cand.size
    if freed < overflow - 1e-12:
        return False
    pool.remove(victims)
    pool.pending.append(tx)
    pool.total_size += tx.size
    return True


def background_arrivals(pool: Mempool, rng: np.random.Generator, cfg: ChainConfig) -> Mempool:
    """Submit ``background_count`` transactions with uniform sizes and fee rates."""
    z = cfg.background_count
    if z == 0:
        return pool
    sizes = rng.integers(1, cfg.background_size_max + 1, size=z)
    fees = rng.uniform(cfg.fee_min, cfg.fee_max, size=z)
    for size, fee in zip(sizes.tolist(), fees.tolist()):
        submit_transaction(pool, pool.make_transaction(size, fee))
    return pool


def mine_block(pool: Mempool, cfg: ChainConfig) -> list[Transaction]:
    """Fill one block greedily by fee rate and remove its transactions from the pool.

    Transactions that do not fit the remaining space are skipped, and the scan
    continues with cheaper ones.
    """
    room = cfg.block_capacity
    block = []
    for tx in sorted(pool.pending, key=lambda t: (-t.fee_rate, t.arrival_seq)):
        if tx.size <= room + 1e-12:
            block.append(tx)
            room -= tx.size
    pool.remove(block)
    return block


@functools.lru_cache(maxsize=256)
def attack_probability(q: float, confirmations: int) -> float:
    """Probability that an attacker with hash share ``q`` reverses a transaction
    buried under ``confirmations`` honest blocks.
    """
    p = 1.0 - q
    if q >= p:
        return 1.0
    n = confirmations
    total = 0.0
    for m in range(n + 1):
        total += math.comb(m + n - 1, m) * (p ** n * q ** m - p ** m * q ** n)
    return min(1.0, max(0.0, 1.0 - total))


def settle(block, gateway_tx: Transaction | None, q: float, confirmations: int,
           rng: np.random.Generator, cfg: ChainConfig | None = None) -> SettleOutcome:
    """Resolve inclusion, attack and fee for the gateway transaction of this frame.

    One uniform variate is consumed per call, whether or not it is needed, so that
    runs differing only in ``q`` stay on the same random stream.
    """
    u = rng.random()
    cfg = cfg or ChainConfig()
    if gateway_tx is None:
        return SettleOutcome()
    included = any(tx.id == gateway_tx.id for tx in block)
    cost = gateway_tx.size * gateway_tx.fee_rate
    if not included:
        return SettleOutcome(False, False, cost if cfg.fee_on_submit else 0.0, 0.0)
    attacked = bool(u < attack_probability(q, confirmations))
    fee = 0.0 if (attacked and cfg.refund_on_attack) else cost
    return SettleOutcome(True, attacked, fee, 0.0 if attacked else gateway_tx.size)


def fee_interval(fee_rate: float, cfg: ChainConfig) -> int:
    """Zero-based interval holding ``fee_rate``; the top edge belongs to the last interval."""
    i = int(math.floor((fee_rate - cfg.fee_min) / cfg.interval_width))
    return min(max(i, 0), cfg.fee_intervals - 1)


def observe_mempool(pool: Mempool, cfg: ChainConfig) -> np.ndarray:
    hist = np.zeros(cfg.fee_intervals)
    for tx in pool.pending:
        hist[fee_interval(tx.fee_rate, cfg)] += tx.size
    return hist
