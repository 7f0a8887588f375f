"""Frame-level simulation of the primary channel and the secondary transmitters.

A frame has ``frame_slots`` slots. The primary user occupies the first ``busy``
of them; during that period every transmitter either harvests energy or
backscatters. In the idle remainder transmitters spend stored energy on active
transmission. Sensing data arrives at the end of the frame.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class InfeasibleAllocation(ValueError):
    """Raised when a slot allocation does not fit the frame or busy period."""


@dataclass(frozen=True)
class TransmitterParams:
    queue_capacity: int = 7
    energy_capacity: int = 5
    harvest_rate: int = 1
    active_energy: int = 1
    backscatter_rate: int = 1
    active_rate: int = 2
    success_backscatter: float = 0.9
    success_active: float = 0.9
    arrival_rate: float = 3.0

    def __post_init__(self):
        for name in ("queue_capacity", "energy_capacity", "harvest_rate",
                     "active_energy", "backscatter_rate", "active_rate", "arrival_rate"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        for name in ("success_backscatter", "success_active"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


@dataclass(frozen=True)
class RadioConfig:
    frame_slots: int = 7
    transmitters: tuple[TransmitterParams, ...] = (TransmitterParams(), TransmitterParams())
    busy_range: tuple[int, int] = (1, 6)
    # Deliver S * units instead of sampling a Bernoulli outcome per slot.
    expected_success: bool = False

    def __post_init__(self):
        if self.frame_slots <= 0:
            raise ValueError("frame_slots must be positive")
        if not self.transmitters:
            raise ValueError("at least one transmitter is required")
        lo, hi = self.busy_range
        if not 0 <= lo <= hi <= self.frame_slots:
            raise ValueError(f"busy_range {self.busy_range} must satisfy 0 <= lo <= hi <= frame_slots")

    @property
    def num_transmitters(self) -> int:
        return len(self.transmitters)


@dataclass(frozen=True)
class TransmitterState:
    queue: int = 0
    energy: int = 0


@dataclass(frozen=True)
class FrameOutcome:
    delivered_backscatter: tuple[float, ...]
    delivered_active: tuple[float, ...]
    dropped_arrivals: tuple[int, ...] = field(default=())

    @property
    def total_delivered(self) -> float:
        return sum(self.delivered_backscatter) + sum(self.delivered_active)


def sample_busy_slots(rng: np.random.Generator, cfg: RadioConfig) -> int:
    lo, hi = cfg.busy_range
    return int(rng.integers(lo, hi + 1))


def _delivered(units, success, rng, expected):
    if expected:
        return units * success
    if success >= 1.0 or success <= 0.0:
        return units if success >= 1.0 else 0
    return units if rng.random() < success else 0


def harvest_phase(state: TransmitterState, busy: int, backscatter_slots: int,
                  params: TransmitterParams) -> TransmitterState:
    """Charge the storage for every busy slot not spent backscattering."""
    if backscatter_slots > busy:
        raise InfeasibleAllocation(f"backscatter slots {backscatter_slots} exceed busy period {busy}")
    harvested = (busy - backscatter_slots) * params.harvest_rate
    return TransmitterState(state.queue, min(state.energy + harvested, params.energy_capacity))


def backscatter_phase(state: TransmitterState, backscatter_slots: int, params: TransmitterParams,
                      rng: np.random.Generator | None = None, expected: bool = False):
    """Drain the queue by backscattering; failed slots still drain it.

    Returns the new state and the number of data units received by the gateway.
    """
    queue = state.queue
    delivered = 0
    for _ in range(backscatter_slots):
        if queue <= 0:
            break
        sent = min(params.backscatter_rate, queue)
        queue -= sent
        delivered += _delivered(sent, params.success_backscatter, rng, expected)
    return TransmitterState(queue, state.energy), delivered


def active_phase(state: TransmitterState, active_slots: int, params: TransmitterParams,
                 rng: np.random.Generator | None = None, expected: bool = False):
    """Transmit slot by slot while both data and a full slot's energy remain."""
    queue, energy = state.queue, state.energy
    delivered = 0
    for _ in range(active_slots):
        if queue <= 0 or energy < params.active_energy:
            break
        sent = min(params.active_rate, queue)
        queue -= sent
        energy -= params.active_energy
        delivered += _delivered(sent, params.success_active, rng, expected)
    return TransmitterState(queue, energy), delivered


def arrival_phase(state: TransmitterState, rng: np.random.Generator, params: TransmitterParams):
    """Add a Poisson batch of data units; overflow beyond the queue capacity is dropped.

    Returns ``(new_state, dropped_units)``.
    """
    arrived = int(rng.poisson(params.arrival_rate)) if params.arrival_rate > 0 else 0
    queue = state.queue + arrived
    dropped = max(0, queue - params.queue_capacity)
    return TransmitterState(queue - dropped, state.energy), dropped


def check_allocation(busy: int, harvest: int, backscatter, active, cfg: RadioConfig) -> None:
    if len(backscatter) != cfg.num_transmitters or len(active) != cfg.num_transmitters:
        raise InfeasibleAllocation("allocation width does not match the number of transmitters")
    if harvest < 0 or min(backscatter) < 0 or min(active) < 0:
        raise InfeasibleAllocation("slot counts must be nonnegative")
    if harvest + sum(backscatter) > busy:
        raise InfeasibleAllocation("harvest + backscatter slots exceed the busy period")
    if harvest + sum(backscatter) + sum(active) > cfg.frame_slots:
        raise InfeasibleAllocation("allocation exceeds the frame length")


def step_radio(states, busy: int, harvest: int, backscatter, active, cfg: RadioConfig,
               rng: np.random.Generator):
    """Advance every transmitter through one frame.

    ``harvest`` only budgets slots for feasibility; each transmitter harvests in
    every busy slot it does not backscatter in.
    """
    check_allocation(busy, harvest, backscatter, active, cfg)
    new_states = []
    back_out, active_out, dropped = [], [], []
    for state, params, a, b in zip(states, cfg.transmitters, backscatter, active):
        state = harvest_phase(state, busy, a, params)
        state, d_b = backscatter_phase(state, a, params, rng, cfg.expected_success)
        state, d_a = active_phase(state, b, params, rng, cfg.expected_success)
        state, lost = arrival_phase(state, rng, params)
        new_states.append(state)
        back_out.append(d_b)
        active_out.append(d_a)
        dropped.append(lost)
    return new_states, FrameOutcome(tuple(back_out), tuple(active_out), tuple(dropped))
