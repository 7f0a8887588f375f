"""Brute-force and Monte Carlo reference computations.

These deliberately avoid the code paths they check: the race simulator never
touches the closed-form attack probability, and the enumerators use
``itertools.product`` instead of the table builder.
"""
from __future__ import annotations

import itertools

import numpy as np


def double_spend_race(q: float, confirmations: int, samples: int, rng: np.random.Generator,
                      give_up: int = 40, chunk: int = 250_000) -> float:
    """Fraction of simulated races the attacker wins.

    Blocks are found one at a time, by the attacker with probability ``q``. The
    attacker wins once the honest chain holds ``confirmations`` blocks and the
    attacker's chain is at least as long (it starts with one pre-mined block,
    so a tie suffices). A race is abandoned once the attacker trails by
    ``give_up`` blocks.
    """
    wins = 0
    left = samples
    while left:
        size = min(chunk, left)
        left -= size
        honest = np.zeros(size, dtype=np.int64)
        attacker = np.zeros(size, dtype=np.int64)
        live = np.arange(size)
        while live.size:
            found = rng.random(live.size) < q
            attacker[live] += found
            honest[live] += ~found
            h, a = honest[live], attacker[live]
            won = (h >= confirmations) & (a >= h)
            lost = (h >= confirmations) & (h - a >= give_up)
            wins += int(won.sum())
            live = live[~(won | lost)]
    return wins / samples


def brute_force_allocations(frame_slots: int, transmitters: int):
    """Every ``(harvest, backscatter..., active...)`` tuple fitting the frame."""
    width = 1 + 2 * transmitters
    return [t for t in itertools.product(range(frame_slots + 1), repeat=width) if sum(t) <= frame_slots]


def brute_force_feasible(frame_slots: int, transmitters: int, busy: int, chains: int, fees: int):
    """Feasible ``(allocation, chain, fee)`` triples for a given busy count."""
    out = []
    for alloc in brute_force_allocations(frame_slots, transmitters):
        if alloc[0] + sum(alloc[1:1 + transmitters]) <= busy:
            out.extend((alloc, k, f) for k in range(chains) for f in range(fees))
    return out


def value_iteration(rewards: np.ndarray, transitions: np.ndarray, gamma: float,
                    tol: float = 1e-12) -> np.ndarray:
    """Optimal action values of a finite MDP.

    ``rewards[s, a]`` is the expected reward, ``transitions[s, a, s']`` the
    transition probability.
    """
    q = np.zeros_like(rewards, dtype=float)
    while True:
        new = rewards + gamma * transitions @ q.max(axis=1)
        if np.max(np.abs(new - q)) < tol:
            return new
        q = new
