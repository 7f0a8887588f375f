"""Fast invariant battery run by ``chainscatter selfcheck``."""
from __future__ import annotations

import math
import time

import numpy as np

from .agents import double_q_targets, random_policy
from .chain import attack_probability
from .config import paper_preset
from .mdp import ActionTable, Environment
from .neural import QNetwork, grad_check
from .oracles import brute_force_allocations, brute_force_feasible, double_spend_race
from .radio import RadioConfig, TransmitterParams
from .chain import ChainConfig


def check_attack_probability(rng):
    assert all(attack_probability(0.0, n) == 0.0 for n in (1, 2, 6))
    assert attack_probability(0.5, 2) == 1.0 and attack_probability(0.7, 3) == 1.0
    assert abs(attack_probability(0.1, 2) - 0.056) <= 1e-9
    for q, n in ((0.1, 2), (0.2, 1)):
        mc = double_spend_race(q, n, 200_000, rng)
        assert abs(mc - attack_probability(q, n)) <= 0.005, (q, n, mc)


def check_gradients(rng, backward=None):
    worst = 0.0
    for _ in range(20):
        net = QNetwork(5, 6, hidden=(4, 4), rng=rng)
        x = rng.normal(size=5)
        worst = max(worst, grad_check(net, x, int(rng.integers(6)), rng.normal(), backward=backward))
    assert worst <= 1e-4, f"max relative error {worst:.3g}"


def check_dueling_identity(rng):
    net = QNetwork(7, 9, rng=rng)
    x = rng.normal(size=(500, 7))
    v, _ = net.value_advantage(x)
    gap = np.abs((net.forward(x) - v[:, None]).mean(axis=1)).max()
    assert gap <= 1e-6, gap
    mask = rng.random((500, 9)) < 0.7
    mask[:, 0] = True
    r = rng.normal(size=500)
    single = double_q_targets(r, x, mask, net, net, 0.9)
    classic = r + 0.9 * np.where(mask, net.forward(x), -np.inf).max(axis=1)
    assert np.array_equal(single, classic)


def check_action_counts(rng):
    for y, expected in ((2, 10), (1, 4)):
        radio = RadioConfig(frame_slots=y, transmitters=(TransmitterParams(),), busy_range=(0, y))
        chain = ChainConfig(num_chains=1, fee_intervals=1)
        table = ActionTable(radio, chain)
        assert len(table) == expected == len(brute_force_allocations(y, 1))
        for b in range(y + 1):
            assert int(table.mask(b).sum()) == len(brute_force_feasible(y, 1, b, 1, 1))


def check_transition_bounds(rng, steps=10_000):
    cfg = paper_preset()
    env = Environment(cfg.radio, cfg.chain, rng)
    env.reset()
    for _ in range(steps):
        state = env.state
        index = random_policy(state, env.table, rng, env.last_blocks, cfg.chain)
        a = env.table.action(index)
        result = env.step(index)
        cap = sum(a.backscatter[n] * p.backscatter_rate + a.active[n] * p.active_rate
                  for n, p in enumerate(cfg.radio.transmitters))
        assert result.info["delivered"] <= cap
        for t, p in zip(result.next_state.transmitters, cfg.radio.transmitters):
            assert 0 <= t.queue <= p.queue_capacity and 0 <= t.energy <= p.energy_capacity
        assert all(pool.total_size <= cfg.chain.mempool_capacity for pool in env.pools)
        assert math.isfinite(result.reward)


CHECKS = {
    "attack_probability": check_attack_probability,
    "gradient_check": check_gradients,
    "dueling_identity": check_dueling_identity,
    "action_count": check_action_counts,
    "transition_bounds": check_transition_bounds,
}


def selfcheck(seed: int = 0, backward=None, out=print) -> dict[str, bool]:
    """Run every check and print one status line each.

    ``backward`` replaces the network's gradient routine in the gradient check,
    which lets tests confirm that a broken backward pass is caught.
    """
    report = {}
    for name, check in CHECKS.items():
        rng = np.random.default_rng([seed, len(name)])
        start = time.perf_counter()
        try:
            if name == "gradient_check":
                check(rng, backward=backward)
            else:
                check(rng)
            ok, detail = True, ""
        except AssertionError as exc:
            ok, detail = False, f" ({exc})" if str(exc) else ""
        report[name] = ok
        out(f"{'PASS' if ok else 'FAIL'}  {name}  {time.perf_counter() - start:.1f}s{detail}")
    return report
