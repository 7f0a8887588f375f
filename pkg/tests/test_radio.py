from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chainscatter.radio import (InfeasibleAllocation, RadioConfig, TransmitterParams,
                                TransmitterState, active_phase, arrival_phase, backscatter_phase,
                                harvest_phase, sample_busy_slots, step_radio)

LOSSLESS = TransmitterParams(success_backscatter=1.0, success_active=1.0)


def test_busy_slots_degenerate_ranges(rng):
    assert sample_busy_slots(rng, RadioConfig(busy_range=(3, 3))) == 3
    assert sample_busy_slots(rng, RadioConfig(busy_range=(0, 0))) == 0


def test_busy_slots_uniform(rng):
    cfg = RadioConfig(busy_range=(1, 6))
    draws = np.array([sample_busy_slots(rng, cfg) for _ in range(100_000)])
    freq = np.bincount(draws, minlength=7)[1:] / draws.size
    assert draws.min() == 1 and draws.max() == 6
    assert np.all(np.abs(freq - 1 / 6) <= 0.01)


def test_harvest_examples():
    p = TransmitterParams(energy_capacity=5, harvest_rate=1)
    assert harvest_phase(TransmitterState(0, 2), 4, 1, p).energy == 5
    assert harvest_phase(TransmitterState(0, 5), 3, 0, p).energy == 5
    assert harvest_phase(TransmitterState(2, 1), 3, 3, p) == TransmitterState(2, 1)
    assert harvest_phase(TransmitterState(0, 0), 4, 1, p).energy == 3


def test_harvest_rejects_backscatter_beyond_busy():
    with pytest.raises(InfeasibleAllocation):
        harvest_phase(TransmitterState(), 2, 3, TransmitterParams())


def test_backscatter_examples(rng):
    state, d = backscatter_phase(TransmitterState(3, 0), 2, LOSSLESS, rng)
    assert (state.queue, d) == (1, 2)
    lossy = replace(LOSSLESS, success_backscatter=0.0)
    state, d = backscatter_phase(TransmitterState(3, 0), 2, lossy, rng)
    assert (state.queue, d) == (1, 0)
    state, d = backscatter_phase(TransmitterState(3, 4), 0, LOSSLESS, rng)
    assert state == TransmitterState(3, 4) and d == 0


def test_active_examples(rng):
    p = replace(LOSSLESS, active_rate=2, active_energy=1)
    state, d = active_phase(TransmitterState(4, 3), 5, p, rng)
    assert (state.queue, state.energy, d) == (0, 1, 4)
    assert active_phase(TransmitterState(4, 0), 3, p, rng) == (TransmitterState(4, 0), 0)
    assert active_phase(TransmitterState(4, 3), 0, p, rng) == (TransmitterState(4, 3), 0)


def test_active_stops_when_energy_short(rng):
    p = replace(LOSSLESS, active_rate=1, active_energy=2)
    state, d = active_phase(TransmitterState(5, 3), 4, p, rng)
    assert (state.queue, state.energy, d) == (4, 1, 1)


def test_arrival_examples(rng):
    still = replace(LOSSLESS, arrival_rate=0.0)
    assert arrival_phase(TransmitterState(3, 1), rng, still) == (TransmitterState(3, 1), 0)

    class Fixed:
        def poisson(self, lam):
            return 3
    state, dropped = arrival_phase(TransmitterState(6, 0), Fixed(), TransmitterParams(queue_capacity=7))
    assert state.queue == 7 and dropped == 2


def test_poisson_mean(rng):
    p = TransmitterParams(queue_capacity=10**9, arrival_rate=2.0)
    total = 0
    for _ in range(100_000):
        state, _ = arrival_phase(TransmitterState(), rng, p)
        total += state.queue
    assert abs(total / 100_000 - 2.0) <= 0.05


def test_expected_success_mode_scales_payload(rng):
    p = replace(LOSSLESS, success_backscatter=0.5)
    _, d = backscatter_phase(TransmitterState(3, 0), 2, p, rng, expected=True)
    assert d == pytest.approx(1.0)


def test_zero_allocation_only_harvests(rng):
    p = replace(LOSSLESS, arrival_rate=0.0, energy_capacity=5)
    cfg = RadioConfig(frame_slots=7, transmitters=(p, p))
    start = [TransmitterState(2, 1), TransmitterState(0, 4)]
    states, out = step_radio(start, 3, 0, (0, 0), (0, 0), cfg, rng)
    assert states == [TransmitterState(2, 4), TransmitterState(0, 5)]
    assert out.total_delivered == 0


def test_step_radio_composes_phases():
    p = TransmitterParams(arrival_rate=2.5, success_backscatter=0.6, success_active=0.7)
    cfg = RadioConfig(frame_slots=7, transmitters=(p,))
    start = TransmitterState(4, 2)
    states, out = step_radio([start], 4, 1, (2,), (3,), cfg, np.random.default_rng(9))
    rng = np.random.default_rng(9)
    s = harvest_phase(start, 4, 2, p)
    s, d_b = backscatter_phase(s, 2, p, rng)
    s, d_a = active_phase(s, 3, p, rng)
    s, lost = arrival_phase(s, rng, p)
    assert states == [s]
    assert out.delivered_backscatter == (d_b,) and out.delivered_active == (d_a,)
    assert out.dropped_arrivals == (lost,)


def test_lossless_delivery_equals_drained_queue(rng):
    p = replace(LOSSLESS, arrival_rate=0.0, queue_capacity=20, energy_capacity=20)
    cfg = RadioConfig(frame_slots=7, transmitters=(p, p))
    start = [TransmitterState(9, 3), TransmitterState(4, 0)]
    states, out = step_radio(start, 4, 0, (1, 2), (2, 1), cfg, rng)
    drained = sum(a.queue - b.queue for a, b in zip(start, states))
    assert out.total_delivered == drained


@pytest.mark.parametrize("alloc", [
    (5, (1, 0), (0, 0)),      # busy budget exceeded
    (0, (1, 1), (3, 3)),      # frame exceeded
    (0, (1,), (0,)),          # wrong width
    (-1, (0, 0), (0, 0)),
])
def test_step_radio_rejects_infeasible(alloc, rng):
    cfg = RadioConfig()
    with pytest.raises(InfeasibleAllocation):
        step_radio([TransmitterState()] * 2, 4, *alloc, cfg, rng)


params = st.builds(TransmitterParams,
                   queue_capacity=st.integers(0, 8), energy_capacity=st.integers(0, 6),
                   harvest_rate=st.integers(0, 3), active_energy=st.integers(0, 3),
                   backscatter_rate=st.integers(0, 3), active_rate=st.integers(0, 3),
                   success_backscatter=st.floats(0, 1), success_active=st.floats(0, 1),
                   arrival_rate=st.floats(0, 6))


@st.composite
def frames(draw):
    p = draw(params)
    y = draw(st.integers(1, 7))
    busy = draw(st.integers(0, y))
    harvest = draw(st.integers(0, busy))
    back = draw(st.integers(0, busy - harvest))
    act = draw(st.integers(0, y - harvest - back))
    state = TransmitterState(draw(st.integers(0, p.queue_capacity)),
                             draw(st.integers(0, p.energy_capacity)))
    return p, y, busy, harvest, back, act, state, draw(st.integers(0, 2**32 - 1))


@settings(max_examples=300, deadline=None)
@given(frames())
def test_frame_invariants(frame):
    p, y, busy, harvest, back, act, state, seed = frame
    cfg = RadioConfig(frame_slots=y, transmitters=(p,), busy_range=(0, y))
    (new,), out = step_radio([state], busy, harvest, (back,), (act,), cfg, np.random.default_rng(seed))
    assert 0 <= new.queue <= p.queue_capacity
    assert 0 <= new.energy <= p.energy_capacity
    assert new.energy - state.energy <= (busy - back) * p.harvest_rate
    assert 0 <= out.delivered_backscatter[0] <= back * p.backscatter_rate
    assert 0 <= out.delivered_active[0] <= act * p.active_rate
    assert out.total_delivered <= back * p.backscatter_rate + act * p.active_rate


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 8), st.integers(0, 6), st.integers(0, 6))
def test_active_delivery_monotone_in_slots(queue, energy, slots):
    p = replace(LOSSLESS, active_rate=2, active_energy=1)
    s = TransmitterState(queue, energy)
    _, fewer = active_phase(s, slots, p)
    _, more = active_phase(s, slots + 1, p)
    assert fewer <= more
