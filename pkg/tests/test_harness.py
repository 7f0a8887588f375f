import csv
from dataclasses import replace

import numpy as np
import pytest

from chainscatter import harness
from chainscatter.agents import TrainConfig
from chainscatter.chain import ChainConfig
from chainscatter.config import paper_preset, reduced_preset
from chainscatter.mdp import Environment
from chainscatter.radio import RadioConfig, TransmitterParams


def quick(agent="d3qn", episodes=3, steps=20, **kw):
    cfg = reduced_preset(agent=agent, **kw)
    train = replace(cfg.train, episodes=episodes, steps_per_episode=steps, hidden=(16, 16))
    return replace(cfg, train=train)


class Idle(harness.Policy):
    def act(self, env, epsilon=0.0):
        return env.table.index_of([0] * (1 + 2 * env.table.num_transmitters), 0, 0)


def test_empty_episode():
    cfg = reduced_preset()
    env = Environment(cfg.radio, cfg.chain, np.random.default_rng(0))
    rec = harness.run_episode(Idle(), env, 0)
    assert (rec.mean_reward, rec.mean_throughput, rec.fee_per_stored_unit) == (0, 0, 0)


def test_idle_policy_earns_nothing():
    cfg = reduced_preset()
    env = Environment(cfg.radio, cfg.chain, np.random.default_rng(0))
    rec = harness.run_episode(Idle(), env, 50)
    assert rec.mean_throughput == 0 and rec.total_fee == 0 and rec.mean_reward == 0


def test_deterministic_setting_repeats():
    p = TransmitterParams(success_backscatter=1, success_active=1, arrival_rate=0, queue_capacity=5)
    radio = RadioConfig(frame_slots=5, transmitters=(p, p), busy_range=(2, 2))
    chain = ChainConfig(num_chains=1, mempool_capacity=15, block_capacity=10, attacker_share=(0.0,))
    recs = []
    for _ in range(2):
        env = Environment(radio, chain, harness.stream(3, "env"))
        recs.append(harness.run_episode(harness.HeuristicPolicy("htt", None), env, 30))
    recs[0].seconds = recs[1].seconds = 0.0
    assert recs[0] == recs[1]


def test_streams_are_labelled():
    a = harness.stream(1, "env").random(3)
    assert np.array_equal(a, harness.stream(1, "env").random(3))
    assert not np.array_equal(a, harness.stream(1, "agent").random(3))
    assert not np.array_equal(a, harness.stream(2, "env").random(3))


def test_single_episode_csv(tmp_path):
    result = harness.train(quick("random", episodes=1), tmp_path)
    lines = result["metrics"].read_text().splitlines()
    assert lines[0] == "# " + harness.METRICS_VERSION
    assert lines[1].split(",") == list(harness.METRIC_COLUMNS)
    assert len(lines) == 3
    rows = harness.read_metrics(result["metrics"])
    assert rows[0]["episode"] == "0" and float(rows[0]["mean_throughput"]) >= 0
    assert (tmp_path / "config.ini").exists() and (tmp_path / "timing.csv").exists()


@pytest.mark.parametrize("agent", ["d3qn", "qlearning", "random"])
def test_training_csv_is_byte_reproducible(tmp_path, agent):
    cfg = quick(agent, episodes=3)
    a = harness.train(cfg, tmp_path / "a")["metrics"].read_bytes()
    b = harness.train(cfg, tmp_path / "b")["metrics"].read_bytes()
    assert a == b


def test_wallclock_opt_in(tmp_path):
    result = harness.train(quick("random", episodes=2, record_wallclock=True), tmp_path)
    secs = [float(r["seconds"]) for r in harness.read_metrics(result["metrics"])]
    assert all(s > 0 for s in secs)


def test_metrics_columns_are_sane(tmp_path):
    result = harness.train(quick("d3qn", episodes=4), tmp_path)
    rows = harness.read_metrics(result["metrics"])
    eps = [float(r["epsilon"]) for r in rows]
    assert eps[0] == 0.9 and eps[-1] == 0.0 and eps == sorted(eps, reverse=True)
    assert all(float(r["fee_per_stored_unit"]) >= 0 for r in rows)
    assert result["checkpoint"].name == "checkpoint.npz"


def test_checkpoint_evaluation_is_repeatable(tmp_path):
    cfg = quick("d3qn", episodes=2)
    ckpt = harness.train(cfg, tmp_path)["checkpoint"]
    first = harness.evaluate(ckpt, cfg, 3)
    second = harness.evaluate(ckpt, cfg, 3)
    assert first["mean_reward"] == second["mean_reward"]
    assert first["fee_per_stored_unit"] == second["fee_per_stored_unit"]


def test_checkpoint_for_other_architecture_is_refused(tmp_path):
    ckpt = harness.train(quick("d3qn", episodes=1), tmp_path)["checkpoint"]
    other = replace(quick("d3qn"), train=replace(quick().train, hidden=(8,)))
    with pytest.raises(ValueError):
        harness.evaluate(ckpt, other, 1)


def test_qtable_checkpoint(tmp_path):
    path = harness.train(quick("qlearning", episodes=2), tmp_path)["checkpoint"]
    assert path.name == "checkpoint.qtable.npz"
    with np.load(path) as data:
        assert data["keys"].shape[0] == data["values"].shape[0] > 0


def test_periodic_checkpoints(tmp_path):
    cfg = quick("d3qn", episodes=2)
    cfg = replace(cfg, train=replace(cfg.train, checkpoint_every=1))
    assert harness.train(cfg, tmp_path)["checkpoint"].exists()


def test_evaluation_needs_episodes():
    with pytest.raises(ValueError):
        harness.evaluate(harness.HeuristicPolicy("random", None), quick("random"), 0)


def test_random_summary_is_stable():
    a = harness.evaluate(harness.HeuristicPolicy("random", None), quick("random", seed=1, steps=40), 500)
    b = harness.evaluate(harness.HeuristicPolicy("random", None), quick("random", seed=2, steps=40), 500)
    assert abs(a["mean_reward"] - b["mean_reward"]) <= 0.03 * abs(a["mean_reward"])
    assert abs(a["mean_throughput"] - b["mean_throughput"]) <= 0.03 * a["mean_throughput"]


def test_qlearning_refused_on_large_config(tmp_path):
    cfg = paper_preset(agent="qlearning")
    cfg = replace(cfg, train=replace(cfg.train, episodes=1, steps_per_episode=1))
    with pytest.raises(harness.TableTooLarge):
        harness.train(cfg, tmp_path)
    ok = harness.train(replace(cfg, allow_large_qtable=True), tmp_path)
    assert len(ok["records"]) == 1


def test_convergence_episode():
    assert harness.convergence_episode([1.0] * 50) is None
    flat = harness.convergence_episode([1.0] * 300)
    assert flat == 99
    ramp = np.concatenate([np.linspace(0, 1, 200), np.ones(400)])
    ep = harness.convergence_episode(ramp)
    assert 150 < ep < 300


def test_sweep_single_value_equals_evaluate(tmp_path):
    cfg = quick("random", steps=30)
    rows = harness.sweep(cfg, "q", [0.05], tmp_path, episodes=20)
    direct = harness.evaluate(harness.HeuristicPolicy("random", None),
                              harness.with_parameter(cfg, "q", 0.05), 20)
    assert rows[0]["mean_reward"] == direct["mean_reward"]
    with open(tmp_path / "sweep_q.csv") as fh:
        table = list(csv.DictReader(fh))
    assert list(table[0]) == list(harness.SWEEP_COLUMNS) and table[0]["value"] == "0.05"


def test_sweep_attack_share_trend(tmp_path):
    rows = harness.sweep(quick("random", steps=50), "q", [0.0, 0.05, 0.1], tmp_path, episodes=40)
    thr = [r["mean_throughput"] for r in rows]
    fee = [r["fee_per_stored_unit"] for r in rows]
    assert thr == sorted(thr, reverse=True) and fee == sorted(fee)


def test_sweep_chain_count_retrains(tmp_path):
    rows = harness.sweep(quick("d3qn", episodes=1, steps=5), "K", [1, 2], tmp_path, episodes=1)
    assert [r["value"] for r in rows] == [1, 2]
    assert (tmp_path / "K=1" / "checkpoint.npz").exists()
    assert (tmp_path / "K=2" / "checkpoint.npz").exists()


@pytest.mark.parametrize("name, value, check", [
    ("busy_range", (2, 3), lambda c: c.radio.busy_range == (2, 3)),
    ("Y", 6, lambda c: c.radio.frame_slots == 6),
    ("lambda", 1.5, lambda c: all(p.arrival_rate == 1.5 for p in c.radio.transmitters)),
    ("Z", 2, lambda c: c.chain.background_count == 2),
    ("K", 3, lambda c: c.chain.num_chains == 3),
])
def test_with_parameter(name, value, check):
    assert check(harness.with_parameter(reduced_preset(), name, value))


def test_unknown_sweep_parameter(tmp_path):
    with pytest.raises(harness.UnknownParameter):
        harness.sweep(quick("random"), "gamma", [0.5], tmp_path)


def test_value_parsing():
    assert harness.parse_values("busy_range", "1:2, 3:4") == [(1, 2), (3, 4)]
    assert harness.parse_values("q", "0,0.05") == [0.0, 0.05]
    assert harness.parse_values("K", "1,2,3") == [1, 2, 3]
