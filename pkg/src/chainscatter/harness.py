"""Training, evaluation and parameter sweeps, with per-episode CSV metrics."""
from __future__ import annotations

import csv
import logging
import time
import zlib
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .agents import (D3QNAgent, QLearningAgent, backscatter_policy, epsilon_at,
                     fee_estimate_last_block, htt_policy, random_policy)
from .config import ExperimentConfig, dump_config
from .mdp import ActionTable, Environment, state_width
from .neural import load_params, save_params

log = logging.getLogger(__name__)

METRICS_VERSION = "chainscatter-metrics v1"
METRIC_COLUMNS = ("episode", "mean_reward", "mean_throughput", "fee_per_stored_unit", "epsilon", "seconds")
SWEEPABLE = {
    "busy_range": "busy_range",
    "Y": "frame_slots",
    "lambda": "arrival_rate",
    "q": "attacker_share",
    "K": "num_chains",
    "Z": "background_count",
}


class UnknownParameter(ValueError):
    pass


class TableTooLarge(ValueError):
    """Tabular Q-learning requested on a configuration beyond the reduced preset."""


def stream(seed: int, label: str, *extra: int) -> np.random.Generator:
    """Independent generator for a named component of an experiment."""
    return np.random.default_rng([seed, zlib.crc32(label.encode()), *extra])


@dataclass
class EpisodeRecord:
    episode: int
    mean_reward: float = 0.0
    mean_throughput: float = 0.0
    fee_per_stored_unit: float = 0.0
    epsilon: float = 0.0
    seconds: float = 0.0
    total_fee: float = 0.0
    total_stored: float = 0.0

    def row(self, wallclock: bool = True) -> list[str]:
        secs = self.seconds if wallclock else 0.0
        return [str(self.episode), repr(self.mean_reward), repr(self.mean_throughput),
                repr(self.fee_per_stored_unit), repr(self.epsilon), f"{secs:.3f}"]


# -- policies ---------------------------------------------------------------

class Policy:
    """Chooses table indices for an :class:`Environment`; learners also update."""
    learns = False

    def act(self, env: Environment, epsilon: float = 0.0) -> int:
        raise NotImplementedError

    def learn(self, env, encoded, key, action, reward) -> None:
        pass


class HeuristicPolicy(Policy):
    def __init__(self, kind: str, rng: np.random.Generator):
        if kind not in ("htt", "backscatter", "random"):
            raise ValueError(kind)
        self.kind = kind
        self.rng = rng

    def act(self, env, epsilon=0.0):
        state, table = env.state, env.table
        if self.kind == "random":
            return random_policy(state, table, self.rng, env.last_blocks, env.chain)
        fee = fee_estimate_last_block(env.last_blocks[0], env.chain)
        rule = htt_policy if self.kind == "htt" else backscatter_policy
        return rule(state, table, fee, 0)


class D3QNPolicy(Policy):
    learns = True

    def __init__(self, agent: D3QNAgent):
        self.agent = agent

    def act(self, env, epsilon=0.0):
        return self.agent.act(env.encode(), env.mask(), epsilon)

    def learn(self, env, encoded, key, action, reward):
        self.agent.remember(encoded, action, reward, env.encode(), env.state.busy)
        self.agent.train_step()


class QLearningPolicy(Policy):
    learns = True

    def __init__(self, agent: QLearningAgent):
        self.agent = agent

    def act(self, env, epsilon=0.0):
        return self.agent.act(env.state.key(), env.mask(), epsilon)

    def learn(self, env, encoded, key, action, reward):
        self.agent.update(key, action, reward, env.state.key(), env.mask())


def build_policy(cfg: ExperimentConfig, table: ActionTable, rng: np.random.Generator) -> Policy:
    if cfg.agent == "d3qn":
        return D3QNPolicy(D3QNAgent(state_width(cfg.radio, cfg.chain), table, cfg.train, rng))
    if cfg.agent == "qlearning":
        if cfg.preset != "reduced" and not cfg.allow_large_qtable:
            raise TableTooLarge("tabular Q-learning outside the reduced preset needs allow_large_qtable = true")
        return QLearningPolicy(QLearningAgent(table, cfg.train, rng))
    return HeuristicPolicy(cfg.agent, rng)


# -- episodes ---------------------------------------------------------------

def run_episode(policy: Policy, env: Environment, steps: int, epsilon: float = 0.0,
                learn: bool = False, episode: int = 0) -> EpisodeRecord:
    """Reset ``env`` and run ``steps`` frames under ``policy``."""
    start = time.perf_counter()
    env.reset()
    reward_sum = stored = fees = 0.0
    for _ in range(steps):
        encoded = env.encode() if learn and isinstance(policy, D3QNPolicy) else None
        key = env.state.key() if learn and isinstance(policy, QLearningPolicy) else None
        action = policy.act(env, epsilon)
        result = env.step(action)
        reward_sum += result.reward
        stored += result.info["stored"]
        fees += result.info["fee_charged"]
        if learn:
            policy.learn(env, encoded, key, action, result.reward)
    rec = EpisodeRecord(episode, epsilon=epsilon, total_fee=fees, total_stored=stored)
    if steps:
        rec.mean_reward = reward_sum / steps
        rec.mean_throughput = stored / steps
        rec.fee_per_stored_unit = fees / stored if stored > 0 else 0.0
    rec.seconds = time.perf_counter() - start
    return rec


def convergence_episode(rewards, window: int = 100, tolerance: float = 0.05) -> int | None:
    """First episode after which the moving average stays within ``tolerance`` of its final value."""
    rewards = np.asarray(rewards, dtype=float)
    if len(rewards) < window:
        return None
    avg = np.convolve(rewards, np.ones(window) / window, mode="valid")
    final = avg[-1]
    band = tolerance * max(abs(final), 1e-12)
    outside = np.flatnonzero(np.abs(avg - final) > band)
    first = 0 if outside.size == 0 else int(outside[-1]) + 1
    return first + window - 1


def _write_row(path: Path, row, header: bool = False):
    with open(path, "a", newline="") as fh:
        if header:
            fh.write(f"# {METRICS_VERSION}\n")
        csv.writer(fh).writerow(row)


def read_metrics(path) -> list[dict]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def save_checkpoint(policy: Policy, path: Path) -> Path | None:
    if isinstance(policy, D3QNPolicy):
        return save_params(policy.agent.online, path.with_suffix(".npz"))
    if isinstance(policy, QLearningPolicy):
        q = policy.agent.q
        keys = np.array(list(q.keys()), dtype=float).reshape(len(q), -1)
        values = np.array(list(q.values())).reshape(len(q), -1)
        out = path.with_suffix(".qtable.npz")
        with open(out, "wb") as fh:
            np.savez(fh, keys=keys, values=values)
        return out
    return None


def train(cfg: ExperimentConfig, out_dir=None, episodes: int | None = None) -> dict:
    """Run ``cfg.train.episodes`` training episodes, writing ``metrics.csv`` as it goes.

    Returns the trained policy, the episode records, and the paths written.
    """
    out = Path(out_dir if out_dir is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    n_episodes = cfg.train.episodes if episodes is None else episodes
    env = Environment(cfg.radio, cfg.chain, stream(cfg.seed, "env"))
    policy = build_policy(cfg, env.table, stream(cfg.seed, "agent"))
    metrics = out / "metrics.csv"
    timing = out / "timing.csv"
    metrics.unlink(missing_ok=True)
    timing.unlink(missing_ok=True)
    (out / "config.ini").write_text(dump_config(cfg))
    _write_row(metrics, METRIC_COLUMNS, header=True)
    _write_row(timing, ("episode", "seconds"))

    records = []
    ckpt = out / "checkpoint"
    for ep in range(n_episodes):
        eps = epsilon_at(ep, n_episodes - 1, cfg.train.epsilon_start, cfg.train.epsilon_end)
        rec = run_episode(policy, env, cfg.train.steps_per_episode, eps,
                          learn=policy.learns, episode=ep)
        records.append(rec)
        _write_row(metrics, rec.row(cfg.record_wallclock))
        _write_row(timing, (ep, f"{rec.seconds:.3f}"))
        every = cfg.train.checkpoint_every
        if every and (ep + 1) % every == 0:
            save_checkpoint(policy, ckpt)
        if ep % 100 == 0:
            log.info("episode %d reward %.3f eps %.3f", ep, rec.mean_reward, eps)
    saved = save_checkpoint(policy, ckpt)
    conv = convergence_episode([r.mean_reward for r in records])
    return {"policy": policy, "records": records, "metrics": metrics, "checkpoint": saved,
            "convergence_episode": conv}


def evaluate(policy: Policy | str | Path, cfg: ExperimentConfig, episodes: int | None = None) -> dict:
    """Greedy evaluation over ``episodes`` episodes with fixed evaluation seeds.

    Episode ``i`` always runs on the environment stream ``(seed, "eval", i)``, so
    different policies are compared on identical channel and mempool draws.
    """
    episodes = cfg.eval_episodes if episodes is None else episodes
    if episodes <= 0:
        raise ValueError("evaluation needs at least one episode")
    table = ActionTable(cfg.radio, cfg.chain)
    if isinstance(policy, (str, Path)):
        agent = D3QNAgent(state_width(cfg.radio, cfg.chain), table, cfg.train, stream(cfg.seed, "agent"))
        agent.online = load_params(policy, expect=agent.online)
        policy = D3QNPolicy(agent)
    elif isinstance(policy, HeuristicPolicy):
        policy = HeuristicPolicy(policy.kind, stream(cfg.seed, "eval-policy"))
    records = []
    for i in range(episodes):
        env = Environment(cfg.radio, cfg.chain, stream(cfg.seed, "eval", i), table=table)
        records.append(run_episode(policy, env, cfg.train.steps_per_episode, 0.0, False, i))
    rewards = np.array([r.mean_reward for r in records])
    throughput = np.array([r.mean_throughput for r in records])
    fees = sum(r.total_fee for r in records)
    stored = sum(r.total_stored for r in records)
    return {
        "episodes": episodes,
        "mean_reward": float(rewards.mean()),
        "std_reward": float(rewards.std()),
        "mean_throughput": float(throughput.mean()),
        "std_throughput": float(throughput.std()),
        "fee_per_stored_unit": fees / stored if stored > 0 else 0.0,
        "records": records,
    }


def with_parameter(cfg: ExperimentConfig, name: str, value) -> ExperimentConfig:
    """Copy of ``cfg`` with one sweepable parameter replaced."""
    if name not in SWEEPABLE:
        raise UnknownParameter(f"cannot sweep {name!r}; choose from {sorted(SWEEPABLE)}")
    radio, chain = cfg.radio, cfg.chain
    if name == "busy_range":
        radio = replace(radio, busy_range=tuple(int(v) for v in value))
    elif name == "Y":
        radio = replace(radio, frame_slots=int(value))
    elif name == "lambda":
        radio = replace(radio, transmitters=tuple(replace(p, arrival_rate=float(value))
                                                  for p in radio.transmitters))
    elif name == "q":
        chain = replace(chain, attacker_share=(float(value),))
    elif name == "K":
        k = int(value)
        shares = chain.attacker_share
        if len(shares) not in (1, k):
            shares = tuple(np.linspace(min(shares), max(shares), k).tolist())
        chain = replace(chain, num_chains=k, attacker_share=shares)
    elif name == "Z":
        chain = replace(chain, background_count=int(value))
    return replace(cfg, radio=radio, chain=chain)


def parse_values(name: str, text: str) -> list:
    """``--values`` parsing: comma-separated; busy ranges are written ``lo:hi``."""
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if name == "busy_range":
        return [tuple(int(x) for x in p.split(":")) for p in parts]
    return [float(p) if name in ("lambda", "q") else int(p) for p in parts]


SWEEP_COLUMNS = ("param", "value", "agent", "episodes", "mean_reward", "std_reward",
                 "mean_throughput", "fee_per_stored_unit")


def sweep(cfg: ExperimentConfig, name: str, values, out_dir=None, episodes: int | None = None) -> list[dict]:
    """Evaluate (training first, for learning agents) once per value of ``name``."""
    if name not in SWEEPABLE:
        raise UnknownParameter(f"cannot sweep {name!r}; choose from {sorted(SWEEPABLE)}")
    out = Path(out_dir if out_dir is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for value in values:
        sub = with_parameter(cfg, name, value)
        if sub.agent in ("d3qn", "qlearning"):
            label = ":".join(map(str, value)) if isinstance(value, tuple) else str(value)
            policy = train(sub, out / f"{name}={label}")["policy"]
        else:
            policy = HeuristicPolicy(sub.agent, stream(sub.seed, "eval-policy"))
        summary = evaluate(policy, sub, episodes)
        shown = ":".join(map(str, value)) if isinstance(value, tuple) else value
        rows.append({"param": name, "value": shown, "agent": sub.agent, "episodes": summary["episodes"],
                     **{k: summary[k] for k in SWEEP_COLUMNS[4:]}})
    path = out / f"sweep_{name}.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    return rows

