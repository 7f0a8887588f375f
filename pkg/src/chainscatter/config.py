"""Experiment configuration: presets and the sectioned key-value file format.

A config file has up to four sections::

    [experiment]
    preset = reduced        ; reduced | paper, the base every other key overrides
    agent = d3qn
    seed = 7

    [radio]
    frame_slots = 5
    arrival_rate = 3, 4     ; per-transmitter keys take one value or one per transmitter

    [chain]
    attacker_share = 0.05

    [train]
    episodes = 3000

Unknown sections or keys raise :class:`ConfigError`.
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field, replace
from pathlib import Path

from .agents import TrainConfig
from .chain import ChainConfig
from .radio import RadioConfig, TransmitterParams

AGENTS = ("d3qn", "qlearning", "htt", "backscatter", "random")
TX_KEYS = tuple(f.name for f in dataclasses.fields(TransmitterParams))


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    radio: RadioConfig = field(default_factory=RadioConfig)
    chain: ChainConfig = field(default_factory=ChainConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    agent: str = "d3qn"
    seed: int = 0
    out: str = "runs"
    eval_episodes: int = 100
    preset: str = "reduced"
    # Tabular learning on anything but the reduced preset needs explicit consent.
    allow_large_qtable: bool = False
    # Write wall-clock seconds into the metrics CSV (breaks byte-reproducibility).
    record_wallclock: bool = False

    def __post_init__(self):
        if self.agent not in AGENTS:
            raise ConfigError(f"unknown agent {self.agent!r}; choose from {AGENTS}")
        if self.eval_episodes < 0:
            raise ConfigError("eval_episodes must be nonnegative")


def transmitters(n: int, **params) -> tuple[TransmitterParams, ...]:
    return tuple(TransmitterParams(**params) for _ in range(n))


def reduced_preset(**overrides) -> ExperimentConfig:
    """Small configuration on which tabular Q-learning is still tractable."""
    radio = RadioConfig(frame_slots=5, busy_range=(1, 4),
                        transmitters=transmitters(2, queue_capacity=5, energy_capacity=3))
    chain = ChainConfig(num_chains=1, mempool_capacity=15, block_capacity=10, attacker_share=(0.05,))
    return replace(ExperimentConfig(radio=radio, chain=chain, preset="reduced"), **overrides)


def paper_preset(**overrides) -> ExperimentConfig:
    """Full-size network: 7-slot frames, three chains with attacker shares 0, 0.05, 0.1."""
    radio = RadioConfig(frame_slots=7, busy_range=(1, 6),
                        transmitters=transmitters(2, queue_capacity=7, energy_capacity=5))
    chain = ChainConfig(num_chains=3, mempool_capacity=50, block_capacity=30,
                        attacker_share=(0.0, 0.05, 0.1))
    train = TrainConfig(episodes=50000)
    return replace(ExperimentConfig(radio=radio, chain=chain, train=train, preset="paper"), **overrides)


PRESETS = {"reduced": reduced_preset, "paper": paper_preset}


def _convert(text: str, like):
    text = text.strip()
    if isinstance(like, bool):
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {text!r}")
    if isinstance(like, tuple):
        inner = like[0] if like else 0.0
        return tuple(_convert(part, inner) for part in text.split(",") if part.strip())
    if isinstance(like, int):
        return int(text)
    if isinstance(like, float):
        return float(text)
    return text


def _apply(obj, items: dict, section: str):
    known = {f.name: getattr(obj, f.name) for f in dataclasses.fields(obj)}
    changes = {}
    for key, text in items.items():
        if key not in known or isinstance(known[key], (RadioConfig, ChainConfig, TrainConfig)):
            raise ConfigError(f"unknown key {key!r} in [{section}]")
        try:
            changes[key] = _convert(text, known[key])
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}: {exc}") from exc
    return replace(obj, **changes)


def _apply_radio(radio: RadioConfig, items: dict) -> RadioConfig:
    items = dict(items)
    n = int(items.pop("num_transmitters", radio.num_transmitters))
    base = list(radio.transmitters) + [radio.transmitters[-1]] * max(0, n - radio.num_transmitters)
    base = base[:n]
    per_tx = {k: items.pop(k) for k in list(items) if k in TX_KEYS}
    for key, text in per_tx.items():
        values = [v for v in text.split(",") if v.strip()]
        if len(values) not in (1, n):
            raise ConfigError(f"[radio] {key} needs 1 or {n} values")
        values = values * n if len(values) == 1 else values
        base = [replace(p, **{key: _convert(v, getattr(p, key))}) for p, v in zip(base, values)]
    radio = replace(radio, transmitters=tuple(base))
    return _apply(radio, items, "radio")


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    extra = set(parser.sections()) - {"radio", "chain", "train", "experiment"}
    if extra:
        raise ConfigError(f"unknown section(s): {sorted(extra)}")
    exp_items = dict(parser["experiment"]) if parser.has_section("experiment") else {}
    preset = exp_items.pop("preset", "reduced").strip()
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}")
    cfg = PRESETS[preset]()
    try:
        radio = _apply_radio(cfg.radio, dict(parser["radio"])) if parser.has_section("radio") else cfg.radio
        chain = _apply(cfg.chain, dict(parser["chain"]), "chain") if parser.has_section("chain") else cfg.chain
        train = _apply(cfg.train, dict(parser["train"]), "train") if parser.has_section("train") else cfg.train
        return _apply(replace(cfg, radio=radio, chain=chain, train=train), exp_items, "experiment")
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def dump_config(cfg: ExperimentConfig) -> str:
    """Render ``cfg`` in the file format; ``parse_config`` reads it back unchanged."""
    def fmt(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, tuple):
            return ", ".join(fmt(x) for x in v)
        return repr(v) if isinstance(v, float) else str(v)

    lines = ["[experiment]", f"preset = {cfg.preset}"]
    for f in dataclasses.fields(cfg):
        if f.name not in ("radio", "chain", "train", "preset"):
            lines.append(f"{f.name} = {fmt(getattr(cfg, f.name))}")
    lines += ["", "[radio]", f"num_transmitters = {cfg.radio.num_transmitters}"]
    for f in dataclasses.fields(cfg.radio):
        if f.name != "transmitters":
            lines.append(f"{f.name} = {fmt(getattr(cfg.radio, f.name))}")
    for key in TX_KEYS:
        lines.append(f"{key} = {fmt(tuple(getattr(p, key) for p in cfg.radio.transmitters))}")
    for name in ("chain", "train"):
        sub = getattr(cfg, name)
        lines += ["", f"[{name}]"]
        lines += [f"{f.name} = {fmt(getattr(sub, f.name))}" for f in dataclasses.fields(sub)]
    return "\n".join(lines) + "\n"
