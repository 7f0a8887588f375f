"""Simulator and learning agents for scheduling RF-powered backscatter transmitters
whose data is stored on fee-market blockchains."""

from .agents import D3QNAgent, QLearningAgent, TrainConfig
from .chain import ChainConfig, Mempool, Transaction, attack_probability
from .config import ExperimentConfig, load_config, paper_preset, reduced_preset
from .mdp import Action, ActionTable, Environment, NetworkState
from .neural import Adam, QNetwork
from .radio import RadioConfig, TransmitterParams, TransmitterState

__version__ = "0.1.0"
