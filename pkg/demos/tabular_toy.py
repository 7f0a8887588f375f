"""Tabular Q-learning on a two-state problem with a known answer.

Action 0 stays put, action 1 switches state. Staying in state 1 pays 2 per
step, so the optimal plan is to switch once and then stay.
"""
import numpy as np

from chainscatter.agents import QTable, q_learning_update
from chainscatter.oracles import value_iteration

rewards = np.array([[0.0, 1.0], [2.0, 0.5]])
moves = np.zeros((2, 2, 2))
moves[0, 0, 0] = moves[0, 1, 1] = moves[1, 0, 1] = moves[1, 1, 0] = 1
optimal = value_iteration(rewards, moves, 0.9)

rng = np.random.default_rng(0)
table = QTable(2)
s = 0
for step in range(1, 20_001):
    a = int(rng.integers(2))
    s_next = int(np.argmax(moves[s, a]))
    q_learning_update(table, s, a, rewards[s, a], s_next, alpha=0.3, gamma=0.9)
    s = s_next
    if step in (10, 100, 1000, 20_000):
        gap = np.abs(np.array([table[0], table[1]]) - optimal).max()
        print(f"after {step:>6} updates, largest error {gap:.2e}")
print("value iteration:\n", optimal.round(4))
