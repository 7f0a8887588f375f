"""How likely is a stored transaction to be reversed?

An attacker holding a share q of the hash power races the honest miners. We
compare the closed-form reversal probability with a block-by-block race
simulation for a few confirmation depths.
"""
import numpy as np

from chainscatter.chain import attack_probability
from chainscatter.oracles import double_spend_race

rng = np.random.default_rng(0)
print(f"{'q':>5} {'depth':>5} {'closed form':>12} {'simulated':>10}")
for q in (0.05, 0.1, 0.2, 0.3):
    for depth in (1, 2, 6):
        sim = double_spend_race(q, depth, 200_000, rng)
        print(f"{q:>5.2f} {depth:>5d} {attack_probability(q, depth):>12.5f} {sim:>10.5f}")

print("\nA majority attacker always wins:", attack_probability(0.5, 6))
