"""Throughput and fee cost as the attacker's hash share grows.

A reversed transaction still pays its fee but stores nothing, so a stronger
attacker lowers throughput and raises the cost per stored unit.
"""
import tempfile

from chainscatter import harness
from chainscatter.config import reduced_preset

with tempfile.TemporaryDirectory() as out:
    rows = harness.sweep(reduced_preset(agent="random"), "q", [0.0, 0.05, 0.1, 0.2, 0.3], out, episodes=100)
for row in rows:
    print(f"q={row['value']:<5} throughput {row['mean_throughput']:.3f}  fee/unit {row['fee_per_stored_unit']:.3f}")
