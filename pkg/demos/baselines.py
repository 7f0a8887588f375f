"""Compare the three rule-based schedulers on the reduced network.

All policies see the same channel and mempool draws, so differences come
from the decisions alone.
"""
from chainscatter import harness
from chainscatter.config import reduced_preset

cfg = reduced_preset()
print(f"{'policy':<12} {'reward':>8} {'throughput':>11} {'fee/unit':>9}")
for kind in ("htt", "backscatter", "random"):
    s = harness.evaluate(harness.HeuristicPolicy(kind, None), cfg, episodes=50)
    print(f"{kind:<12} {s['mean_reward']:>8.3f} {s['mean_throughput']:>11.3f} {s['fee_per_stored_unit']:>9.3f}")
