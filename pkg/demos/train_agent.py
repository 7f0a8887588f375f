"""Train the dueling double-Q agent for a while and compare it with Random.

The default is a short run; pass --episodes 3000 for the full reduced-preset
schedule (roughly 20 minutes on one core).
"""
import argparse
from dataclasses import replace

from chainscatter import harness
from chainscatter.config import reduced_preset

parser = argparse.ArgumentParser()
parser.add_argument("--episodes", type=int, default=200)
parser.add_argument("--seed", type=int, default=0)
parser.add_argument("--out", default="runs/demo")
args = parser.parse_args()

cfg = reduced_preset(seed=args.seed)
cfg = replace(cfg, train=replace(cfg.train, episodes=args.episodes))
result = harness.train(cfg, out_dir=args.out)
rewards = [r.mean_reward for r in result["records"]]
k = max(1, len(rewards) // 10)
print(f"training reward, first {k} episodes {sum(rewards[:k]) / k:.3f}, last {k} {sum(rewards[-k:]) / k:.3f}")
print(f"metrics in {result['metrics']}, checkpoint {result['checkpoint']}")

agent = harness.evaluate(result["checkpoint"], cfg, episodes=50)
rand = harness.evaluate(harness.HeuristicPolicy("random", None), cfg, episodes=50)
for name, s in (("d3qn", agent), ("random", rand)):
    print(f"{name:<7} reward {s['mean_reward']:.3f}  throughput {s['mean_throughput']:.3f}  "
          f"fee/unit {s['fee_per_stored_unit']:.3f}")
