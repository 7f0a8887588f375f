"""Command line: ``chainscatter {train,eval,sweep,selfcheck}``."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from . import harness
from .config import ConfigError, ExperimentConfig, load_config, reduced_preset


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else reduced_preset()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["out"] = args.out
    if getattr(args, "agent", None):
        changes["agent"] = args.agent
    return replace(cfg, **changes)


def _print_summary(label, s):
    print(f"{label}: reward {s['mean_reward']:.4f} +- {s['std_reward']:.4f}  "
          f"throughput {s['mean_throughput']:.4f}  fee/unit {s['fee_per_stored_unit']:.4f}  "
          f"({s['episodes']} episodes)")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="chainscatter", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("train", "eval", "sweep"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="experiment config file (INI sections)")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--episodes", type=int,
                       help="training episodes (train) or evaluation episodes (eval, sweep)")
        p.add_argument("--agent", choices=("d3qn", "qlearning", "htt", "backscatter", "random"))
        if name == "eval":
            p.add_argument("--checkpoint", help="D3QN checkpoint (.npz) to evaluate")
        if name == "sweep":
            p.add_argument("--param", required=True, choices=sorted(harness.SWEEPABLE))
            p.add_argument("--values", required=True, help="comma list; busy ranges as lo:hi")
    check = sub.add_parser("selfcheck")
    check.add_argument("--seed", type=int, default=0)
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    if args.command == "selfcheck":
        from .selfcheck import selfcheck
        report = selfcheck(args.seed)
        return 0 if all(report.values()) else 1

    try:
        cfg = _load(args)
        if args.command == "train":
            result = harness.train(cfg, episodes=args.episodes)
            print(f"wrote {result['metrics']}" + (f" and {result['checkpoint']}" if result["checkpoint"] else ""))
            if result["convergence_episode"] is not None:
                print(f"converged at episode {result['convergence_episode']}")
        elif args.command == "eval":
            if args.checkpoint:
                policy = args.checkpoint
            elif cfg.agent in ("d3qn", "qlearning"):
                parser.error("evaluating a learning agent needs --checkpoint")
            else:
                policy = harness.HeuristicPolicy(cfg.agent, harness.stream(cfg.seed, "eval-policy"))
            _print_summary(cfg.agent if not args.checkpoint else args.checkpoint,
                           harness.evaluate(policy, cfg, args.episodes))
        else:
            values = harness.parse_values(args.param, args.values)
            for row in harness.sweep(cfg, args.param, values, episodes=args.episodes):
                print(f"{row['param']}={row['value']}: reward {row['mean_reward']:.4f}  "
                      f"throughput {row['mean_throughput']:.4f}  fee/unit {row['fee_per_stored_unit']:.4f}")
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
