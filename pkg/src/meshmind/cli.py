"""Command-line entry points: run, sweep, oracle, dump-kb."""

from __future__ import annotations

import argparse
import json
import sys

from . import harness
from .kb import KnowledgeBase
from .optimize import brute_force_channels


def _parse_seed_range(text: str) -> list[int]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(part) for part in text.split(",")]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="meshmind")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute one scenario run")
    run.add_argument("spec")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--out", default=None)

    swp = sub.add_parser("sweep", help="run a scenario across a seed range")
    swp.add_argument("spec")
    swp.add_argument("--seeds", required=True, help="e.g. 1..20 or 1,2,5")
    swp.add_argument("--out", default=None)

    oracle = sub.add_parser("oracle", help="independent optima")
    oracle_sub = oracle.add_subparsers(dest="oracle_kind", required=True)
    och = oracle_sub.add_parser("channels", help="brute-force channel optimum")
    och.add_argument("spec")
    omdp = oracle_sub.add_parser("mdp", help="value iteration on an MDP file")
    omdp.add_argument("mdp_file")
    omdp.add_argument("--tol", type=float, default=1e-9)

    dump = sub.add_parser("dump-kb", help="print a knowledge-base snapshot")
    dump.add_argument("snapshot")
    return parser


def _cmd_run(args) -> int:
    spec = harness.load_scenario(args.spec)
    report, _ = harness.run_scenario(spec, seed=args.seed, out_dir=args.out)
    for key, value in report.rows():
        print(f"{key}={value}")
    return 0


def _cmd_sweep(args) -> int:
    spec = harness.load_scenario(args.spec)
    seeds = _parse_seed_range(args.seeds)
    reports = harness.sweep(spec, seeds, out_dir=args.out)
    for seed, report in sorted(reports.items()):
        print(f"seed={seed} final_conflicts={report.final_conflicts} "
              f"satisfaction={report.satisfaction_ratio:.4f} "
              f"disruptions={report.disruptions} "
              f"kb_hit_rate={report.kb_hit_rate:.4f}")
    return 0


def _cmd_oracle_channels(args) -> int:
    spec = harness.load_scenario(args.spec)
    assignment, value = brute_force_channels(spec.env_config.topology)
    print(f"optimal_conflicts={int(value)}")
    print("assignment=" + json.dumps(assignment, sort_keys=True))
    return 0


def _cmd_oracle_mdp(args) -> int:
    mdp = harness.MdpSpec.from_yaml(args.mdp_file)
    q_star, policy = harness.value_iteration(mdp, tol=args.tol)
    for s in range(mdp.state_count):
        values = " ".join(f"{v:.6f}" for v in q_star[s])
        print(f"state={s} q=[{values}] greedy_action={int(policy[s])}")
    return 0


def _cmd_dump_kb(args) -> int:
    kb = KnowledgeBase.load(args.snapshot)
    print(f"capacity={kb.capacity} eviction={kb.eviction} cases={len(kb)}")
    for case in kb.cases:
        percept = ",".join(f"{v:.4f}" for v in case.percept.values)
        print(f"percept=[{percept}] action={json.dumps(case.action and __action(case))} "
              f"coefficient={case.coefficient:.4f} hits={case.hits} "
              f"last_used={case.last_used} created={case.created}")
    return 0


def __action(case):
    from .optimize import action_to_dict

    return action_to_dict(case.action)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        if args.command == "oracle":
            if args.oracle_kind == "channels":
                return _cmd_oracle_channels(args)
            return _cmd_oracle_mdp(args)
        if args.command == "dump-kb":
            return _cmd_dump_kb(args)
        return 2
    except Exception as exc:  # one-line machine-parseable failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
