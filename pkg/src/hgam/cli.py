"""Command-line entry points: train, evaluate, export-traj, inspect-checkpoint."""

from __future__ import annotations

import argparse
import sys

from .errors import HgamError
from .harness import POLICY_KINDS, evaluate, make_policy
from .neural import load_checkpoint
from .training import TrainConfig, load_train_config, train
from .world import WorldConfig, load_world_config


def _world_config(args) -> WorldConfig:
    if args.config:
        return load_world_config(args.config)
    return WorldConfig().validate()


def _train_config(args) -> TrainConfig:
    cfg = load_train_config(args.train_config) if args.train_config else TrainConfig()
    overrides = {}
    if getattr(args, "episodes", None) is not None:
        overrides["max_episodes"] = args.episodes
    if getattr(args, "no_gat", False):
        overrides["use_gat"] = False
    if overrides:
        cfg = TrainConfig(**{**cfg.__dict__, **overrides})
    return cfg.validate()


def _cmd_train(args) -> int:
    rows = train(_world_config(args), _train_config(args), args.seed, args.out)
    print(f"trained {len(rows)} episodes; report and checkpoints in {args.out}")
    return 0


def _policy_name(args) -> str:
    if args.policy in ("hgam", "hgam_no_gat") and getattr(args, "no_gat", False):
        return "hgam_no_gat"
    return args.policy


def _cmd_evaluate(args) -> int:
    config = _world_config(args)
    policy = make_policy(_policy_name(args), config, args.checkpoint)
    report = evaluate(policy, config, args.episodes, args.seed,
                      out_dir=args.out, export_traj=False)
    agg = report["aggregate"]
    line = "  ".join(f"{k}={agg[k]['mean']:.4f}" for k in
                     ("C", "omega", "upsilon", "D", "F"))
    print(f"{report['policy']} over {args.episodes} episodes: {line}")
    if args.out:
        print(f"report written to {args.out}/evaluation_report.json")
    return 0


def _cmd_export_traj(args) -> int:
    config = _world_config(args)
    policy = make_policy(_policy_name(args), config, args.checkpoint)
    evaluate(policy, config, args.episodes, args.seed,
             out_dir=args.out, export_traj=True)
    print(f"wrote {args.episodes} trajectory/PoI/reward-component files to {args.out}")
    return 0


def _cmd_inspect_checkpoint(args) -> int:
    tensors = load_checkpoint(args.checkpoint)
    total = 0
    print(f"{args.checkpoint}: format HGAM v1, {len(tensors)} tensors")
    for name in sorted(tensors):
        arr = tensors[name]
        total += arr.size
        print(f"  {name:48s} {arr.shape[0]:5d} x {arr.shape[1]}")
    print(f"total values: {total}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hgam",
        description="Multi-UAV data-collection/charging lab: training, "
                    "baselines, and evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train actors/critics and write checkpoints")
    p_train.add_argument("--config", help="world config file (yaml key/value)")
    p_train.add_argument("--train-config", help="training config file")
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--episodes", type=int, help="override max_episodes")
    p_train.add_argument("--out", required=True, help="output directory")
    p_train.add_argument("--no-gat", action="store_true",
                         help="ablation: zero out neighbor aggregation")
    p_train.set_defaults(func=_cmd_train)

    for name, func, traj in (("evaluate", _cmd_evaluate, False),
                             ("export-traj", _cmd_export_traj, True)):
        p = sub.add_parser(name, help=("run noise-free episodes and write "
                                       + ("trajectory files" if traj else "a metrics report")))
        p.add_argument("--config", help="world config file")
        p.add_argument("--policy", default="greedy", choices=POLICY_KINDS)
        p.add_argument("--checkpoint", help="checkpoint for hgam policies")
        p.add_argument("--episodes", type=int, default=20)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", required=traj, help="output directory")
        p.add_argument("--no-gat", action="store_true",
                       help="force the hgam_no_gat variant")
        p.set_defaults(func=func)

    p_ins = sub.add_parser("inspect-checkpoint", help="list checkpoint tensors")
    p_ins.add_argument("--checkpoint", required=True)
    p_ins.set_defaults(func=_cmd_inspect_checkpoint)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except HgamError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
