"""Command line front end.

Exit codes: 0 on success, 1 for configuration problems (bad YAML, unknown
keys, invalid values, missing --config), 2 for runtime failures.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .config import ConfigError, config_hash, load_spec
from .harness import resolve_out_dir, run_experiment, summarize


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semsched",
        description="Semantic adaptation scheduling experiments.")
    sub = parser.add_subparsers(dest="command")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment YAML file")
    common.add_argument("--out", help="output directory override")
    common.add_argument("--seeds", help="comma-separated seed list")
    common.add_argument("--workers", type=int, help="parallel worker count")
    common.add_argument("--eval-episodes", type=int, dest="eval_episodes",
                        help="evaluation episodes per seed")
    common.add_argument("--updates", type=int,
                        help="training updates per agent")

    p_train = sub.add_parser("train", parents=[common],
                             help="train and evaluate the agent grid")
    p_train.add_argument("--agents", help="comma-separated agent list")

    p_eval = sub.add_parser("eval", parents=[common],
                            help="re-evaluate saved checkpoints")
    p_eval.add_argument("--agents", help="comma-separated agent list")

    p_ablate = sub.add_parser("ablate", parents=[common],
                              help="run the constrained-agent ablation grid")
    p_ablate.add_argument("--ablation",
                          help="comma-separated ablation names (default all)")

    p_report = sub.add_parser("report", help="summarize a finished run")
    p_report.add_argument("--config", help="experiment YAML file")
    p_report.add_argument("--out", help="run directory to summarize")

    p_val = sub.add_parser("validate-config", help="check a config file")
    p_val.add_argument("--config", help="experiment YAML file")
    return parser


def _split_csv(value: str) -> list[str]:
    return [item.strip() for item in value.split(",") if item.strip()]


def _load_spec(args):
    if not getattr(args, "config", None):
        raise ConfigError("--config is required")
    spec = load_spec(args.config)
    if getattr(args, "out", None):
        spec = replace(spec, out_dir=args.out)
    if getattr(args, "seeds", None):
        try:
            seeds = tuple(int(s) for s in _split_csv(args.seeds))
        except ValueError as exc:
            raise ConfigError(f"bad --seeds value: {args.seeds!r}") from exc
        spec = replace(spec, seeds=seeds)
    if getattr(args, "agents", None):
        spec = replace(spec, agents=tuple(_split_csv(args.agents)))
    if getattr(args, "workers", None):
        spec = replace(spec, workers=args.workers)
    if getattr(args, "eval_episodes", None):
        spec = replace(spec, eval_episodes=args.eval_episodes)
    if getattr(args, "updates", None):
        spec = replace(spec, train=replace(spec.train, updates=args.updates))
    spec.validate()
    return spec


def _dispatch(args) -> int:
    if args.command == "validate-config":
        spec = _load_spec(args)
        print(f"ok: scenario={spec.scenario} hash={config_hash(spec)}")
        return 0
    if args.command in ("train", "eval"):
        spec = _load_spec(args)
        if args.command == "eval":
            spec = replace(spec, eval_only=True)
        manifest = run_experiment(spec)
        print(f"wrote {len(manifest['runs'])} runs to {spec.out_dir}")
        return 0
    if args.command == "ablate":
        spec = _load_spec(args)
        names = (_split_csv(args.ablation)
                 if getattr(args, "ablation", None) else None)
        manifest = run_experiment(spec, ablations=names or None)
        print(f"wrote {len(manifest['runs'])} runs to {spec.out_dir}")
        return 0
    if args.command == "report":
        if getattr(args, "out", None):
            out_dir = resolve_out_dir(args.out)
        elif getattr(args, "config", None):
            out_dir = resolve_out_dir(_load_spec(args).out_dir)
        else:
            raise ConfigError("report needs --out or --config")
        summary = summarize(out_dir)
        labels = ", ".join(sorted(summary["labels"])) or "none"
        print(f"summarized {out_dir} ({labels})")
        return 0
    raise ConfigError(f"unknown command: {args.command!r}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        return 1
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failures map to a distinct code
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
