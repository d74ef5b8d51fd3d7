"""Command-line surface: solve, solve-ensemble, bench, scaling, generate, train.

Exit codes: 0 success, 2 usage errors (argparse), 3 file or parse problems,
4 checkpoint problems, 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .bench import (
    bench_directory,
    generate_files,
    load_best_known,
    load_instance,
    scaling_sweep,
    solve_command,
    solve_ensemble,
    write_results_csv,
    write_scaling_csv,
)
from .checkpoint import CheckpointError
from .instances import ParseError
from .policy import PolicyConfig, PolicyNetwork
from .training import TrainConfig, train

EXIT_FILE = 3
EXIT_CHECKPOINT = 4


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--steps", type=int, default=500)
    parser.add_argument("--format", choices=["standard", "taillard"],
                        default="standard")
    parser.add_argument("--out", type=Path, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jobshop",
        description="N5 local search for job-shop scheduling with a learned "
                    "move-picking policy and classical baselines")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="policy rollout on one instance")
    p.add_argument("instance", type=Path)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--best-known", type=Path, default=None)
    p.add_argument("--greedy", action="store_true",
                   help="argmax actions instead of sampling")
    _add_common(p)

    p = sub.add_parser("solve-ensemble",
                       help="rollout several checkpoints, keep the best")
    p.add_argument("instance", type=Path)
    p.add_argument("--checkpoints", type=Path, nargs="+", required=True)
    p.add_argument("--best-known", type=Path, default=None)
    _add_common(p)

    p = sub.add_parser("bench", help="run a method over a directory")
    p.add_argument("directory", type=Path)
    p.add_argument("--method", choices=["policy", "gd", "bi", "fi", "tabu"],
                   required=True)
    p.add_argument("--checkpoint", type=Path, default=None)
    p.add_argument("--best-known", type=Path, default=None)
    _add_common(p)

    p = sub.add_parser("scaling", help="rollout wall time vs problem size")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--sweep", choices=["jobs", "machines"], default="jobs")
    p.add_argument("--fixed", type=int, default=None,
                   help="the non-swept dimension (default: 10 machines / 40 jobs)")
    p.add_argument("--values", type=str, default=None,
                   help="comma-separated sweep values")
    p.add_argument("--reps", type=int, default=5)
    _add_common(p)

    p = sub.add_parser("generate", help="write random instances")
    p.add_argument("--jobs", type=int, required=True)
    p.add_argument("--machines", type=int, required=True)
    p.add_argument("--count", type=int, required=True)
    _add_common(p)

    p = sub.add_parser("train", help="train a policy")
    p.add_argument("--config", type=Path, default=None,
                   help="TOML file with TrainConfig keys and a [policy] table")
    p.add_argument("--resume", type=Path, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--total-instances", type=int, default=None)
    p.add_argument("--out", type=Path, default=Path("runs/default"))
    return parser


def load_train_config(path: Path | None, overrides: dict) -> TrainConfig:
    data: dict = {}
    if path is not None:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    policy_data = data.pop("policy", {})
    allowed = {f.name for f in fields(TrainConfig)} - {"policy"}
    unknown = set(data) - allowed
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    unknown_policy = set(policy_data) - {f.name for f in fields(PolicyConfig)}
    if unknown_policy:
        raise ValueError(f"unknown policy keys: {sorted(unknown_policy)}")
    for key, value in overrides.items():
        if value is not None:
            data[key] = value
    cfg = TrainConfig(policy=PolicyConfig(**policy_data), **data)
    cfg.validate()
    return cfg


def _emit(payload: dict, out: Path | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out is not None:
        out.write_text(text + "\n", encoding="utf-8")
    print(text)


def run(args: argparse.Namespace) -> int:
    if args.command == "solve":
        inst = load_instance(args.instance, args.format)
        policy = PolicyNetwork.load(args.checkpoint)
        table = load_best_known(args.best_known)
        payload = solve_command(args.instance.stem, inst, policy, args.steps,
                                args.seed, table.get(args.instance.stem),
                                greedy=args.greedy)
        _emit(payload, args.out)
        return 0

    if args.command == "solve-ensemble":
        inst = load_instance(args.instance, args.format)
        policies = [PolicyNetwork.load(p) for p in args.checkpoints]
        table = load_best_known(args.best_known)
        payload = solve_ensemble(args.instance.stem, inst, policies,
                                 args.steps, args.seed,
                                 table.get(args.instance.stem))
        _emit(payload, args.out)
        return 0

    if args.command == "bench":
        policy = None
        if args.method == "policy":
            if args.checkpoint is None:
                raise ValueError("--checkpoint is required for --method policy")
            policy = PolicyNetwork.load(args.checkpoint)
        table = load_best_known(args.best_known)
        rows, summary = bench_directory(args.directory, args.method,
                                        args.steps, args.seed, table,
                                        fmt=args.format, policy=policy)
        out = args.out or Path("bench_results.csv")
        write_results_csv(out, rows)
        print(json.dumps(summary, indent=2, sort_keys=True))
        return 0

    if args.command == "scaling":
        policy = PolicyNetwork.load(args.checkpoint)
        if args.sweep == "jobs":
            fixed = args.fixed if args.fixed is not None else 10
            values = [int(v) for v in (args.values or
                                       "10,20,30,40,50,60").split(",")]
            sizes = [(v, fixed) for v in values]
        else:
            fixed = args.fixed if args.fixed is not None else 40
            values = [int(v) for v in (args.values or
                                       "5,10,15,20,25,30").split(",")]
            sizes = [(fixed, v) for v in values]
        rows = scaling_sweep(policy, sizes, args.reps, args.steps, args.seed)
        out = args.out or Path("scaling.csv")
        write_scaling_csv(out, rows)
        print(json.dumps(rows, indent=2))
        return 0

    if args.command == "generate":
        out = args.out or Path("instances")
        paths = generate_files(args.jobs, args.machines, args.count,
                               args.seed, out, fmt=args.format)
        for path in paths:
            print(path)
        return 0

    if args.command == "train":
        cfg = load_train_config(args.config, {
            "seed": args.seed, "total_instances": args.total_instances})
        result = train(cfg, args.out, resume_from=args.resume)
        print(json.dumps({
            "best_checkpoint": str(result.best_checkpoint),
            "last_checkpoint": str(result.last_checkpoint),
            "log": str(result.log_path),
            "best_validation_makespan": result.best_metric,
        }, indent=2))
        return 0

    raise ValueError(f"unhandled command {args.command!r}")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return run(args)
    except (FileNotFoundError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FILE
    except CheckpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
