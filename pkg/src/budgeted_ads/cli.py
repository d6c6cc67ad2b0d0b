"""Command-line entry point: ``budgeted-ads {run,battery,validate,generate,trace}``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .engine import run_policy, write_trace_csv
from .experiment import (
    BATTERY, ConfigError, ExperimentConfig, battery_instance, parse_config, run_experiment,
)
from .model import InstanceError, generate_instance, validate_instance
from .policy import PolicySpec
from .realization import ClickSource, Mode


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--horizons", type=int, nargs="+", metavar="T")
    p.add_argument("--replications", type=int, metavar="N")
    p.add_argument("--policy", action="append", metavar="KIND",
                   help="budgeted_ucb | greedy | random_available | fixed_arm:<i> (repeatable)")
    p.add_argument("--ucb-constant", type=float, metavar="C")
    p.add_argument("--seed", type=int, metavar="S")
    p.add_argument("--workers", type=int, metavar="W")
    p.add_argument("--diagnostics", action="store_true", default=None)


def _overrides(args: argparse.Namespace) -> dict:
    return {
        "horizons": args.horizons,
        "replications": args.replications,
        "policies": args.policy,
        "ucb_constant": args.ucb_constant,
        "seed": args.seed,
        "workers": args.workers,
        "diagnostics": args.diagnostics,
    }


def cmd_run(args: argparse.Namespace) -> int:
    overrides = _overrides(args)
    overrides["out"] = args.out
    overrides["instance"] = args.instance
    config = parse_config(args.config, overrides)
    result = run_experiment(config)
    if config.out:
        print(f"wrote {config.out}")
    else:
        sys.stdout.write(result.header() + result.csv_body())
    return 0


BATTERY_DEFAULTS = {
    "horizons": [1000, 4000, 16000],
    "replications": 200,
    "policies": ["budgeted_ucb", "random_available"],
    "diagnostics": True,
}


def cmd_battery(args: argparse.Namespace) -> int:
    out_dir = Path(args.out_dir)
    for name in args.only or BATTERY:
        raw = dict(BATTERY_DEFAULTS, instance=f"battery:{name}")
        config = parse_config(None, _overrides(args), raw=raw)
        config.out = str(out_dir / f"{name}.csv")
        run_experiment(config)
        print(f"wrote {config.out}")
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    with open(args.instance, encoding="utf-8") as fh:
        raw = json.load(fh)
    instance, problems = validate_instance(raw)
    if instance is None:
        for p in problems:
            print(p, file=sys.stderr)
        return 1
    print(instance.to_json())
    return 0


def cmd_generate(args: argparse.Namespace) -> int:
    spec = json.loads(Path(args.spec).read_text(encoding="utf-8")) if args.spec else {}
    if args.family:
        spec["family"] = args.family
    if args.k is not None:
        spec["k"] = args.k
    if args.horizon is not None:
        spec["horizon"] = args.horizon
    print(generate_instance(spec, args.seed).to_json())
    return 0


def cmd_trace(args: argparse.Namespace) -> int:
    if args.instance.startswith("battery:"):
        instance = battery_instance(args.instance.split(":", 1)[1])
    else:
        with open(args.instance, encoding="utf-8") as fh:
            instance, problems = validate_instance(json.load(fh))
        if instance is None:
            raise InstanceError(problems)
    if args.horizon:
        instance = instance.with_horizon(args.horizon)
    policy = PolicySpec.parse(args.policy, args.ucb_constant)
    mode = Mode.STACK if args.mode == "stack" else Mode.PER_ROUND
    trace = run_policy(instance, policy, ClickSource.for_instance(instance, args.seed, mode))
    write_trace_csv(trace, args.out)
    print(f"wrote {args.out}: reward {trace.total_reward!r}, impressions {trace.impressions.tolist()}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="budgeted-ads", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="replicated coupled experiment from a JSON config")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--instance", help="instance path or battery:<name> (overrides the config)")
    p.add_argument("--out", help="CSV output path; a .bounds.json report is written next to it")
    _add_run_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("battery", help="run the bundled desk battery, one CSV per instance")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--only", nargs="+", choices=BATTERY)
    _add_run_flags(p)
    p.set_defaults(func=cmd_battery)

    p = sub.add_parser("validate", help="check an instance file and print its canonical form")
    p.add_argument("instance")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("generate", help="print a generated instance")
    p.add_argument("--spec", help="JSON generator config")
    p.add_argument("--family", choices=("uniform", "two-gap", "deterministic"))
    p.add_argument("--k", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("trace", help="dump one run round by round as CSV")
    p.add_argument("--instance", required=True)
    p.add_argument("--policy", default="budgeted_ucb")
    p.add_argument("--ucb-constant", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--horizon", type=int)
    p.add_argument("--mode", choices=("stack", "per_round"), default="stack")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_trace)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InstanceError, OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


__all__ = ["ExperimentConfig", "build_parser", "main"]
