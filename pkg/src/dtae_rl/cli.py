"""Command line entry point: ``dtae-rl {train,sweep,ablate,check,eval}``.

Exit status: 0 success, 1 usage or configuration error, 2 numeric
failure, 3 a theory check failed.
"""

from __future__ import annotations

import argparse
import sys
import warnings

from .envs import make_env
from .exceptions import CheckFailure, ConfigError, NumericError, UsageError
from .experiments import parse_seeds, run_ablate, run_sweep, run_train
from .rollout import greedy_returns
from .theory_checks import run_all_checks
from .trainer import load_checkpoint

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_CHECK = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _run_args(p: argparse.ArgumentParser, default_out: str) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--preset", choices=("spod", "ppo", "a2c"), help="starting point applied before --config")
    seeds = p.add_mutually_exclusive_group()
    seeds.add_argument("--seed", type=int, help="single seed")
    seeds.add_argument("--seeds", help="inclusive seed range N..M")
    p.add_argument("--out", default=default_out, help=f"output directory (default {default_out})")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key; repeatable")
    p.add_argument("-q", "--quiet", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dtae-rl", description="Soft policy optimization with dual-track advantages.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    _run_args(sub.add_parser("train", help="train one configuration over seeds"), "runs/train")

    sw = sub.add_parser("sweep", help="one run per value of a config key")
    _run_args(sw, "runs/sweep")
    sw.add_argument("--axis", required=True, help="config key to vary, e.g. alpha")
    sw.add_argument("--values", required=True, help="comma separated values; may be empty")

    _run_args(sub.add_parser("ablate", help="SPOD, GAE-only, eta=0 and unclipped variants"), "runs/ablate")

    ck = sub.add_parser("check", help="numerical checks of the soft performance-difference identity and bounds")
    ck.add_argument("--seed", type=int, default=0)

    ev = sub.add_parser("eval", help="greedy rollouts of a saved checkpoint")
    ev.add_argument("checkpoint")
    ev.add_argument("--env", help="environment name (defaults to the one stored in the checkpoint)")
    ev.add_argument("--episodes", type=int, default=10)
    ev.add_argument("--seed", type=int, default=0)
    return parser


def _seeds(args) -> list[int]:
    if args.seeds:
        return parse_seeds(args.seeds)
    return [args.seed if args.seed is not None else 0]


def _dispatch(args) -> int:
    verbose = not getattr(args, "quiet", False)
    if args.command == "train":
        run_train(args.config, args.overrides, _seeds(args), args.out, verbose, args.preset)
    elif args.command == "sweep":
        values = [v for v in args.values.split(",") if v.strip()]
        run_sweep(args.config, args.axis, values, args.overrides, _seeds(args), args.out, verbose, args.preset)
    elif args.command == "ablate":
        run_ablate(args.config, args.overrides, _seeds(args), args.out, verbose, args.preset)
    elif args.command == "check":
        reports = run_all_checks(args.seed)
        for r in reports:
            print(r)
        if not all(r.passed for r in reports):
            raise CheckFailure("one or more checks failed")
    elif args.command == "eval":
        policy, _, stored_env = load_checkpoint(args.checkpoint)
        name = args.env or stored_env
        if not name:
            raise UsageError("checkpoint has no environment name; pass --env")
        returns = greedy_returns(policy, make_env(name), args.episodes, args.seed)
        print(f"env={name} episodes={args.episodes} mean_return={returns.mean():.4f} "
              f"min={returns.min():.4f} max={returns.max():.4f}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return _dispatch(args)
    except CheckFailure as e:
        print(f"dtae-rl: {e}", file=sys.stderr)
        return EXIT_CHECK
    except NumericError as e:
        print(f"dtae-rl: numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, UsageError, OSError) as e:
        print(f"dtae-rl: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
