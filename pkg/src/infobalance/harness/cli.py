"""Command-line entry point: ``infobalance {balance,simulate,sweep,diagnose}``.

Exit codes: 0 success, 1 configuration/validation error, 2 runtime error.
Global flags may be given before or after the subcommand; flags override
values from the ``--config`` file.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .. import __version__
from .commands import cmd_balance, cmd_diagnose, cmd_simulate, cmd_sweep
from .config import ConfigError, load_config

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("infobalance")


class _Parser(argparse.ArgumentParser):
    """Usage errors are validation errors: exit with code 1, not argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return v


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    d = argparse.SUPPRESS if suppress else None
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=d, help="YAML experiment config")
    p.add_argument("--seed", type=_u64, default=d, help="master seed (unsigned 64-bit)")
    p.add_argument("--out", default=d, help="output directory")
    p.add_argument("--workers", type=int, default=d, help="worker processes for sweeps")
    p.add_argument("--format", choices=("csv", "jsonl"), default=d, help="tabular output format")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False,
                   help="debug logging")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="infobalance",
        description="Balance function, CIMA loop, antifragility and criticality experiments",
        parents=[_global_flags(False)],
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    flags = _global_flags(True)

    p = sub.add_parser("balance", parents=[flags], help="tabulate f(p) and its landmarks")
    p.add_argument("--start", type=float, dest="balance.grid_start", metavar="P", help="first grid point")
    p.add_argument("--end", type=float, dest="balance.grid_end", metavar="P", help="last grid point")
    p.add_argument("--points", type=int, dest="balance.grid_points", metavar="N", help="number of grid points")

    p = sub.add_parser("simulate", parents=[flags], help="run one CIMA (or open-loop) episode")
    p.add_argument("--steps", "-T", type=int, dest="scenario.T", metavar="T", help="episode length")
    p.add_argument("--open-loop", action="store_true", help="disable the CIMA controller")

    p = sub.add_parser("sweep", parents=[flags], help="payoff curve over a perturbation ladder")
    p.add_argument("--trials", type=int, dest="sweep.trials", metavar="N", help="trials per magnitude")
    p.add_argument("--open-loop", action="store_true", help="measure payoffs without the controller")
    p.add_argument(
        "--synthetic", choices=("quadratic", "linear", "concave"), dest="sweep.synthetic_payoff",
        help="bypass simulation and use a known payoff function",
    )

    p = sub.add_parser("diagnose", parents=[flags], help="criticality report for a trace")
    p.add_argument("--trace", dest="diagnose.trace", metavar="PATH", help="steps.csv or steps.jsonl from simulate")
    p.add_argument("--generator", choices=("white", "pink", "brown"), dest="diagnose.generator")
    p.add_argument("--scan-s-min", action="store_const", const=True, dest="diagnose.scan_s_min",
                   help="choose s_min by KS minimization (slow)")
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    ov = {
        "master_seed": getattr(args, "seed", None),
        "output_dir": getattr(args, "out", None),
        "workers": getattr(args, "workers", None),
        "format": getattr(args, "format", None),
    }
    ov.update({k: v for k, v in vars(args).items() if "." in k})
    if getattr(args, "open_loop", False):
        key = "scenario.closed_loop" if args.command == "simulate" else "sweep.closed_loop"
        ov[key] = False
    return ov


COMMANDS = {
    "balance": cmd_balance,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "diagnose": cmd_diagnose,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = load_config(args.config, _overrides(args))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        outputs = COMMANDS[args.command](cfg)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for path in outputs:
        log.info("wrote %s", path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
