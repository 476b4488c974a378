"""
Command-line surface of the toolkit.
"""

import argparse
import logging
import sys
from typing import List, Optional

from backend.commands import COMMANDS
from shared.config import get_config, setup_logging
from shared.errors import EstimatorBudgetError, OptEstimateError, SpecError
from shared.models import OutputFormat, RunConfig

logger = logging.getLogger(__name__)


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--instance', help='Instance spec: path to a JSON file or inline JSON')
    common.add_argument('--seed', type=_u64, default=0, help='Seed for every random choice (default: 0)')
    common.add_argument('--gamma', type=float, default=get_config().default_gamma,
                        help='Double greedy precision γ (default: 0.05)')
    common.add_argument('--samples', type=_positive_int, default=get_config().default_samples,
                        help='Monte Carlo / property samples (default: 10000)')
    common.add_argument('--trials', type=_positive_int, default=100,
                        help='Discovery trials per curve row (default: 100)')
    common.add_argument('--rounds-max', type=_positive_int, default=6,
                        help='Largest number of rounds in curves and tables (default: 6)')
    common.add_argument('--out', help='Output file (default: stdout)')
    common.add_argument('--format', choices=[f.value for f in OutputFormat],
                        help='Output format (default depends on the command)')
    common.add_argument('--exact', action='store_true', help='Use exact multilinear evaluation')
    common.add_argument('--verbose', action='store_true', help='Enable debug logging')
    common.add_argument('--log-file', help='Also write logs to this file')

    parser = argparse.ArgumentParser(prog='adaptivity-cli',
                                     description='Adaptive complexity experiments for submodular maximization')
    subparsers = parser.add_subparsers(dest='command', required=True)
    subparsers.add_parser('verify', parents=[common], help='Run the property suites on an instance')
    subparsers.add_parser('run-dg', parents=[common], help='Run the low-adaptivity double greedy')
    subparsers.add_parser('adaptivity-curve', parents=[common], help='Best value against known layers')
    subparsers.add_parser('bounds', parents=[common], help='Closed-form round lower bounds')
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    settings = get_config()
    level = logging.DEBUG if args.verbose else getattr(logging, settings.log_level.upper(), logging.INFO)
    setup_logging(level, args.log_file or settings.log_file)

    cfg = RunConfig(
        command=args.command,
        instance=args.instance,
        seed=args.seed,
        gamma=args.gamma,
        samples=args.samples,
        trials=args.trials,
        rounds_max=args.rounds_max,
        out=args.out,
        format=OutputFormat(args.format) if args.format else None,
        exact=args.exact,
    )
    logger.debug(f"Running {cfg.command} with {cfg.to_dict()}")

    try:
        settings.validate()
        return COMMANDS[cfg.command](cfg)
    except (SpecError, ValueError, EstimatorBudgetError, OptEstimateError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
