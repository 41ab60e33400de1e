import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from src.conf.config import settings
from src.errors import ConsensusLabError
from src.services.experiments import cmd_equilibrium, cmd_run, cmd_verify, load_config

logger = logging.getLogger(__name__)

EXIT_MET = 0
EXIT_VIOLATED = 1
EXIT_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rational-consensus",
        description="Simulate consensus protocols among rational agents and check equilibria",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(command: argparse.ArgumentParser) -> None:
        command.add_argument("--config", required=True, help="Path to an experiment JSON file")
        command.add_argument("--out", default=None, help=f"Output directory (default: {settings.output_dir})")
        command.add_argument("--cap", type=int, default=None, help="Maximum number of enumerated executions")

    run = sub.add_parser("run", help="Enumerate runs and write traces, summary and outcomes")
    common(run)
    run.add_argument("--seed", type=int, default=None, help="Seed for the sampling fallback")

    equilibrium = sub.add_parser("equilibrium", help="Search for a profitable coalition deviation")
    common(equilibrium)

    verify = sub.add_parser("verify", help="Run an epistemic verifier")
    common(verify)
    verify.add_argument(
        "--check",
        choices=["encoding", "ris-resilience", "silences", "transform"],
        default=None,
        help="Verifier to run (default: the config's check field)",
    )
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    The main function parses the command line, runs one subcommand and maps the
    outcome to an exit status: 0 expectation met, 1 violated, 2 usage or config error.

    :param argv: Optional[Sequence[str]]: Arguments without the program name
    :return: The exit status
    """

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_MET
    logging.basicConfig(level=settings.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    if args.cap is not None and args.cap <= 0:
        logger.error("--cap must be positive")
        return EXIT_USAGE
    out_dir = Path(args.out or settings.output_dir)
    try:
        config = load_config(args.config)
        if args.command == "run":
            result = cmd_run(config, out_dir, args.cap, args.seed)
        elif args.command == "equilibrium":
            result = cmd_equilibrium(config, out_dir, args.cap)
        else:
            result = cmd_verify(config, args.check, out_dir, args.cap)
    except ConsensusLabError as err:
        logger.error("%s: %s", err.kind, err)
        return EXIT_USAGE

    if not result.met:
        logger.warning("expectation %r not met", config.expect)
        return EXIT_VIOLATED
    return EXIT_MET


if __name__ == "__main__":
    sys.exit(main())
