"""Main entry point for the quantum trajectories command line."""

import argparse
import asyncio
import sys
from pathlib import Path
from typing import List, Optional

# Add the project root to Python path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from pydantic import ValidationError

from app import __version__
from app.core.config import settings
from app.core.discrete import KrausError
from app.core.ensemble import TrajectoryFailure
from app.core.ergodic import ErgodicError
from app.core.logger import logger
from app.core.model import ModelError
from app.core.numlin import LinearAlgebraError
from app.core.serialization import ModelFileError
from app.handlers import COMMANDS

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subcommand per handler."""
    parser = argparse.ArgumentParser(
        prog="qtraj",
        description="Simulate quantum trajectories and verify their ergodic properties.",
        epilog="Tolerances can be overridden with QTRAJ_* environment variables (e.g. QTRAJ_PSD_TOL).",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        command.register(subparsers)
    return parser


async def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, dispatch to the command handler and map failures to exit codes."""
    args = build_parser().parse_args(argv)
    logger.debug(f"Command: {args.command}, log level: {settings.log_level}")

    try:
        return await args.handler(args)
    except (ModelFileError, ValidationError, ValueError, OSError) as e:
        logger.error(f"Invalid input: {e}")
        return EXIT_USAGE
    except TrajectoryFailure as e:
        logger.error(f"{e}; replay with --seed {e.seed} and inspect trajectory {e.index}")
        return EXIT_FAIL
    except (ModelError, KrausError, ErgodicError, LinearAlgebraError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_FAIL


def run():
    """Console script entry point."""
    try:
        sys.exit(asyncio.run(main()))
    except KeyboardInterrupt:
        logger.info("Interrupted by user")
        sys.exit(130)


if __name__ == "__main__":
    run()
