"""
Subcommand router for ISMForge.

Every command module exposes ``register(subparsers, parents)``, which adds
its parser and sets ``handler`` to a function taking the parsed arguments
and returning an exit code.
"""

import argparse

from app.cli.commands import evaluate, gen, report, rir
from app.config import settings

COMMANDS = (gen, rir, evaluate, report)


def common_options() -> argparse.ArgumentParser:
    """Options accepted by every subcommand."""
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument(
        "--log-level",
        type=str.upper,
        default=settings.LOG_LEVEL,
        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
        help=f"Logging level (default: {settings.LOG_LEVEL})",
    )
    parent.add_argument("--quiet", action="store_true", help="Hide progress bars")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ismforge",
        description="Image-source RIR simulation, dataset generation and SRP-PHAT evaluation",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {settings.VERSION}")
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    parents = [common_options()]
    for command in COMMANDS:
        command.register(subparsers, parents)
    return parser
