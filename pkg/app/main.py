"""
ISMForge - Main Entry Point

This module configures logging, parses the command line, dispatches to the
subcommand handlers and maps errors to exit codes.

Usage:
    python -m app.main gen --profile voicehome --mode advanced --n 200 --seed 7 \\
        --speech-dir speech --out out/advanced
    python -m app.main rir out/advanced/scenes/voicehome-000000.json --out rir0
    python -m app.main eval out/advanced/manifest.tsv --out advanced.res
    python -m app.main report naive.res advanced.res --out table1
"""

import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from app.cli.router import build_parser
from app.config import settings
from app.exceptions import EXIT_CONFIG, EXIT_RUNTIME, ISMForgeError

logger = logging.getLogger("ismforge")


def configure_logging(level: str = settings.LOG_LEVEL) -> None:
    """Log to stderr so that command output on stdout stays clean."""
    logging.basicConfig(
        level=getattr(logging, level),
        format=settings.LOG_FORMAT,
        stream=sys.stderr,
        force=True,
    )


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)
    logger.debug(f"Running {settings.PROJECT_NAME} {settings.VERSION}: {args.command}")
    try:
        return args.handler(args)
    except ISMForgeError as e:
        logger.error(f"{args.command}: {e.detail}")
        return e.exit_code
    except ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(part) for part in first["loc"]) or "input"
        logger.error(f"{args.command}: invalid {location}: {first['msg']}")
        return EXIT_CONFIG
    except Exception:
        logger.exception(f"{args.command}: unexpected failure")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
