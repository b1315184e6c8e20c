"""
``eval`` command for ISMForge.

This module runs SRP-PHAT over every sample of a manifest and writes an
ISMF-RES v1 results file.
"""

import argparse
import logging
from pathlib import Path

from pydantic import ValidationError

from app.config import settings
from app.exceptions import EXIT_OK, ConfigError
from app.formats.manifest import read_manifest
from app.formats.results import write_results
from app.models.evaluation import EstimatorConfig
from app.models.manifest import ResultsTable
from app.services.doa import estimator_header, evaluate_dataset

logger = logging.getLogger(__name__)


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser("eval", parents=parents, help="Evaluate SRP-PHAT on a dataset")
    parser.add_argument("manifest", type=Path, help="ISMF-MAN v1 manifest")
    parser.add_argument("--out", type=Path, required=True, help="Results file to write")
    parser.add_argument("--label", help="Method label (default: manifest MODE, else the directory name)")
    parser.add_argument("--workers", type=int, default=1, help="Parallel worker processes")
    parser.add_argument("--grid-step", type=float, default=settings.DOA_GRID_STEP, help="Grid step in degrees")
    parser.add_argument("--f-min", type=float, default=settings.DOA_BAND[0], help="Lowest band frequency in Hz")
    parser.add_argument("--f-max", type=float, default=settings.DOA_BAND[1], help="Highest band frequency in Hz")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    if args.workers < 1:
        raise ConfigError("--workers must be >= 1")
    try:
        config = EstimatorConfig(grid_step=args.grid_step, f_min=args.f_min, f_max=args.f_max)
    except ValidationError as e:
        raise ConfigError(f"invalid estimator settings: {e.errors()[0]['msg']}")

    manifest = read_manifest(args.manifest)
    rows = evaluate_dataset(
        manifest,
        config,
        root=args.manifest.parent,
        workers=args.workers,
        progress=not args.quiet,
    )
    label = args.label or manifest.header.get("MODE") or args.manifest.resolve().parent.name
    header = {"LABEL": label, "MANIFEST": args.manifest.name, **estimator_header(config)}
    write_results(ResultsTable(header=header, rows=rows), args.out)
    ok = sum(1 for row in rows if row.status == "ok")
    logger.info(f"Wrote {len(rows)} results ({ok} ok) to {args.out}")
    print(args.out)
    return EXIT_OK
