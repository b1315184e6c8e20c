"""
``gen`` command for ISMForge.

This module generates a simulated dataset (WAVs, scene files and the
manifest) from a run config file and/or flags.
"""

import argparse
import logging
from pathlib import Path

from app.config import settings
from app.exceptions import EXIT_OK
from app.formats.run_config import build_run_config
from app.services.scenario import PROFILES, generate_dataset

logger = logging.getLogger(__name__)


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser("gen", parents=parents, help="Generate a simulated dataset")
    parser.add_argument("--config", type=Path, help="KEY=VALUE run config file")
    parser.add_argument("--profile", choices=sorted(PROFILES), help="Scenario profile")
    parser.add_argument("--mode", choices=["naive", "advanced"], help="Simulation mode")
    parser.add_argument("--n", dest="n_samples", type=int, help="Number of samples")
    parser.add_argument("--seed", type=int, help="Master seed (required here or in the config)")
    parser.add_argument("--speech-dir", type=Path, help="Directory of dry speech files")
    parser.add_argument("--out", dest="out_dir", type=Path, help="Output directory")
    parser.add_argument("--workers", type=int, help="Parallel worker processes")
    parser.add_argument("--max-order", type=int, help=f"Image-source order (default: {settings.MAX_ORDER})")
    parser.add_argument(
        "--ablate",
        action="append",
        choices=["walls", "source", "receiver"],
        default=[],
        help="Switch a realism layer back to naive (advanced mode, repeatable)",
    )
    parser.add_argument(
        "--source-pattern",
        dest="source_patterns",
        action="append",
        type=Path,
        default=[],
        help="ISMF-DIR source pattern file (repeatable)",
    )
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    config = build_run_config(
        args.config,
        profile=args.profile,
        mode=args.mode,
        n_samples=args.n_samples,
        seed=args.seed,
        speech_dir=args.speech_dir,
        out_dir=args.out_dir,
        workers=args.workers,
        max_order=args.max_order,
        ablate=args.ablate,
        source_patterns=args.source_patterns,
    )
    manifest_path = generate_dataset(config, provenance=settings.provenance(), progress=not args.quiet)
    print(manifest_path)
    return EXIT_OK
