"""
``rir`` command for ISMForge.

This module synthesizes the RIR of a scene JSON file and dumps the
per-image table next to it.
"""

import argparse
import logging
from pathlib import Path

from app.config import settings
from app.exceptions import EXIT_OK
from app.formats.audio import write_rir
from app.formats.scene_file import read_scene
from app.formats.tables import fmt_float
from app.services.ism_engine import image_table, rir_length, synthesize_rir

logger = logging.getLogger(__name__)


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser("rir", parents=parents, help="Synthesize and inspect one scene's RIR")
    parser.add_argument("scene", type=Path, help="Scene JSON file")
    parser.add_argument("--out", type=Path, required=True, help="Output prefix (writes .wav, .json, .images.tsv)")
    parser.add_argument("--max-order", type=int, default=settings.MAX_ORDER, help="Image-source order")
    parser.add_argument("--fs", type=int, default=settings.SAMPLE_RATE, help="Sampling rate in Hz")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    scene = read_scene(args.scene)
    request = scene.to_request(max_order=args.max_order, fs=args.fs)
    n_fft = rir_length(request)
    rir = synthesize_rir(request, n_fft)
    wav_path, _ = write_rir(rir, args.out)

    table = image_table(request, n_fft)
    table_path = args.out.with_name(args.out.name + ".images.tsv")
    table.to_csv(table_path, sep="\t", index=False, float_format="%.10g", lineterminator="\n")
    logger.info(f"{len(table)} images up to order {args.max_order}, {rir.n_samples} samples per channel")
    print(wav_path)
    print(table_path)
    return EXIT_OK
