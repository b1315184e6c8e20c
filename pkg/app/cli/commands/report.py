"""
``report`` command for ISMForge.

This module summarizes one or more results files (Recall, MAE with its 95 %
interval) and compares every pair with McNemar and paired MAE tests.
"""

import argparse
import json
import logging
from pathlib import Path
from typing import List

from app.config import settings
from app.exceptions import EXIT_OK, DatasetIOError
from app.formats.results import read_results
from app.models.manifest import ResultsTable
from app.services.metrics import build_report, report_text

logger = logging.getLogger(__name__)


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser("report", parents=parents, help="Summarize and compare results files")
    parser.add_argument("results", type=Path, nargs="+", help="ISMF-RES v1 results files")
    parser.add_argument("--out", type=Path, help="Output prefix (writes .txt and .json)")
    parser.add_argument(
        "--threshold",
        type=float,
        default=settings.RECALL_THRESHOLD,
        help=f"Recall threshold in degrees (default: {settings.RECALL_THRESHOLD})",
    )
    parser.set_defaults(handler=run)


def labelled(tables: List[ResultsTable], paths: List[Path]) -> List[ResultsTable]:
    """Fall back to file stems for unlabelled tables and suffix repeated labels."""
    seen = {}
    out = []
    for table, path in zip(tables, paths):
        label = table.label or path.stem
        seen[label] = seen.get(label, 0) + 1
        if seen[label] > 1:
            label = f"{label}#{seen[label]}"
        out.append(table.model_copy(update={"header": {**table.header, "LABEL": label}}))
    return out


def run(args: argparse.Namespace) -> int:
    tables = labelled([read_results(path) for path in args.results], args.results)
    report = build_report(tables, args.threshold)
    text = report_text(report)
    print(text, end="")
    if args.out is not None:
        try:
            args.out.parent.mkdir(parents=True, exist_ok=True)
            args.out.with_name(args.out.name + ".txt").write_text(text, encoding="utf-8")
            args.out.with_name(args.out.name + ".json").write_text(
                json.dumps(report, indent=2) + "\n", encoding="utf-8"
            )
        except OSError as e:
            raise DatasetIOError(f"cannot write report: {e}")
    return EXIT_OK
