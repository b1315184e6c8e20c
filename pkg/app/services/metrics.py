"""
Metrics service for ISMForge.

This module aggregates per-sample angular errors into Recall (share of
errors strictly below a threshold) and MAE with a normal-approximation 95 %
interval, and compares paired result sets with an exact McNemar test and a
paired MAE-difference interval.
"""

import logging
from itertools import combinations
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import binom

from app.config import settings
from app.exceptions import PreconditionError, SchemaMismatchError
from app.models.evaluation import EvalSummary, PairedComparison
from app.models.manifest import ResultsTable

logger = logging.getLogger(__name__)

Z95 = 1.96
SIGNIFICANCE = 0.05

# Naive-vs-advanced trend thresholds
TREND_MIN_RECALL_GAP = 0.10
TREND_MIN_MAE_GAP = 4.0
TREND_NAIVE_RECALL_RANGE = (0.60, 0.90)


def _half_width(values: np.ndarray) -> float:
    if values.size < 2:
        return 0.0
    return float(Z95 * values.std(ddof=1) / np.sqrt(values.size))


def summarize(errors: Sequence[float], threshold: float = settings.RECALL_THRESHOLD) -> EvalSummary:
    errors = np.asarray(errors, dtype=float)
    if errors.size == 0:
        raise PreconditionError("cannot summarize an empty error list")
    if np.any(~np.isfinite(errors)) or np.any(errors < 0.0) or np.any(errors > 180.0):
        raise PreconditionError("angular errors must lie in [0, 180] degrees")
    return EvalSummary(
        recall=float(np.mean(errors < threshold)),
        mae=float(errors.mean()),
        mae_ci95=_half_width(errors),
        n=int(errors.size),
    )


def mcnemar(hits_a: Sequence[bool], hits_b: Sequence[bool]) -> float:
    """Exact two-sided McNemar p-value on the discordant pairs."""
    a = np.asarray(hits_a, dtype=bool)
    b = np.asarray(hits_b, dtype=bool)
    if a.shape != b.shape:
        raise PreconditionError(f"paired hit lists differ in length: {a.size} vs {b.size}")
    only_a = int(np.sum(a & ~b))
    only_b = int(np.sum(~a & b))
    n = only_a + only_b
    if n == 0:
        return 1.0
    low, high = min(only_a, only_b), max(only_a, only_b)
    p = binom.cdf(low, n, 0.5) + binom.sf(high - 1, n, 0.5)
    return float(min(1.0, p))


def paired_mae_ci(errors_a: Sequence[float], errors_b: Sequence[float]) -> Tuple[float, float]:
    """Mean of (a - b) per sample and its 95 % half-width."""
    a = np.asarray(errors_a, dtype=float)
    b = np.asarray(errors_b, dtype=float)
    if a.shape != b.shape:
        raise PreconditionError(f"paired error lists differ in length: {a.size} vs {b.size}")
    if a.size == 0:
        raise PreconditionError("paired error lists are empty")
    diff = a - b
    return float(diff.mean()), _half_width(diff)


def trend_criterion(
    summary_a: EvalSummary,
    summary_b: EvalSummary,
    mcnemar_p: float,
    mae_diff: float,
    ci: float,
) -> bool:
    """
    True when reference set ``a`` (naive) beats ``b`` (advanced) as expected.

    Recall must drop by at least ten points with p < 0.05, MAE must grow by
    at least 4 degrees with an interval excluding zero, and recall on ``a``
    must stay within [60 %, 90 %]. ``mae_diff`` is mean(a - b).
    """
    recall_ok = summary_a.recall - summary_b.recall >= TREND_MIN_RECALL_GAP and mcnemar_p < SIGNIFICANCE
    mae_ok = -mae_diff >= TREND_MIN_MAE_GAP and abs(mae_diff) > ci
    low, high = TREND_NAIVE_RECALL_RANGE
    return bool(recall_ok and mae_ok and low <= summary_a.recall <= high)


# --- Result tables ---

def ok_errors(table: ResultsTable) -> Dict[str, float]:
    return {row.id: row.error_deg for row in table.rows if row.status == "ok"}


def summarize_results(table: ResultsTable, threshold: float = settings.RECALL_THRESHOLD) -> EvalSummary:
    errors = list(ok_errors(table).values())
    if not errors:
        raise PreconditionError(f"results '{table.label}' contain no successful rows")
    return summarize(errors, threshold)


def compare(table_a: ResultsTable, table_b: ResultsTable, threshold: float = settings.RECALL_THRESHOLD) -> PairedComparison:
    """Paired comparison over the samples both tables evaluated successfully."""
    ids_a = [row.id for row in table_a.rows]
    ids_b = [row.id for row in table_b.rows]
    if sorted(ids_a) != sorted(ids_b):
        raise SchemaMismatchError(
            f"results '{table_a.label}' and '{table_b.label}' cover different samples "
            f"({len(ids_a)} vs {len(ids_b)} rows)"
        )
    errors_a, errors_b = ok_errors(table_a), ok_errors(table_b)
    shared = [sid for sid in ids_a if sid in errors_a and sid in errors_b]
    dropped = len(ids_a) - len(shared)
    if dropped:
        logger.warning(f"Comparing {table_a.label} and {table_b.label}: {dropped} failed rows left out")
    if not shared:
        raise PreconditionError("no sample was evaluated successfully in both results")

    a = np.array([errors_a[sid] for sid in shared])
    b = np.array([errors_b[sid] for sid in shared])
    p = mcnemar(a < threshold, b < threshold)
    diff, ci = paired_mae_ci(a, b)
    return PairedComparison(
        method_a=table_a.label,
        method_b=table_b.label,
        n=len(shared),
        mcnemar_p=p,
        mae_diff=diff,
        mae_diff_ci95=ci,
        recall_significant=p < SIGNIFICANCE,
        mae_significant=abs(diff) > ci,
        trend_holds=trend_criterion(summarize(a, threshold), summarize(b, threshold), p, diff, ci),
    )


def build_report(tables: List[ResultsTable], threshold: float = settings.RECALL_THRESHOLD) -> Dict[str, Any]:
    """Machine-readable report: one summary per table, one comparison per pair."""
    methods = []
    for table in tables:
        summary = summarize_results(table, threshold)
        methods.append({"method": table.label, **summary.model_dump()})
    comparisons = [compare(a, b, threshold).model_dump() for a, b in combinations(tables, 2)]
    return {"threshold": threshold, "methods": methods, "comparisons": comparisons}


def report_text(report: Dict[str, Any]) -> str:
    """Fixed-format text tables for a report."""
    methods = pd.DataFrame(report["methods"])
    table = pd.DataFrame({
        "Method": methods["method"],
        "Recall (%)": (100.0 * methods["recall"]).map("{:.1f}".format),
        "MAE (deg)": [f"{m:.1f} ± {c:.1f}" for m, c in zip(methods["mae"], methods["mae_ci95"])],
        "n": methods["n"],
    })
    parts = [table.to_string(index=False)]
    if report["comparisons"]:
        comp = pd.DataFrame(report["comparisons"])
        tests = pd.DataFrame({
            "A": comp["method_a"],
            "B": comp["method_b"],
            "n": comp["n"],
            "McNemar p": comp["mcnemar_p"].map("{:.4g}".format),
            "MAE A-B (deg)": [f"{d:.2f} ± {c:.2f}" for d, c in zip(comp["mae_diff"], comp["mae_diff_ci95"])],
            "Recall sig.": comp["recall_significant"].map({True: "yes", False: "no"}),
            "MAE sig.": comp["mae_significant"].map({True: "yes", False: "no"}),
            "Trend": comp["trend_holds"].map({True: "holds", False: "fails"}),
        })
        parts.append(tests.to_string(index=False))
    return "\n\n".join(parts) + "\n"
