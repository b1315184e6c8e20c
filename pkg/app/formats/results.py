"""
Results file format for ISMForge.

ISMF-RES v1 uses the shared tab-separated table layout with columns
id, doa_true, doa_hat, error_deg and status. Failed rows write ``-`` for
doa_hat and error_deg. The header carries LABEL and the estimator settings.
"""

from typing import Optional

from app.exceptions import FormatError
from app.formats.tables import fmt_float, read_table, write_table
from app.models.evaluation import DoaResult
from app.models.manifest import ResultsTable

MAGIC = "ISMF-RES v1"
RESULTS_COLUMNS = ("id", "doa_true", "doa_hat", "error_deg", "status")
MISSING = "-"


def _opt(value: Optional[float]) -> str:
    return MISSING if value is None else fmt_float(value)


def write_results(table: ResultsTable, path) -> None:
    rows = [[r.id, fmt_float(r.doa_true), _opt(r.doa_hat), _opt(r.error_deg), r.status] for r in table.rows]
    write_table(path, MAGIC, table.header, RESULTS_COLUMNS, rows)


def read_results(path) -> ResultsTable:
    header, rows = read_table(path, MAGIC, RESULTS_COLUMNS)
    results = []
    for line_no, (sid, doa_true, doa_hat, error_deg, status) in rows:
        try:
            row = DoaResult(
                id=sid,
                doa_true=float(doa_true),
                doa_hat=None if doa_hat == MISSING else float(doa_hat),
                error_deg=None if error_deg == MISSING else float(error_deg),
                status=status,
            )
        except ValueError as e:
            # pydantic's ValidationError is a ValueError as well
            raise FormatError(str(e).splitlines()[0], path=str(path), line=line_no)
        if row.status == "ok" and row.error_deg is None:
            raise FormatError("ok rows need an error value", path=str(path), line=line_no)
        results.append(row)
    return ResultsTable(header=header, rows=results)
