"""
Versioned tab-separated tables for ISMForge.

Manifests and results files share one layout::

    <MAGIC>
    # KEY=VALUE          (zero or more provenance lines)
    <col_1>\t...\t<col_n>
    <v_1>\t...\t<v_n>    (one line per record)

Header keys are written sorted; floats with 17 significant digits.
"""

from pathlib import Path
from typing import Dict, List, Sequence, Tuple

from app.exceptions import DatasetIOError, FormatError


def fmt_float(value: float) -> str:
    return format(float(value), ".17g")


def write_table(path, magic: str, header: Dict[str, str], columns: Sequence[str], rows: List[Sequence[str]]) -> None:
    lines = [magic]
    for key in sorted(header):
        value = str(header[key])
        if "\n" in value:
            raise FormatError(f"header value for {key} spans lines", path=str(path))
        lines.append(f"# {key}={value}")
    lines.append("\t".join(columns))
    for row in rows:
        lines.append("\t".join(row))
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as e:
        raise DatasetIOError(f"cannot write {path}: {e}")


def read_table(path, magic: str, columns: Sequence[str]) -> Tuple[Dict[str, str], List[Tuple[int, List[str]]]]:
    """Header dict and (line number, fields) per record."""
    name = str(path)
    try:
        raw = Path(path).read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as e:
        raise FormatError(f"cannot read file: {e}", path=name)

    if not raw or raw[0].strip() != magic:
        found = raw[0].strip() if raw else "<empty>"
        raise FormatError(f"expected '{magic}', found '{found}'", path=name, line=1)

    header: Dict[str, str] = {}
    i = 1
    while i < len(raw) and raw[i].startswith("#"):
        entry = raw[i][1:].strip()
        if "=" not in entry:
            raise FormatError("header line must be '# KEY=VALUE'", path=name, line=i + 1)
        key, value = entry.split("=", 1)
        header[key.strip()] = value
        i += 1

    if i >= len(raw):
        raise FormatError("missing column line", path=name, line=i + 1)
    found_columns = raw[i].split("\t")
    if found_columns != list(columns):
        raise FormatError(f"columns must be {'/'.join(columns)}", path=name, line=i + 1)

    records = []
    for line_no, line in enumerate(raw[i + 1:], start=i + 2):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != len(columns):
            raise FormatError(f"expected {len(columns)} fields, got {len(fields)}", path=name, line=line_no)
        records.append((line_no, fields))
    return header, records
