"""
Directivity pattern file format for ISMForge.

ISMF-DIR v1 is a line-oriented decimal ASCII format::

    ISMF-DIR v1
    name <text>
    counts <n_azimuths> <n_elevations> <n_frequencies>
    frequencies <f_1> ... <f_F>
    azimuths <az_1> ... <az_A>
    elevations <el_1> ... <el_E>
    <az> <el> <f> <re> <im>        (A*E*F rows)

Rows are direction-major (azimuth, then elevation) and frequency-minor.
Angles are degrees, frequencies Hz; numbers are written with 17 significant
digits so that a save/load round trip is bit-exact.
"""

from pathlib import Path
from typing import List

import numpy as np

from app.exceptions import FormatError
from app.models.directivity import DirectivityPattern

MAGIC = "ISMF-DIR v1"
HEADER_KEYS = ("name", "counts", "frequencies", "azimuths", "elevations")


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def write_pattern_file(pattern: DirectivityPattern, path: Path) -> None:
    if pattern.kind != "measured_grid":
        raise FormatError(f"only measured_grid patterns can be saved, got {pattern.kind}", path=str(path))
    freqs = np.asarray(pattern.frequencies, dtype=float)
    azimuths = np.asarray(pattern.azimuths, dtype=float)
    elevations = np.asarray(pattern.elevations, dtype=float)
    gains = np.asarray(pattern.gains, dtype=complex)

    lines = [
        MAGIC,
        f"name {pattern.name or 'unnamed'}",
        f"counts {azimuths.size} {elevations.size} {freqs.size}",
        "frequencies " + " ".join(_fmt(f) for f in freqs),
        "azimuths " + " ".join(_fmt(a) for a in azimuths),
        "elevations " + " ".join(_fmt(e) for e in elevations),
    ]
    node = 0
    for az in azimuths:
        for el in elevations:
            for j, f in enumerate(freqs):
                g = gains[node, j]
                lines.append(f"{_fmt(az)} {_fmt(el)} {_fmt(f)} {_fmt(g.real)} {_fmt(g.imag)}")
            node += 1
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def _floats(tokens: List[str], path: str, line: int) -> np.ndarray:
    try:
        return np.array([float(t) for t in tokens], dtype=float)
    except ValueError as e:
        raise FormatError(f"not a number: {e}", path=path, line=line)


def read_pattern_file(path: Path) -> DirectivityPattern:
    name = str(path)
    try:
        raw = Path(path).read_text(encoding="ascii").splitlines()
    except (OSError, UnicodeDecodeError) as e:
        raise FormatError(f"cannot read pattern file: {e}", path=name)

    if not raw or raw[0].strip() != MAGIC:
        raise FormatError(f"missing '{MAGIC}' header", path=name, line=1)
    if len(raw) < 1 + len(HEADER_KEYS):
        raise FormatError("truncated header", path=name, line=len(raw))

    header = {}
    for offset, key in enumerate(HEADER_KEYS, start=2):
        tokens = raw[offset - 1].split()
        if not tokens or tokens[0] != key:
            raise FormatError(f"expected '{key}' line", path=name, line=offset)
        header[key] = (tokens[1:], offset)

    pattern_name = " ".join(header["name"][0])
    counts_tokens, counts_line = header["counts"]
    if len(counts_tokens) != 3 or not all(t.isdigit() for t in counts_tokens):
        raise FormatError("counts needs three non-negative integers", path=name, line=counts_line)
    n_az, n_el, n_freq = (int(t) for t in counts_tokens)

    freqs = _floats(header["frequencies"][0], name, header["frequencies"][1])
    azimuths = _floats(header["azimuths"][0], name, header["azimuths"][1])
    elevations = _floats(header["elevations"][0], name, header["elevations"][1])

    for key, values, expected in (("frequencies", freqs, n_freq), ("azimuths", azimuths, n_az), ("elevations", elevations, n_el)):
        if values.size != expected:
            raise FormatError(f"{key} lists {values.size} values, counts says {expected}", path=name, line=header[key][1])
    if n_freq < 1:
        raise FormatError("at least one frequency is required", path=name, line=counts_line)
    if n_az * n_el < 4:
        raise FormatError(f"at least 4 directions are required, got {n_az * n_el}", path=name, line=counts_line)
    if not np.all(np.isfinite(freqs)) or np.any(np.diff(freqs) <= 0):
        raise FormatError("frequency axis must be finite and strictly increasing", path=name, line=header["frequencies"][1])

    rows = raw[1 + len(HEADER_KEYS):]
    expected_rows = n_az * n_el * n_freq
    if len(rows) != expected_rows:
        raise FormatError(f"expected {expected_rows} gain rows, found {len(rows)}", path=name, line=len(raw))

    gains = np.empty((n_az * n_el, n_freq), dtype=complex)
    first_row = 2 + len(HEADER_KEYS)
    for node in range(n_az * n_el):
        az, el = azimuths[node // n_el], elevations[node % n_el]
        for j in range(n_freq):
            index = node * n_freq + j
            line_no = first_row + index
            tokens = rows[index].split()
            if len(tokens) != 5:
                raise FormatError("gain row needs 5 fields: az el f re im", path=name, line=line_no)
            values = _floats(tokens, name, line_no)
            if values[0] != az or values[1] != el or values[2] != freqs[j]:
                raise FormatError("gain row out of direction-major, frequency-minor order", path=name, line=line_no)
            if not np.all(np.isfinite(values[3:])):
                raise FormatError("gain is not finite", path=name, line=line_no)
            gains[node, j] = complex(values[3], values[4])

    return DirectivityPattern(
        kind="measured_grid",
        name=pattern_name,
        frequencies=freqs,
        azimuths=azimuths,
        elevations=elevations,
        gains=gains,
    )
