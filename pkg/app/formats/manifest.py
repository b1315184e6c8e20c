"""
Manifest file format for ISMForge.

ISMF-MAN v1 is a versioned tab-separated table (see ``app.formats.tables``)
with the columns in MANIFEST_COLUMNS. ``wav`` paths are relative to the
manifest's directory; ``snr`` is ``inf`` when noise is disabled.
"""

from pathlib import Path

from pydantic import ValidationError

from app.exceptions import FormatError
from app.formats.tables import fmt_float, read_table, write_table
from app.models.manifest import Manifest, ManifestRecord

MAGIC = "ISMF-MAN v1"
MANIFEST_COLUMNS = ("id", "wav", "fs", "doa_true", "snr", "mode", "scene_digest", "seed", "aperture_m", "split")


def write_manifest(manifest: Manifest, path) -> None:
    rows = [
        [
            r.id,
            r.wav,
            str(r.fs),
            fmt_float(r.doa_true),
            fmt_float(r.snr),
            r.mode,
            r.scene_digest,
            str(r.seed),
            fmt_float(r.aperture_m),
            r.split,
        ]
        for r in manifest.records
    ]
    write_table(path, MAGIC, manifest.header, MANIFEST_COLUMNS, rows)


def read_manifest(path) -> Manifest:
    header, rows = read_table(path, MAGIC, MANIFEST_COLUMNS)
    records = []
    seen = set()
    for line_no, fields in rows:
        try:
            record = ManifestRecord(**dict(zip(MANIFEST_COLUMNS, fields)))
        except ValidationError as e:
            first = e.errors()[0]
            field = ".".join(str(part) for part in first["loc"])
            raise FormatError(f"{field}: {first['msg']}", path=str(path), line=line_no)
        if record.id in seen:
            raise FormatError(f"duplicate sample id '{record.id}'", path=str(path), line=line_no)
        seen.add(record.id)
        records.append(record)
    return Manifest(header=header, records=records)


def resolve_wav(manifest_path, record: ManifestRecord) -> Path:
    return Path(manifest_path).parent / record.wav
