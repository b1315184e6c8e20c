"""
Scene JSON files for ISMForge.

A scene file is the JSON dump of a SceneSpec; ``gen`` writes one per sample
and ``rir`` reads them back.
"""

from pathlib import Path

from pydantic import ValidationError

from app.exceptions import DatasetIOError, FormatError
from app.models.scene import SceneSpec


def write_scene(scene: SceneSpec, path) -> None:
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(scene.model_dump_json(indent=2) + "\n", encoding="utf-8")
    except OSError as e:
        raise DatasetIOError(f"cannot write {path}: {e}")


def read_scene(path) -> SceneSpec:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise FormatError(f"cannot read scene file: {e}", path=str(path))
    try:
        return SceneSpec.model_validate_json(text)
    except ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(part) for part in first["loc"]) or "<root>"
        raise FormatError(f"{location}: {first['msg']}", path=str(path))
