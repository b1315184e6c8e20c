"""
Run configuration files for ISMForge.

A run config is a flat ``KEY=VALUE`` file read with python-dotenv (no
variable interpolation, ``#`` comments allowed)::

    PROFILE=voicehome
    MODE=advanced
    N_SAMPLES=200
    SEED=7
    SPEECH_DIR=speech
    OUT_DIR=out/advanced
    WORKERS=8
    MAX_ORDER=20
    ABLATE=walls,source
    SOURCE_PATTERNS=patterns/a.dir,patterns/b.dir
    NOISE_SNR_MEAN=40

Relative paths are resolved against the directory of the config file.
Command-line flags override file values.
"""

import logging
from pathlib import Path
from typing import Any, Dict, Optional

from dotenv import dotenv_values
from pydantic import ValidationError

from app.exceptions import ConfigError
from app.models.run_config import RunConfig
from app.models.scene import NoiseConfig

logger = logging.getLogger(__name__)

KEYS = {
    "PROFILE": "profile",
    "MODE": "mode",
    "N_SAMPLES": "n_samples",
    "SEED": "seed",
    "SPEECH_DIR": "speech_dir",
    "OUT_DIR": "out_dir",
    "SOURCE_PATTERNS": "source_patterns",
    "WORKERS": "workers",
    "MAX_ORDER": "max_order",
    "ABLATE": "ablate",
}
PATH_KEYS = ("SPEECH_DIR", "OUT_DIR")
LIST_KEYS = ("SOURCE_PATTERNS", "ABLATE")
NOISE_PREFIX = "NOISE_"


def _split(value: str):
    return [part.strip() for part in value.split(",") if part.strip()]


def parse_config_file(path) -> Dict[str, Any]:
    """RunConfig keyword arguments from a KEY=VALUE file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file does not exist: {path}")
    base = path.resolve().parent
    values = dotenv_values(path, interpolate=False)

    fields: Dict[str, Any] = {}
    noise: Dict[str, Any] = {}
    for key, value in values.items():
        if value is None:
            raise ConfigError(f"{path}: key '{key}' has no value")
        if key.startswith(NOISE_PREFIX):
            name = key[len(NOISE_PREFIX):].lower()
            if name not in NoiseConfig.model_fields:
                raise ConfigError(f"{path}: unknown noise key '{key}'")
            noise[name] = _split(value) if name == "snr_clip" else value
            continue
        if key not in KEYS:
            raise ConfigError(f"{path}: unknown key '{key}'")
        if key in PATH_KEYS:
            fields[KEYS[key]] = base / value
        elif key == "SOURCE_PATTERNS":
            fields[KEYS[key]] = [base / p for p in _split(value)]
        elif key in LIST_KEYS:
            fields[KEYS[key]] = _split(value)
        else:
            fields[KEYS[key]] = value
    if noise:
        fields["noise"] = noise
    return fields


def build_run_config(config_path: Optional[Path] = None, **overrides: Any) -> RunConfig:
    """Merge file values with non-None overrides and validate."""
    fields: Dict[str, Any] = parse_config_file(config_path) if config_path is not None else {}
    for key, value in overrides.items():
        if value is None or (isinstance(value, (list, tuple)) and not value):
            continue
        fields[key] = value
    try:
        return RunConfig(**fields)
    except ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(part) for part in first["loc"]) or "config"
        raise ConfigError(f"invalid run config: {location}: {first['msg']}")
