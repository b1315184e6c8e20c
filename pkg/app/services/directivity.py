"""
Directivity service for ISMForge.

This module evaluates source and microphone patterns for arbitrary
directions and frequencies, builds the built-in synthetic measured grids and
resolves serialisable PatternSpec references into patterns.
"""

import logging
from functools import lru_cache
from pathlib import Path
from typing import Callable, Dict, Tuple

import numpy as np

from app.config import settings
from app.exceptions import ConfigError, PreconditionError
from app.formats.pattern_file import read_pattern_file, write_pattern_file
from app.models.directivity import DirectivityPattern, Orientation, PatternSpec
from app.models.geometry import Vec3

logger = logging.getLogger(__name__)

UNIT_TOL = 1e-6

OMNI = DirectivityPattern(kind="omni", name="omni")
HALF_SPHERE = DirectivityPattern(kind="half_sphere", name="half_sphere")


def _check_unit(directions: np.ndarray) -> None:
    norms = np.linalg.norm(directions, axis=-1)
    if np.any(np.abs(norms - 1.0) > UNIT_TOL):
        raise PreconditionError("query directions must be unit vectors")


def frequency_weights(grid: np.ndarray, freqs: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Bracketing indices and linear weights, flat outside the grid."""
    if grid.size == 1:
        zeros = np.zeros(freqs.shape, dtype=int)
        return zeros, zeros, np.zeros(freqs.shape)
    clipped = np.clip(freqs, grid[0], grid[-1])
    hi = np.clip(np.searchsorted(grid, clipped, side="right"), 1, grid.size - 1)
    lo = hi - 1
    w = (clipped - grid[lo]) / (grid[hi] - grid[lo])
    return lo, hi, w


def nearest_nodes(pattern: DirectivityPattern, local_directions: np.ndarray) -> np.ndarray:
    """Index of the closest grid direction (largest dot product)."""
    return np.argmax(local_directions @ pattern.grid_directions.T, axis=1)


def evaluate(pattern: DirectivityPattern, orientation: Orientation, directions, freqs) -> np.ndarray:
    """
    Complex gains for K directions at F frequencies, shape (K, F).

    Directions are room-frame unit vectors; they are rotated into the
    pattern's local frame, where +x is the look direction.
    """
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
    _check_unit(directions)
    shape = (directions.shape[0], freqs.size)

    if pattern.kind == "omni":
        return np.ones(shape, dtype=complex)

    local = orientation.to_local(directions)
    cos_look = np.clip(local[:, 0], -1.0, 1.0)

    if pattern.kind == "half_sphere":
        gain = (cos_look >= 0.0).astype(float)
        return np.broadcast_to(gain[:, None], shape).astype(complex)

    if pattern.kind == "cardioid":
        gain = (pattern.a + (1.0 - pattern.a) * cos_look) ** pattern.order
        return np.broadcast_to(gain[:, None], shape).astype(complex)

    # measured_grid
    nodes = nearest_nodes(pattern, local)
    lo, hi, w = frequency_weights(np.asarray(pattern.frequencies, dtype=float), freqs)
    table = np.asarray(pattern.gains)[nodes]
    return (1.0 - w)[None, :] * table[:, lo] + w[None, :] * table[:, hi]


def eval_pattern(pattern: DirectivityPattern, orientation: Orientation, direction: Vec3, f: float) -> complex:
    """Complex gain of ``pattern`` toward one room-frame direction at one frequency."""
    return complex(evaluate(pattern, orientation, direction.as_array(), f)[0, 0])


def wall_mount(pattern_look: Vec3) -> Tuple[DirectivityPattern, Orientation]:
    """Half-sphere pattern looking along ``pattern_look`` (the inward wall normal)."""
    look = pattern_look.as_array()
    if abs(np.linalg.norm(look) - 1.0) > UNIT_TOL:
        raise PreconditionError("wall normal must be a unit vector")
    return HALF_SPHERE, Orientation.facing(look)


# --- Built-in synthetic grids ---

GRID_STEP_DEG = 10.0
GRID_FREQUENCIES = np.array([125.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0, 8000.0])
BAFFLED_APERTURE = 0.068

# Cardioid-family parameter per octave: 1 = omni, 0.5 = cardioid
_TALKER_A = [1.0, 0.95, 0.85, 0.65, 0.5, 0.42, 0.35]
_SMALL_SPEAKER_A = [1.0, 0.92, 0.78, 0.62, 0.52, 0.45, 0.4]
_LARGE_SPEAKER_A = [0.95, 0.85, 0.7, 0.58, 0.5, 0.45, 0.42]
_BAFFLE_A = [1.0, 0.98, 0.93, 0.83, 0.7, 0.58, 0.5]


def sample_grid(step_deg: float = GRID_STEP_DEG) -> Tuple[np.ndarray, np.ndarray]:
    """Azimuths in [0, 360) and elevations in [-90, 90], degrees."""
    azimuths = np.arange(0.0, 360.0, step_deg)
    elevations = np.arange(-90.0, 90.0 + step_deg / 2.0, step_deg)
    return azimuths, elevations


def _grid_pattern(name: str, gain_fn, step_deg: float = GRID_STEP_DEG) -> DirectivityPattern:
    azimuths, elevations = sample_grid(step_deg)
    skeleton = DirectivityPattern(
        kind="measured_grid",
        name=name,
        frequencies=GRID_FREQUENCIES.copy(),
        azimuths=azimuths,
        elevations=elevations,
        gains=np.zeros((azimuths.size * elevations.size, GRID_FREQUENCIES.size), dtype=complex),
    )
    gains = gain_fn(skeleton.grid_directions, GRID_FREQUENCIES)
    return DirectivityPattern(
        kind="measured_grid",
        name=name,
        frequencies=GRID_FREQUENCIES.copy(),
        azimuths=azimuths.copy(),
        elevations=elevations.copy(),
        gains=np.asarray(gains, dtype=complex),
    )


def sampled_cardioid(name: str, a: float, order: int = 1, step_deg: float = GRID_STEP_DEG) -> DirectivityPattern:
    """A cardioid-family pattern sampled on a regular grid."""
    def gain(dirs, freqs):
        g = (a + (1.0 - a) * dirs[:, 0]) ** order
        return np.repeat(g[:, None], freqs.size, axis=1)
    return _grid_pattern(name, gain, step_deg)


def _frequency_cardioid(a_per_freq, order: int = 1, look=(1.0, 0.0, 0.0)):
    a = np.asarray(a_per_freq, dtype=float)
    look = np.asarray(look, dtype=float)

    def gain(dirs, freqs):
        cos_look = dirs @ look
        return (a[None, :] + (1.0 - a[None, :]) * cos_look[:, None]) ** order
    return gain


def _baffled_capsule(index: int):
    """Capsule of a rigid-baffle pair; phase referenced to the array center."""
    side = -1.0 if index == 0 else 1.0
    offset = np.array([0.0, side * BAFFLED_APERTURE / 2.0, 0.0])
    capsule = _frequency_cardioid(_BAFFLE_A, look=(0.0, side, 0.0))

    def gain(dirs, freqs):
        phase = np.exp(2j * np.pi * freqs[None, :] * (dirs @ offset)[:, None] / settings.SPEED_OF_SOUND)
        return capsule(dirs, freqs) * phase
    return gain


def _builtin_factories() -> Dict[str, Callable[[], DirectivityPattern]]:
    return {
        "talker": lambda: _grid_pattern("talker", _frequency_cardioid(_TALKER_A)),
        "loudspeaker_small": lambda: _grid_pattern("loudspeaker_small", _frequency_cardioid(_SMALL_SPEAKER_A)),
        "loudspeaker_large": lambda: _grid_pattern("loudspeaker_large", _frequency_cardioid(_LARGE_SPEAKER_A, order=2)),
        "baffled_pair_mic1": lambda: _grid_pattern("baffled_pair_mic1", _baffled_capsule(0)),
        "baffled_pair_mic2": lambda: _grid_pattern("baffled_pair_mic2", _baffled_capsule(1)),
    }


BUILTIN_NAMES = tuple(_builtin_factories())
SOURCE_BUILTINS = ("talker", "loudspeaker_small", "loudspeaker_large")


@lru_cache(maxsize=None)
def builtin_pattern(name: str) -> DirectivityPattern:
    factories = _builtin_factories()
    if name not in factories:
        raise ConfigError(f"Unknown built-in pattern '{name}'. Available: {', '.join(BUILTIN_NAMES)}")
    logger.debug(f"Building built-in pattern {name}")
    return factories[name]()


# --- Loading ---

def load_pattern(path) -> DirectivityPattern:
    """Read a measured grid in the ISMF-DIR v1 format."""
    pattern = read_pattern_file(Path(path))
    logger.info(f"Loaded directivity pattern '{pattern.name}' from {path}")
    return pattern


def save_pattern(pattern: DirectivityPattern, path) -> None:
    """Write a measured grid in the ISMF-DIR v1 format."""
    write_pattern_file(pattern, Path(path))


@lru_cache(maxsize=64)
def _load_cached(path: str) -> DirectivityPattern:
    return load_pattern(path)


def resolve_pattern(spec: PatternSpec) -> DirectivityPattern:
    """Turn a serialisable reference into a pattern; files and built-ins are cached."""
    if spec.kind == "omni":
        return OMNI
    if spec.kind == "half_sphere":
        return HALF_SPHERE
    if spec.kind == "cardioid":
        return DirectivityPattern(kind="cardioid", name=f"cardioid(a={spec.a},p={spec.order})", a=spec.a, order=spec.order)
    if spec.kind == "builtin":
        return builtin_pattern(spec.name)
    return _load_cached(str(Path(spec.path).resolve()))
