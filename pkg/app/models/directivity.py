"""
Directivity models for ISMForge.

This module defines orientations, directivity patterns (analytic families and
measured grids), serialisable pattern references and microphone arrays.
"""

from functools import cached_property
from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.models.geometry import Vec3

ORTHONORMAL_TOL = 1e-9


class Orientation(BaseModel):
    """
    Local frame of a source or receiver.

    The local x axis is ``look``, z is ``up`` and y is ``up x look`` (left).
    """
    look: Vec3
    up: Vec3 = Vec3(x=0.0, y=0.0, z=1.0)

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def check_orthonormal(self) -> "Orientation":
        look, up = self.look.as_array(), self.up.as_array()
        if abs(np.linalg.norm(look) - 1.0) > ORTHONORMAL_TOL or abs(np.linalg.norm(up) - 1.0) > ORTHONORMAL_TOL:
            raise ValueError("look and up must be unit vectors")
        if abs(float(look @ up)) > ORTHONORMAL_TOL:
            raise ValueError("look and up must be orthogonal")
        return self

    @classmethod
    def identity(cls) -> "Orientation":
        return cls(look=Vec3(x=1.0, y=0.0, z=0.0))

    @classmethod
    def horizontal(cls, azimuth: float) -> "Orientation":
        """Look along ``azimuth`` radians in the horizontal plane."""
        return cls(look=Vec3(x=float(np.cos(azimuth)), y=float(np.sin(azimuth)), z=0.0))

    @classmethod
    def facing(cls, look) -> "Orientation":
        """Orientation looking along ``look`` with the up vector closest to +z."""
        look = np.asarray(look, dtype=float)
        look = look / np.linalg.norm(look)
        ref = np.array([0.0, 0.0, 1.0]) if abs(look[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
        up = ref - (ref @ look) * look
        up = up / np.linalg.norm(up)
        return cls(look=Vec3.from_array(look), up=Vec3.from_array(up))

    def rotation(self) -> np.ndarray:
        """3x3 matrix whose columns are the local axes in room coordinates."""
        look, up = self.look.as_array(), self.up.as_array()
        left = np.cross(up, look)
        return np.column_stack([look, left, up])

    def to_local(self, directions: np.ndarray) -> np.ndarray:
        """Rotate room-frame row vectors into the local frame."""
        return np.asarray(directions, dtype=float) @ self.rotation()

    def to_room(self, local: np.ndarray) -> np.ndarray:
        """Rotate local-frame row vectors into the room frame."""
        return np.asarray(local, dtype=float) @ self.rotation().T

    def compose(self, outer: "Orientation") -> "Orientation":
        """Express this (outer-local) orientation in the frame ``outer`` lives in."""
        look = outer.to_room(self.look.as_array())
        up = outer.to_room(self.up.as_array())
        return Orientation(look=Vec3.from_array(look), up=Vec3.from_array(up))


PatternKind = Literal["omni", "cardioid", "half_sphere", "measured_grid"]


class DirectivityPattern(BaseModel):
    """
    Complex gain as a function of local direction and frequency.

    Measured grids store ``gains`` with shape (n_directions, n_frequencies),
    directions ordered azimuth-major: for each azimuth, every elevation.
    """
    kind: PatternKind
    name: str = ""
    order: int = Field(1, ge=1, description="Cardioid-family exponent p")
    a: float = Field(0.5, ge=0.0, le=1.0, description="Cardioid-family parameter")
    frequencies: Optional[np.ndarray] = None
    azimuths: Optional[np.ndarray] = None
    elevations: Optional[np.ndarray] = None
    gains: Optional[np.ndarray] = None

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @model_validator(mode="after")
    def check_grid(self) -> "DirectivityPattern":
        if self.kind != "measured_grid":
            return self
        if any(v is None for v in (self.frequencies, self.azimuths, self.elevations, self.gains)):
            raise ValueError("measured_grid patterns need frequencies, azimuths, elevations and gains")
        freqs = np.asarray(self.frequencies, dtype=float)
        if freqs.ndim != 1 or freqs.size < 1:
            raise ValueError("measured grids need at least one frequency")
        if np.any(np.diff(freqs) <= 0):
            raise ValueError("frequency axis must be strictly increasing")
        n_dir = np.asarray(self.azimuths).size * np.asarray(self.elevations).size
        if n_dir < 4:
            raise ValueError("measured grids need at least 4 directions")
        if np.shape(self.gains) != (n_dir, freqs.size):
            raise ValueError(f"gain table must have shape ({n_dir}, {freqs.size})")
        if not np.all(np.isfinite(self.gains)):
            raise ValueError("gains must be finite")
        for arr in (self.frequencies, self.azimuths, self.elevations, self.gains):
            arr.setflags(write=False)
        return self

    @cached_property
    def grid_directions(self) -> np.ndarray:
        """Unit vectors of the grid nodes, local frame, shape (n_directions, 3)."""
        az = np.deg2rad(np.asarray(self.azimuths, dtype=float))
        el = np.deg2rad(np.asarray(self.elevations, dtype=float))
        az_g, el_g = np.meshgrid(az, el, indexing="ij")
        az_g, el_g = az_g.ravel(), el_g.ravel()
        return np.column_stack([np.cos(el_g) * np.cos(az_g), np.cos(el_g) * np.sin(az_g), np.sin(el_g)])

    def same_as(self, other: "DirectivityPattern") -> bool:
        """Exact equality, arrays compared bitwise."""
        if (self.kind, self.name, self.order, self.a) != (other.kind, other.name, other.order, other.a):
            return False
        for mine, theirs in (
            (self.frequencies, other.frequencies),
            (self.azimuths, other.azimuths),
            (self.elevations, other.elevations),
            (self.gains, other.gains),
        ):
            if (mine is None) != (theirs is None):
                return False
            if mine is not None and not np.array_equal(mine, theirs):
                return False
        return True


class PatternSpec(BaseModel):
    """Serialisable reference to a directivity pattern."""
    kind: Literal["omni", "cardioid", "half_sphere", "builtin", "file"] = "omni"
    order: int = Field(1, ge=1)
    a: float = Field(0.5, ge=0.0, le=1.0)
    name: Optional[str] = None
    path: Optional[str] = None

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def check_reference(self) -> "PatternSpec":
        if self.kind == "builtin" and not self.name:
            raise ValueError("builtin patterns need a name")
        if self.kind == "file" and not self.path:
            raise ValueError("file patterns need a path")
        return self

    @property
    def is_omni(self) -> bool:
        return self.kind == "omni"


ReceiverMode = Literal["array_centered", "per_microphone"]


class ArrayGeometry(BaseModel):
    """
    Microphone array in its own local frame.

    Positions are relative to the array center; per-microphone orientations
    are expressed in the array frame as well.
    """
    positions: List[Vec3]
    patterns: List[PatternSpec]
    orientations: List[Orientation]
    mode: ReceiverMode = "per_microphone"

    model_config = ConfigDict(frozen=True)

    @field_validator("positions")
    def check_not_empty(cls, v: List[Vec3]) -> List[Vec3]:
        if len(v) < 1:
            raise ValueError("an array needs at least one microphone")
        return v

    @model_validator(mode="after")
    def check_lengths(self) -> "ArrayGeometry":
        m = len(self.positions)
        if len(self.patterns) != m or len(self.orientations) != m:
            raise ValueError("positions, patterns and orientations must have equal length")
        return self

    @property
    def n_mics(self) -> int:
        return len(self.positions)

    @classmethod
    def pair(
        cls,
        aperture: float,
        pattern: PatternSpec = PatternSpec(),
        patterns: Optional[List[PatternSpec]] = None,
        mode: ReceiverMode = "per_microphone",
    ) -> "ArrayGeometry":
        """Two microphones at -/+ aperture/2 along the local y axis, looking along local x."""
        half = aperture / 2.0
        return cls(
            positions=[Vec3(x=0.0, y=-half, z=0.0), Vec3(x=0.0, y=half, z=0.0)],
            patterns=patterns if patterns is not None else [pattern, pattern],
            orientations=[Orientation.identity(), Orientation.identity()],
            mode=mode,
        )

    def relative_positions(self) -> np.ndarray:
        return np.stack([p.as_array() for p in self.positions])
