"""
Geometry models for ISMForge.

This module defines the shoebox room, 3-D positions and image sources with
their per-surface reflection bookkeeping.
"""

import math
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

# Surface order shared by reflection counts and surface sets
SURFACE_NAMES: Tuple[str, ...] = ("west", "east", "south", "north", "floor", "ceiling")


class Vec3(BaseModel):
    """A point or direction in meters, room frame."""
    x: float
    y: float
    z: float

    model_config = ConfigDict(frozen=True)

    @field_validator("x", "y", "z")
    def check_finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("coordinates must be finite")
        return v

    @classmethod
    def from_array(cls, a) -> "Vec3":
        return cls(x=float(a[0]), y=float(a[1]), z=float(a[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    def norm(self) -> float:
        return float(np.linalg.norm(self.as_array()))


class Shoebox(BaseModel):
    """Rectangular room spanning [0, Lx] x [0, Ly] x [0, Lz]."""
    dims: Vec3 = Field(..., description="Room dimensions (Lx, Ly, Lz) in meters")

    model_config = ConfigDict(frozen=True)

    @field_validator("dims")
    def check_positive(cls, v: Vec3) -> Vec3:
        if min(v.x, v.y, v.z) <= 0:
            raise ValueError("room dimensions must be > 0")
        return v

    @property
    def volume(self) -> float:
        return self.dims.x * self.dims.y * self.dims.z

    def surface_areas(self) -> np.ndarray:
        """Areas in SURFACE_NAMES order."""
        lx, ly, lz = self.dims.x, self.dims.y, self.dims.z
        return np.array([ly * lz, ly * lz, lx * lz, lx * lz, lx * ly, lx * ly])

    @property
    def total_area(self) -> float:
        return float(self.surface_areas().sum())

    def wall_distances(self, point: Vec3) -> np.ndarray:
        """Signed distances from ``point`` to the six surfaces (negative = outside)."""
        p = point.as_array()
        d = self.dims.as_array()
        return np.array([p[0], d[0] - p[0], p[1], d[1] - p[1], p[2], d[2] - p[2]])

    def contains(self, point: Vec3, margin: float = 0.0) -> bool:
        """True if ``point`` is strictly inside with at least ``margin`` to each wall."""
        distances = self.wall_distances(point)
        if margin <= 0.0:
            return bool(np.all(distances > 0.0))
        return bool(np.all(distances >= margin))


class ImageSource(BaseModel):
    """
    A mirrored copy of the source.

    ``lattice_index`` holds the signed per-axis index q: the axis is reflected
    |q| times, and q's sign says which wall came first.
    """
    position: Vec3
    order: int = Field(..., ge=0)
    reflection_counts: Tuple[int, int, int, int, int, int]
    lattice_index: Tuple[int, int, int]

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def check_counts(self) -> "ImageSource":
        if any(c < 0 for c in self.reflection_counts):
            raise ValueError("reflection counts must be non-negative")
        if sum(self.reflection_counts) != self.order:
            raise ValueError("sum(reflection_counts) must equal order")
        return self

    @property
    def mirrored_axes(self) -> Tuple[bool, bool, bool]:
        """Axes reflected an odd number of times."""
        return tuple(q % 2 != 0 for q in self.lattice_index)
