"""
Material models for ISMForge.

Absorption is described per surface by six octave-band coefficients.
"""

from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.config import settings
from app.models.geometry import SURFACE_NAMES


class AbsorptionProfile(BaseModel):
    """Energy absorption coefficients of one surface in six octave bands."""
    band_centers: Tuple[float, ...] = Field(default_factory=lambda: tuple(settings.BAND_CENTERS))
    alphas: Tuple[float, ...]

    model_config = ConfigDict(frozen=True)

    @field_validator("alphas")
    def check_alphas(cls, v: Tuple[float, ...]) -> Tuple[float, ...]:
        if len(v) != 6:
            raise ValueError("expected 6 absorption coefficients")
        if any(not (0.0 < a <= 1.0) for a in v):
            raise ValueError("absorption coefficients must lie in (0, 1]")
        return v

    @model_validator(mode="after")
    def check_bands(self) -> "AbsorptionProfile":
        centers = self.band_centers
        if len(centers) != len(self.alphas):
            raise ValueError("band_centers and alphas must have equal length")
        if any(b <= a for a, b in zip(centers, centers[1:])):
            raise ValueError("band centers must be strictly increasing")
        return self

    @classmethod
    def flat(cls, alpha: float) -> "AbsorptionProfile":
        return cls(alphas=(float(alpha),) * 6)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.alphas, dtype=float)


class SurfaceSet(BaseModel):
    """One absorption profile per room surface, in SURFACE_NAMES order."""
    west: AbsorptionProfile
    east: AbsorptionProfile
    south: AbsorptionProfile
    north: AbsorptionProfile
    floor: AbsorptionProfile
    ceiling: AbsorptionProfile

    model_config = ConfigDict(frozen=True)

    @classmethod
    def from_list(cls, profiles: List[AbsorptionProfile]) -> "SurfaceSet":
        if len(profiles) != 6:
            raise ValueError("a SurfaceSet needs exactly six profiles")
        return cls(**dict(zip(SURFACE_NAMES, profiles)))

    @classmethod
    def uniform(cls, alpha: float) -> "SurfaceSet":
        return cls.from_list([AbsorptionProfile.flat(alpha)] * 6)

    def profiles(self) -> List[AbsorptionProfile]:
        return [getattr(self, name) for name in SURFACE_NAMES]

    def alpha_matrix(self) -> np.ndarray:
        """Shape (6 surfaces, 6 bands)."""
        return np.stack([p.as_array() for p in self.profiles()])

    @property
    def is_flat_uniform(self) -> bool:
        alphas = self.alpha_matrix()
        return bool(np.all(alphas == alphas[0, 0]))


class MaterialCategory(BaseModel):
    """One component of an absorption mixture: a per-band truncated normal."""
    name: str
    probability: float = Field(..., ge=0.0, le=1.0)
    ramp_start: float = Field(..., gt=0.0, lt=1.0, description="Mean at the lowest band")
    ramp_end: float = Field(..., gt=0.0, lt=1.0, description="Mean at the highest band")
    sd: float = Field(..., gt=0.0)

    model_config = ConfigDict(frozen=True)

    def band_means(self, n_bands: int = 6) -> np.ndarray:
        return np.linspace(self.ramp_start, self.ramp_end, n_bands)


class MaterialMixture(BaseModel):
    """Category mixture for one kind of surface (walls, floor or ceiling)."""
    categories: Tuple[MaterialCategory, ...]
    clip: Tuple[float, float] = (0.01, 0.99)

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def check_probabilities(self) -> "MaterialMixture":
        if abs(sum(c.probability for c in self.categories) - 1.0) > 1e-9:
            raise ValueError("category probabilities must sum to 1")
        if not 0.0 < self.clip[0] < self.clip[1] <= 1.0:
            raise ValueError("clip bounds must satisfy 0 < low < high <= 1")
        return self
