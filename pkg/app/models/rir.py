"""
RIR models for ISMForge.

A RirRequest gathers every argument of the image-source transfer function;
a Rir is the multichannel time-domain result.
"""

import hashlib
from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.config import settings
from app.models.directivity import ArrayGeometry, Orientation, PatternSpec
from app.models.geometry import Shoebox, Vec3
from app.models.materials import SurfaceSet

SimulationMode = Literal["naive", "advanced"]


class RirRequest(BaseModel):
    """Everything needed to synthesize one multichannel RIR."""
    room: Shoebox
    surfaces: SurfaceSet
    source_position: Vec3
    source_pattern: PatternSpec = PatternSpec()
    source_orientation: Orientation = Orientation.identity()
    array: ArrayGeometry
    array_center: Vec3
    array_orientation: Orientation = Orientation.identity()
    fs: int = Field(settings.SAMPLE_RATE, gt=0)
    max_order: int = Field(settings.MAX_ORDER, ge=0)
    mode: SimulationMode = "advanced"
    air_absorption: bool = True
    seed: Optional[int] = None

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def check_inside(self) -> "RirRequest":
        if not self.room.contains(self.source_position):
            raise ValueError("source must lie strictly inside the room")
        for position in self.mic_positions():
            if not self.room.contains(Vec3.from_array(position)):
                raise ValueError("microphones must lie strictly inside the room")
        return self

    def mic_positions(self) -> np.ndarray:
        """Absolute microphone positions, shape (M, 3)."""
        relative = self.array_orientation.to_room(self.array.relative_positions())
        return self.array_center.as_array()[None, :] + relative

    def mic_orientations(self) -> List[Orientation]:
        """Per-microphone orientations in the room frame."""
        return [o.compose(self.array_orientation) for o in self.array.orientations]

    def digest(self) -> str:
        """Stable short hash of the request."""
        payload = self.model_dump_json().encode("utf-8")
        return hashlib.sha256(payload).hexdigest()[:16]


class Rir(BaseModel):
    """M-channel impulse response."""
    data: np.ndarray = Field(..., description="Shape (M, T), float64")
    fs: int
    request_digest: str = ""
    seed: Optional[int] = None

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @model_validator(mode="after")
    def check_samples(self) -> "Rir":
        if self.data.ndim != 2:
            raise ValueError("RIR data must be 2-D (channels, samples)")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("RIR samples must be finite")
        return self

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]


class RirFailure(BaseModel):
    """Placeholder for a failed request inside a batch."""
    index: int
    detail: str
