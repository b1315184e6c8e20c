"""
Scene models for ISMForge.

This module defines randomized scenes, noise configuration, scenario profiles
and rendered two-channel samples.
"""

import hashlib
import math
from typing import Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.config import settings
from app.models.directivity import ArrayGeometry, Orientation, PatternSpec
from app.models.geometry import Shoebox, Vec3
from app.models.materials import SurfaceSet
from app.models.rir import RirRequest, SimulationMode

RealismLayer = Literal["walls", "source", "receiver"]


class NoiseConfig(BaseModel):
    """Two-component additive noise and its SNR distribution."""
    enabled: bool = True
    snr_mean: float = Field(40.0, description="dB")
    snr_sd: float = Field(10.0, gt=0, description="dB")
    snr_clip: Tuple[float, float] = (15.0, 75.0)
    white_fraction: float = Field(0.1, ge=0.0, le=1.0, description="Share of noise power that is white")
    late_onset: float = Field(0.05, ge=0.0, description="Seconds after direct arrival where the late RIR starts")

    model_config = ConfigDict(frozen=True)

    @field_validator("snr_clip")
    def check_clip(cls, v: Tuple[float, float]) -> Tuple[float, float]:
        if not v[0] < v[1]:
            raise ValueError("SNR clip bounds must be ordered")
        return v


class ScenarioProfile(BaseModel):
    """A recording scenario: aperture, advanced-mode receiver kind and noise."""
    name: str
    aperture: float = Field(..., gt=0, description="Microphone spacing in meters")
    advanced_receiver: Literal["interior", "wall", "baffled"]
    noise: NoiseConfig = NoiseConfig()

    model_config = ConfigDict(frozen=True)


class SceneSpec(BaseModel):
    """A fully specified randomized scene: room, materials, source and array poses."""
    profile: str
    mode: SimulationMode
    index: int = 0
    seed: int
    room: Shoebox
    surfaces: SurfaceSet
    t60_target: Optional[float] = None
    source_position: Vec3
    source_pattern: PatternSpec = PatternSpec()
    source_orientation: Orientation = Orientation.identity()
    array: ArrayGeometry
    array_center: Vec3
    array_orientation: Orientation = Orientation.identity()
    mounted_wall: Optional[str] = None
    ablate: Tuple[RealismLayer, ...] = ()

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def check_invariants(self) -> "SceneSpec":
        dims = self.room.dims.as_array()
        for value, (low, high) in zip(dims, settings.ROOM_RANGES):
            if not low <= value <= high:
                raise ValueError(f"room dimension {value:.3f} outside [{low}, {high}]")
        margin = settings.WALL_MARGIN
        if not self.room.contains(self.source_position, margin=margin):
            raise ValueError("source closer than the wall margin")
        source = self.source_position.as_array()
        for mic in self.mic_positions():
            if np.linalg.norm(mic - source) < settings.MIN_SOURCE_ARRAY_DISTANCE:
                raise ValueError("source too close to a microphone")
            if self.mounted_wall is None and not self.room.contains(Vec3.from_array(mic), margin=margin):
                raise ValueError("microphone closer than the wall margin")
        if np.linalg.norm(self.array_center.as_array() - source) < settings.MIN_SOURCE_ARRAY_DISTANCE:
            raise ValueError("source too close to the array")
        return self

    def mic_positions(self) -> np.ndarray:
        relative = self.array_orientation.to_room(self.array.relative_positions())
        return self.array_center.as_array()[None, :] + relative

    def to_request(self, max_order: int = settings.MAX_ORDER, fs: int = settings.SAMPLE_RATE) -> RirRequest:
        return RirRequest(
            room=self.room,
            surfaces=self.surfaces,
            source_position=self.source_position,
            source_pattern=self.source_pattern,
            source_orientation=self.source_orientation,
            array=self.array,
            array_center=self.array_center,
            array_orientation=self.array_orientation,
            fs=fs,
            max_order=max_order,
            mode=self.mode,
            seed=self.seed,
        )

    def digest(self) -> str:
        return hashlib.sha256(self.model_dump_json().encode("utf-8")).hexdigest()[:16]


class Sample(BaseModel):
    """Two-second two-channel reverberant speech with its DOA label."""
    audio: np.ndarray = Field(..., description="Shape (2, duration * fs), float32")
    fs: int = settings.SAMPLE_RATE
    doa_true: float = Field(..., ge=0.0, le=180.0)
    snr: float
    scene_digest: str
    speech_image: Optional[np.ndarray] = None
    noise: Optional[np.ndarray] = None

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @model_validator(mode="after")
    def check_audio(self) -> "Sample":
        expected = int(round(settings.SAMPLE_SECONDS * self.fs))
        if self.audio.shape != (2, expected):
            raise ValueError(f"audio must have shape (2, {expected}), got {self.audio.shape}")
        if not np.all(np.isfinite(self.audio)):
            raise ValueError("audio must be finite")
        if math.isnan(self.snr):
            raise ValueError("snr must not be NaN")
        return self
