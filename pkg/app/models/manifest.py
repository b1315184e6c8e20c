"""
Manifest models for ISMForge.

A manifest lists the samples of a generated dataset; a results table lists
per-sample DOA estimates. Both carry a flat KEY=VALUE provenance header.
"""

import math
from typing import Dict, List, Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator

from app.models.evaluation import DoaResult
from app.models.rir import SimulationMode

Split = Literal["train", "validation"]


class ManifestRecord(BaseModel):
    """One dataset sample."""
    id: str = Field(..., min_length=1)
    wav: str = Field(..., description="Path relative to the manifest directory")
    fs: int = Field(..., gt=0)
    doa_true: float = Field(..., ge=0.0, le=180.0)
    snr: float
    mode: SimulationMode
    scene_digest: str
    seed: int
    aperture_m: float = Field(..., gt=0.0)
    split: Split = "train"

    model_config = ConfigDict(frozen=True)

    @field_validator("id")
    def check_id(cls, v: str) -> str:
        if any(ch.isspace() for ch in v):
            raise ValueError("sample ids must not contain whitespace")
        return v

    @field_validator("snr")
    def check_snr(cls, v: float) -> float:
        if math.isnan(v):
            raise ValueError("snr must not be NaN")
        return v


class Manifest(BaseModel):
    header: Dict[str, str] = {}
    records: List[ManifestRecord] = []

    model_config = ConfigDict(frozen=True)


class ResultsTable(BaseModel):
    header: Dict[str, str] = {}
    rows: List[DoaResult] = []

    model_config = ConfigDict(frozen=True)

    @property
    def label(self) -> str:
        return self.header.get("LABEL", "")
