"""
Evaluation models for ISMForge.

This module defines the STFT container, the DOA search grid, estimator
configuration, per-sample results and aggregated summaries.
"""

from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.config import settings


class StftFrames(BaseModel):
    """Complex spectrogram, shape (channels, frames, bins)."""
    spectra: np.ndarray
    window_length: int
    hop: int
    n_fft: int
    fs: int

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @model_validator(mode="after")
    def check_shape(self) -> "StftFrames":
        if self.spectra.ndim != 3:
            raise ValueError("spectra must have shape (channels, frames, bins)")
        if self.spectra.shape[2] != self.n_fft // 2 + 1:
            raise ValueError("bins must equal n_fft/2 + 1")
        if self.hop != self.window_length // 2:
            raise ValueError("hop must be half the window length")
        return self

    @property
    def frequencies(self) -> np.ndarray:
        return np.fft.rfftfreq(self.n_fft, d=1.0 / self.fs)


class DoaGrid(BaseModel):
    """Candidate angles in degrees over [0, 180]."""
    step: float = Field(1.0, gt=0)

    model_config = ConfigDict(frozen=True)

    @field_validator("step")
    def check_divides(cls, v: float) -> float:
        n = 180.0 / v
        if abs(n - round(n)) > 1e-9:
            raise ValueError("grid step must divide 180")
        return v

    @classmethod
    def uniform(cls, step: float = 1.0) -> "DoaGrid":
        return cls(step=step)

    @property
    def angles(self) -> np.ndarray:
        n = int(round(180.0 / self.step))
        return np.linspace(0.0, 180.0, n + 1)


class EstimatorConfig(BaseModel):
    """SRP-PHAT settings."""
    grid_step: float = settings.DOA_GRID_STEP
    f_min: float = Field(settings.DOA_BAND[0], ge=0.0)
    f_max: float = Field(settings.DOA_BAND[1], gt=0.0)
    speed_of_sound: float = Field(settings.SPEED_OF_SOUND, gt=0.0)

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def check_band(self) -> "EstimatorConfig":
        if self.f_min >= self.f_max:
            raise ValueError("f_min must be below f_max")
        return self

    @property
    def grid(self) -> DoaGrid:
        return DoaGrid(step=self.grid_step)


class DoaResult(BaseModel):
    """One row of a results file."""
    id: str
    doa_true: float
    doa_hat: Optional[float] = None
    error_deg: Optional[float] = None
    status: Literal["ok", "missing_audio", "error"] = "ok"

    model_config = ConfigDict(frozen=True)


class EvalSummary(BaseModel):
    """Recall and MAE over a set of per-sample errors."""
    recall: float = Field(..., ge=0.0, le=1.0)
    mae: float = Field(..., ge=0.0)
    mae_ci95: float = Field(..., ge=0.0)
    n: int = Field(..., ge=1)

    model_config = ConfigDict(frozen=True)


class PairedComparison(BaseModel):
    """Significance tests between two result sets over the same samples."""
    method_a: str
    method_b: str
    n: int
    mcnemar_p: float
    mae_diff: float
    mae_diff_ci95: float
    recall_significant: bool
    mae_significant: bool
    trend_holds: bool

    model_config = ConfigDict(frozen=True)
