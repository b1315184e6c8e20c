"""
Run configuration model for ISMForge.

A RunConfig is the complete, validated input of a dataset-generation run.
It is assembled from a KEY=VALUE config file and command-line flags.
"""

from pathlib import Path
from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.config import settings
from app.models.rir import SimulationMode
from app.models.scene import NoiseConfig, RealismLayer


class RunConfig(BaseModel):
    """Validated dataset-generation configuration."""
    profile: str = "voicehome"
    mode: SimulationMode = "advanced"
    n_samples: int = Field(..., ge=1)
    seed: int = Field(..., ge=0, description="Master seed; mandatory, no implicit entropy")
    speech_dir: Path
    out_dir: Path
    source_patterns: List[Path] = []
    workers: int = Field(1, ge=1)
    max_order: int = Field(settings.MAX_ORDER, ge=0)
    ablate: Tuple[RealismLayer, ...] = ()
    noise: Optional[NoiseConfig] = None

    model_config = ConfigDict(frozen=True)

    @field_validator("speech_dir")
    def check_speech_dir(cls, v: Path) -> Path:
        if not v.is_dir():
            raise ValueError(f"dry-speech directory does not exist: {v}")
        return v

    @field_validator("out_dir")
    def check_out_parent(cls, v: Path) -> Path:
        if not v.resolve().parent.is_dir():
            raise ValueError(f"parent of output directory does not exist: {v}")
        return v

    @field_validator("source_patterns")
    def check_patterns(cls, v: List[Path]) -> List[Path]:
        for path in v:
            if not path.is_file():
                raise ValueError(f"directivity file does not exist: {path}")
        return v

    @field_validator("ablate")
    def sort_ablate(cls, v: Tuple[str, ...]) -> Tuple[str, ...]:
        return tuple(sorted(set(v)))

    @model_validator(mode="after")
    def check_ablation_mode(self) -> "RunConfig":
        if self.ablate and self.mode != "advanced":
            raise ValueError("realism ablation only applies to advanced mode")
        return self

    def provenance(self, noise: Optional[NoiseConfig] = None) -> dict:
        """
        Flat KEY -> value strings for the manifest header.

        ``noise`` is the profile default used when the run sets no NOISE_* key.
        """
        items = {
            "PROFILE": self.profile,
            "MODE": self.mode,
            "N_SAMPLES": str(self.n_samples),
            "SEED": str(self.seed),
            "SPEECH_DIR": self.speech_dir.as_posix(),
            "SOURCE_PATTERNS": ",".join(p.as_posix() for p in self.source_patterns),
            "MAX_ORDER": str(self.max_order),
            "ABLATE": ",".join(self.ablate),
        }
        resolved = self.noise or noise
        if resolved is not None:
            for key, value in resolved.model_dump().items():
                if isinstance(value, tuple):
                    value = ",".join(str(v) for v in value)
                items[f"NOISE_{key.upper()}"] = str(value)
        return items
