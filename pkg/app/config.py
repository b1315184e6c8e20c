"""
Configuration module for ISMForge.

This module uses Pydantic Settings to hold and validate every engine constant
(speed of sound, sampling rate, caps, floors, octave-band tables).
Values are taken from init arguments only: the command-line surface declares
no environment variables, so nothing is read implicitly from the process
environment or a .env file. Run-specific state lives in RunConfig files.
"""

from typing import Dict, List, Tuple
from pydantic import Field, field_validator, model_validator
from pydantic_settings import BaseSettings, PydanticBaseSettingsSource, SettingsConfigDict
from pathlib import Path
import psutil


class Settings(BaseSettings):
    """
    Engine settings shared by every module.
    """
    # Project metadata
    PROJECT_NAME: str = "ISMForge"
    VERSION: str = "1.0.0"

    # Acoustics
    SPEED_OF_SOUND: float = Field(343.0, gt=0, description="Speed of sound in m/s")
    SAMPLE_RATE: int = Field(16000, gt=0, description="Dataset sampling rate in Hz")
    MAX_ORDER: int = Field(20, ge=0, description="Default maximum image-source order")

    # RIR synthesis
    RIR_MAX_SAMPLES: int = Field(2**22, gt=0, description="Cap on synthesized RIR length")
    RIR_GUARD_SECONDS: float = 0.05
    IMAGE_CHUNK_ELEMENTS: int = Field(2**18, gt=0, description="Complex values per vectorised image block")
    PHASOR_BLOCK: int = Field(64, gt=0, description="Fine block length of the delay phasor factorisation")

    # Materials
    MAGNITUDE_FLOOR: float = 1e-6
    ALPHA_MIN: float = 0.01
    ALPHA_MAX: float = 1.0
    BAND_CENTERS: List[float] = [125.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0]
    # Per-meter energy attenuation at 20 degC / 50 %RH
    AIR_ABSORPTION_TABLE: Dict[float, float] = {
        125.0: 0.0002,
        250.0: 0.0004,
        500.0: 0.0008,
        1000.0: 0.0016,
        2000.0: 0.004,
        4000.0: 0.012,
    }
    NAIVE_T60_RANGE: Tuple[float, float] = (0.2, 1.0)

    # Scene sampling
    ROOM_RANGES: Tuple[Tuple[float, float], ...] = ((3.0, 10.0), (3.0, 10.0), (2.0, 4.5))
    WALL_MARGIN: float = 0.3
    MIN_SOURCE_ARRAY_DISTANCE: float = 0.3
    WALL_MOUNT_OFFSET: float = 0.01
    MAX_REJECTIONS: int = 10_000
    SAMPLE_SECONDS: float = 2.0
    VALIDATION_FRACTION: float = 0.05

    # DOA estimation
    STFT_WINDOW: int = Field(683, gt=0, description="Hann window length, 42.7 ms at 16 kHz")
    STFT_HOP: int = Field(341, gt=0)
    STFT_NFFT: int = Field(1024, gt=0)
    PHAT_GUARD: float = 1e-12
    DOA_GRID_STEP: float = 1.0
    DOA_BAND: Tuple[float, float] = (100.0, 7600.0)
    RECALL_THRESHOLD: float = Field(10.0, gt=0, description="Errors strictly below count as hits")

    # Parallelism
    DEFAULT_WORKERS: int = Field(default_factory=lambda: psutil.cpu_count(logical=False) or 1)

    # Logging configuration
    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

    # Project paths
    BASE_DIR: Path = Path(__file__).resolve().parent.parent

    @field_validator("BAND_CENTERS")
    def check_band_centers(cls, v: List[float]) -> List[float]:
        """Band centers must be positive and strictly increasing."""
        if len(v) != 6:
            raise ValueError("BAND_CENTERS must list 6 octave bands")
        if any(b <= a for a, b in zip(v, v[1:])) or v[0] <= 0:
            raise ValueError("BAND_CENTERS must be positive and strictly increasing")
        return v

    @field_validator("LOG_LEVEL")
    def check_log_level(cls, v: str) -> str:
        """Normalise the level name; logging only knows upper-case names."""
        v = v.upper()
        if v not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ValueError(f"Unknown LOG_LEVEL: {v}")
        return v

    @model_validator(mode="after")
    def check_alpha_bounds(self) -> "Settings":
        """Absorption bounds must satisfy 0 < ALPHA_MIN < ALPHA_MAX <= 1."""
        if not 0.0 < self.ALPHA_MIN < self.ALPHA_MAX <= 1.0:
            raise ValueError("Require 0 < ALPHA_MIN < ALPHA_MAX <= 1")
        if sorted(self.AIR_ABSORPTION_TABLE) != list(self.AIR_ABSORPTION_TABLE):
            raise ValueError("AIR_ABSORPTION_TABLE keys must be increasing")
        return self

    def provenance(self) -> Dict[str, str]:
        """Flat KEY -> value strings, written into output headers."""
        dumped = self.model_dump(exclude={"BASE_DIR", "LOG_FORMAT", "LOG_LEVEL", "DEFAULT_WORKERS"})
        return {key: str(value) for key, value in sorted(dumped.items())}

    # Pydantic settings config
    model_config = SettingsConfigDict(
        case_sensitive=True,
        extra="ignore",
        frozen=True,
    )

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> Tuple[PydanticBaseSettingsSource, ...]:
        # No environment lookups: all state comes from config files and flags
        return (init_settings,)


# Create global settings instance
settings = Settings()
