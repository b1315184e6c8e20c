"""
Models package initialization.

This module imports all models for easy access throughout the application.
"""

from app.models.geometry import SURFACE_NAMES, ImageSource, Shoebox, Vec3
from app.models.materials import AbsorptionProfile, MaterialCategory, MaterialMixture, SurfaceSet
from app.models.directivity import ArrayGeometry, DirectivityPattern, Orientation, PatternSpec
from app.models.rir import Rir, RirFailure, RirRequest
from app.models.scene import NoiseConfig, Sample, ScenarioProfile, SceneSpec
from app.models.evaluation import DoaGrid, DoaResult, EstimatorConfig, EvalSummary, PairedComparison, StftFrames
from app.models.manifest import Manifest, ManifestRecord, ResultsTable
from app.models.run_config import RunConfig

# Export all models
__all__ = [
    'SURFACE_NAMES',
    'Vec3',
    'Shoebox',
    'ImageSource',
    'AbsorptionProfile',
    'SurfaceSet',
    'MaterialCategory',
    'MaterialMixture',
    'Orientation',
    'DirectivityPattern',
    'PatternSpec',
    'ArrayGeometry',
    'RirRequest',
    'Rir',
    'RirFailure',
    'NoiseConfig',
    'ScenarioProfile',
    'SceneSpec',
    'Sample',
    'StftFrames',
    'DoaGrid',
    'EstimatorConfig',
    'DoaResult',
    'EvalSummary',
    'PairedComparison',
    'ManifestRecord',
    'Manifest',
    'ResultsTable',
    'RunConfig',
]
