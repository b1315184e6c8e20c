"""
Materials service for ISMForge.

This module turns octave-band absorption coefficients into DFT-bin reflection
spectra, samples naive (flat, T60-matched) and advanced (category mixture)
surface sets, and predicts reverberation times with Eyring's formula.

Reflection magnitudes follow the energy convention |R| = sqrt(1 - alpha).
"""

import logging
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.stats import truncnorm

from app.config import settings
from app.exceptions import InfiniteT60Error, OutOfRangeError, PreconditionError
from app.models.geometry import SURFACE_NAMES, ImageSource, Shoebox
from app.models.materials import AbsorptionProfile, MaterialCategory, MaterialMixture, SurfaceSet

logger = logging.getLogger(__name__)

SeedLike = Union[None, int, np.random.SeedSequence, np.random.Generator]

# Sabine/Eyring constant 24 ln(10) / c, with c = 343 m/s
EYRING_CONSTANT = 0.161

# --- Advanced absorption mixtures ---

_REFLECTIVE = MaterialCategory(name="reflective", probability=0.7, ramp_start=0.05, ramp_end=0.15, sd=0.03)

MIXTURES: Dict[str, MaterialMixture] = {
    "wall": MaterialMixture(categories=(
        _REFLECTIVE,
        MaterialCategory(name="absorptive", probability=0.3, ramp_start=0.15, ramp_end=0.5, sd=0.1),
    )),
    "floor": MaterialMixture(categories=(
        _REFLECTIVE.model_copy(update={"probability": 0.5}),
        MaterialCategory(name="absorptive", probability=0.5, ramp_start=0.1, ramp_end=0.45, sd=0.1),
    )),
    "ceiling": MaterialMixture(categories=(
        _REFLECTIVE.model_copy(update={"probability": 0.5}),
        MaterialCategory(name="absorptive", probability=0.5, ramp_start=0.3, ramp_end=0.8, sd=0.1),
    )),
}

SURFACE_KINDS: Tuple[str, ...] = ("wall", "wall", "wall", "wall", "floor", "ceiling")


def _rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


# --- Band interpolation ---

def half_cosine_interp(centers: Sequence[float], values: Sequence[float], freqs: np.ndarray) -> np.ndarray:
    """
    Raised-cosine blend of band values on a log-frequency axis.

    Between centers f_i and f_i+1 the weight of band i+1 is
    0.5 - 0.5*cos(pi*t) with t = log2(f/f_i) / log2(f_i+1/f_i). Values are
    held flat below the first and above the last center.
    """
    centers = np.asarray(centers, dtype=float)
    values = np.asarray(values, dtype=float)
    freqs = np.asarray(freqs, dtype=float)
    clipped = np.clip(freqs, centers[0], centers[-1])

    upper = np.clip(np.searchsorted(centers, clipped, side="right"), 1, len(centers) - 1)
    lower = upper - 1
    t = np.log2(clipped / centers[lower]) / np.log2(centers[upper] / centers[lower])
    t = np.clip(t, 0.0, 1.0)
    w = 0.5 - 0.5 * np.cos(np.pi * t)
    return (1.0 - w) * values[lower] + w * values[upper]


def _check_fft_grid(n_fft: int, fs: float, centers: Sequence[float]) -> None:
    if n_fft < 2 or n_fft & (n_fft - 1):
        raise PreconditionError(f"n_fft must be a power of two, got {n_fft}")
    if fs <= 2.0 * max(centers):
        raise PreconditionError(f"fs={fs} must exceed twice the highest band center")


def band_to_dft(profile: AbsorptionProfile, n_fft: int, fs: float) -> np.ndarray:
    """Reflection magnitude sqrt(1 - alpha) on the n_fft/2+1 real-DFT bins."""
    _check_fft_grid(n_fft, fs, profile.band_centers)
    freqs = np.fft.rfftfreq(n_fft, d=1.0 / fs)
    magnitudes = np.sqrt(1.0 - profile.as_array())
    return half_cosine_interp(profile.band_centers, magnitudes, freqs)


# --- Minimum phase ---

def log_reflection_spectrum(magnitude: np.ndarray) -> np.ndarray:
    """Complex log-spectrum of the minimum-phase filter with the given magnitude."""
    m = np.maximum(np.asarray(magnitude, dtype=float), settings.MAGNITUDE_FLOOR)
    n_bins = m.shape[-1]
    n = 2 * (n_bins - 1)
    if n < 2:
        return np.log(m).astype(complex)
    cepstrum = np.fft.irfft(np.log(m), n=n)
    half = n // 2

    folded = np.zeros_like(cepstrum)
    folded[..., 0] = cepstrum[..., 0]
    folded[..., 1:half] = 2.0 * cepstrum[..., 1:half]
    folded[..., half] = cepstrum[..., half]
    return np.fft.rfft(folded, n=n)


def minimum_phase(magnitude: np.ndarray) -> np.ndarray:
    """Real-cepstrum minimum-phase spectrum; magnitudes are floored at MAGNITUDE_FLOOR."""
    return np.exp(log_reflection_spectrum(magnitude))


def surface_log_spectra(surfaces: SurfaceSet, n_fft: int, fs: float) -> np.ndarray:
    """Log reflection spectra of all six surfaces, shape (6, n_fft/2+1)."""
    return np.stack([log_reflection_spectrum(band_to_dft(p, n_fft, fs)) for p in surfaces.profiles()])


def compound_reflection(image: ImageSource, surfaces: SurfaceSet, n_fft: int, fs: float) -> np.ndarray:
    """Product over surfaces of each reflection spectrum raised to its reflection count."""
    counts = np.asarray(image.reflection_counts, dtype=float)
    if image.order == 0:
        return np.ones(n_fft // 2 + 1, dtype=complex)
    return np.exp(counts @ surface_log_spectra(surfaces, n_fft, fs))


# --- Air ---

def air_coefficients(freqs: np.ndarray) -> np.ndarray:
    """Per-meter energy attenuation a(f) interpolated from the octave table."""
    table = settings.AIR_ABSORPTION_TABLE
    return half_cosine_interp(list(table.keys()), list(table.values()), freqs)


def air_attenuation(r, f) -> np.ndarray:
    """Pressure gain exp(-a(f) * r / 2); broadcasts over r and f."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise PreconditionError("distance must be >= 0")
    return np.exp(-air_coefficients(f) * r / 2.0)


# --- Reverberation time ---

def mean_absorption(room: Shoebox, surfaces: SurfaceSet) -> np.ndarray:
    """Area-weighted mean absorption per band."""
    areas = room.surface_areas()
    # rounding can push the weighted mean of alpha=1 surfaces past 1
    return np.clip(areas @ surfaces.alpha_matrix() / areas.sum(), 0.0, 1.0)


def eyring_t60(room: Shoebox, surfaces: SurfaceSet) -> np.ndarray:
    """Per-band T60 = 0.161 V / (-S ln(1 - mean alpha)) in seconds."""
    alpha = mean_absorption(room, surfaces)
    if np.any(alpha <= 0.0):
        raise InfiniteT60Error("mean absorption is zero in at least one band")
    with np.errstate(divide="ignore"):
        decay = -room.total_area * np.log1p(-alpha)
    return np.where(np.isinf(decay), 0.0, EYRING_CONSTANT * room.volume / decay)


def mid_t60(room: Shoebox, surfaces: SurfaceSet) -> float:
    """Mean of the 500 Hz and 1 kHz band T60s."""
    t60 = eyring_t60(room, surfaces)
    centers = settings.BAND_CENTERS
    return float((t60[centers.index(500.0)] + t60[centers.index(1000.0)]) / 2.0)


def _eyring_alpha(target_t60: float, room: Shoebox) -> float:
    alpha = float(-np.expm1(-EYRING_CONSTANT * room.volume / (room.total_area * target_t60)))
    # targets clipped to the achievable range round-trip to the bounds
    for bound in (settings.ALPHA_MIN, settings.ALPHA_MAX):
        if np.isclose(alpha, bound, rtol=1e-9, atol=0.0):
            return float(bound)
    return alpha


def achievable_t60_range(room: Shoebox) -> Tuple[float, float]:
    """Eyring T60 at ALPHA_MAX and at ALPHA_MIN for a flat uniform room."""
    t_min = eyring_t60(room, SurfaceSet.uniform(settings.ALPHA_MAX))[0]
    t_max = eyring_t60(room, SurfaceSet.uniform(settings.ALPHA_MIN))[0]
    return float(t_min), float(t_max)


def clip_target_t60(target_t60: float, room: Shoebox) -> float:
    t_min, t_max = achievable_t60_range(room)
    return float(np.clip(target_t60, t_min, t_max))


def sample_naive_absorption(target_t60: float, room: Shoebox) -> SurfaceSet:
    """Flat, equal absorption on all surfaces whose Eyring T60 is ``target_t60``."""
    if not target_t60 > 0:
        raise PreconditionError(f"target T60 must be > 0, got {target_t60}")
    alpha = _eyring_alpha(target_t60, room)
    if alpha < settings.ALPHA_MIN or alpha > settings.ALPHA_MAX:
        raise OutOfRangeError(
            f"T60 {target_t60:.3f} s needs alpha={alpha:.4f}, outside "
            f"[{settings.ALPHA_MIN}, {settings.ALPHA_MAX}]"
        )
    return SurfaceSet.uniform(alpha)


def sample_naive_t60(room: Shoebox, rng_seed: SeedLike = None) -> float:
    """Uniform draw from NAIVE_T60_RANGE, clipped to the achievable range."""
    low, high = settings.NAIVE_T60_RANGE
    return clip_target_t60(float(_rng(rng_seed).uniform(low, high)), room)


def _truncnorm_bounds(mean: np.ndarray, sd: float, clip: Tuple[float, float]):
    return (clip[0] - mean) / sd, (clip[1] - mean) / sd


def draw_surface(kind: str, rng: np.random.Generator) -> AbsorptionProfile:
    """One category draw, then one truncated-normal draw per band."""
    mixture = MIXTURES[kind]
    probabilities = [c.probability for c in mixture.categories]
    category = mixture.categories[int(rng.choice(len(probabilities), p=probabilities))]
    means = category.band_means()
    a, b = _truncnorm_bounds(means, category.sd, mixture.clip)
    alphas = truncnorm.rvs(a, b, loc=means, scale=category.sd, random_state=rng)
    return AbsorptionProfile(alphas=tuple(float(x) for x in alphas))


def sample_advanced_absorption(rng_seed: SeedLike = None) -> SurfaceSet:
    """Per-surface category mixture draw: walls, floor and ceiling use distinct mixtures."""
    rng = _rng(rng_seed)
    return SurfaceSet.from_list([draw_surface(kind, rng) for kind in SURFACE_KINDS])


def mixture_band_means(kind: str) -> np.ndarray:
    """Analytic per-band mean of a surface kind's mixture."""
    mixture = MIXTURES[kind]
    total = np.zeros(6)
    for category in mixture.categories:
        means = category.band_means()
        a, b = _truncnorm_bounds(means, category.sd, mixture.clip)
        total += category.probability * truncnorm.mean(a, b, loc=means, scale=category.sd)
    return total


def mixture_band_stds(kind: str) -> np.ndarray:
    """Analytic per-band standard deviation of a surface kind's mixture."""
    mixture = MIXTURES[kind]
    second = np.zeros(6)
    for category in mixture.categories:
        means = category.band_means()
        a, b = _truncnorm_bounds(means, category.sd, mixture.clip)
        mean = truncnorm.mean(a, b, loc=means, scale=category.sd)
        var = truncnorm.var(a, b, loc=means, scale=category.sd)
        second += category.probability * (var + mean ** 2)
    return np.sqrt(second - mixture_band_means(kind) ** 2)


def surface_kind(name: str) -> str:
    """Mixture kind of a surface given its SURFACE_NAMES entry."""
    return SURFACE_KINDS[SURFACE_NAMES.index(name)]
