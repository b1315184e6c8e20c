"""
DOA service for ISMForge.

This module provides the STFT front-end and the SRP-PHAT estimator for a
two-microphone pair, plus dataset-level evaluation against a manifest.

Angle convention: theta is measured from the mic1->mic2 axis, so a source
beyond mic2 (theta = 0) reaches mic2 first and mic1 lags by
aperture*cos(theta)/c.
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import get_window
from tqdm import tqdm

from app.config import settings
from app.exceptions import ISMForgeError, NoEstimateError, PreconditionError
from app.formats.audio import read_audio, resample
from app.models.evaluation import DoaGrid, DoaResult, EstimatorConfig, StftFrames
from app.models.manifest import Manifest, ManifestRecord

logger = logging.getLogger(__name__)


def analysis_window() -> np.ndarray:
    """Periodic Hann window of STFT_WINDOW samples."""
    return get_window("hann", settings.STFT_WINDOW, fftbins=True)


def stft(x: np.ndarray, fs: int) -> StftFrames:
    """
    Hann-windowed STFT of (channels, samples) audio.

    Frames start every STFT_HOP samples; a trailing partial frame is dropped.
    """
    if fs != settings.SAMPLE_RATE:
        raise PreconditionError(f"STFT expects fs={settings.SAMPLE_RATE}, got {fs}")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    win = settings.STFT_WINDOW
    if x.shape[1] < win:
        raise PreconditionError(f"signal of {x.shape[1]} samples is shorter than one window ({win})")
    frames = sliding_window_view(x, win, axis=-1)[:, ::settings.STFT_HOP, :]
    spectra = np.fft.rfft(frames * analysis_window(), n=settings.STFT_NFFT, axis=-1)
    return StftFrames(spectra=spectra, window_length=win, hop=settings.STFT_HOP, n_fft=settings.STFT_NFFT, fs=fs)


def steering_delays(angles: np.ndarray, aperture: float, c: float = settings.SPEED_OF_SOUND) -> np.ndarray:
    """Far-field lag of mic1 behind mic2 for each candidate angle (degrees)."""
    return aperture * np.cos(np.radians(angles)) / c


def _pick_peak(angles: np.ndarray, scores: np.ndarray) -> float:
    best = scores.max()
    tol = 1e-12 * max(1.0, abs(best))
    ties = np.flatnonzero(scores >= best - tol)
    return float(angles[ties[np.argmin(np.abs(angles[ties] - 90.0))]])


def srp_phat(
    frames: StftFrames,
    aperture: float,
    grid: DoaGrid = DoaGrid(),
    band: Tuple[float, float] = settings.DOA_BAND,
    c: float = settings.SPEED_OF_SOUND,
) -> Tuple[float, np.ndarray]:
    """
    Steered response power with phase transform over ``grid``.

    Returns the best angle (ties go to the one closest to 90 degrees) and
    the per-angle score.
    """
    spectra = frames.spectra
    if spectra.shape[0] != 2:
        raise PreconditionError(f"SRP-PHAT needs two channels, got {spectra.shape[0]}")
    if aperture <= 0:
        raise PreconditionError("aperture must be positive")
    f_lo, f_hi = band
    if not 0.0 <= f_lo < f_hi <= frames.fs / 2.0:
        raise PreconditionError(f"band {band} outside [0, {frames.fs / 2.0}] Hz")

    freqs = frames.frequencies
    in_band = (freqs >= f_lo) & (freqs <= f_hi)
    cross = spectra[0][:, in_band] * np.conj(spectra[1][:, in_band])
    mag = np.abs(cross)
    keep = mag >= settings.PHAT_GUARD
    if not np.any(keep):
        raise NoEstimateError("no time-frequency bin carries energy")
    phat = np.where(keep, cross / np.where(keep, mag, 1.0), 0.0)
    summed = phat.sum(axis=0)

    angles = grid.angles
    tau = steering_delays(angles, aperture, c)
    steering = np.exp(2j * np.pi * np.outer(tau, freqs[in_band]))
    scores = np.real(steering @ summed)
    return _pick_peak(angles, scores), scores


def estimate_doa(audio: np.ndarray, fs: int, aperture: float, config: EstimatorConfig = EstimatorConfig()) -> float:
    """SRP-PHAT DOA of two-channel audio, resampled to the STFT rate when needed."""
    if fs != settings.SAMPLE_RATE:
        audio = resample(np.asarray(audio, dtype=float), fs, settings.SAMPLE_RATE)
        fs = settings.SAMPLE_RATE
    doa, _ = srp_phat(stft(audio, fs), aperture, config.grid, (config.f_min, config.f_max), config.speed_of_sound)
    return doa


def estimator_header(config: EstimatorConfig) -> Dict[str, str]:
    """Results-file header entries describing the estimator."""
    return {
        "ESTIMATOR": "srp_phat",
        "GRID_STEP": str(config.grid_step),
        "F_MIN": str(config.f_min),
        "F_MAX": str(config.f_max),
        "SPEED_OF_SOUND": str(config.speed_of_sound),
        "STFT_WINDOW": str(settings.STFT_WINDOW),
        "STFT_HOP": str(settings.STFT_HOP),
        "STFT_NFFT": str(settings.STFT_NFFT),
    }


def evaluate_record(record: ManifestRecord, root: Path, config: EstimatorConfig) -> DoaResult:
    """One results row; failures become status rows instead of exceptions."""
    wav = Path(root) / record.wav
    if not wav.is_file():
        logger.error(f"Missing audio for {record.id}: {wav}")
        return DoaResult(id=record.id, doa_true=record.doa_true, status="missing_audio")
    try:
        audio, fs = read_audio(wav)
        doa_hat = estimate_doa(audio, fs, record.aperture_m, config)
    except ISMForgeError as e:
        logger.error(f"Error evaluating {record.id}: {e.detail}")
        return DoaResult(id=record.id, doa_true=record.doa_true, status="error")
    except Exception:
        logger.exception(f"Unexpected failure evaluating {record.id}")
        return DoaResult(id=record.id, doa_true=record.doa_true, status="error")
    return DoaResult(
        id=record.id,
        doa_true=record.doa_true,
        doa_hat=doa_hat,
        error_deg=abs(doa_hat - record.doa_true),
    )


def evaluate_dataset(
    manifest: Manifest,
    config: EstimatorConfig = EstimatorConfig(),
    root: Optional[Path] = None,
    workers: int = 1,
    progress: bool = False,
) -> List[DoaResult]:
    """
    Run the estimator over every manifest record, in manifest order.

    ``root`` is the directory wav paths are relative to (the manifest's).
    """
    root = Path(root) if root is not None else Path(".")
    if not manifest.records:
        return []
    logger.info(f"Evaluating {len(manifest.records)} samples with {workers} worker(s)")
    jobs = (delayed(evaluate_record)(record, root, config) for record in manifest.records)
    results = list(tqdm(
        Parallel(n_jobs=workers, return_as="generator")(jobs),
        total=len(manifest.records),
        desc="eval",
        disable=not progress,
    ))
    failed = sum(1 for r in results if r.status != "ok")
    if failed:
        logger.warning(f"{failed} of {len(results)} samples could not be evaluated")
    return results
