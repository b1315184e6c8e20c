"""
Audio I/O for ISMForge.

Samples and RIRs are read through soundfile and written as 32-bit float WAV
through scipy.io.wavfile, which emits no timestamped PEAK chunk, so equal
samples give equal bytes. Arrays in memory are (channels, samples); both
libraries work with (samples, channels).
"""

import json
import logging
from math import gcd
from pathlib import Path
from typing import List, Tuple

import numpy as np
import soundfile as sf
from scipy.io import wavfile
from scipy.signal import resample_poly

from app.exceptions import ConfigError, DatasetIOError, FormatError
from app.models.rir import Rir

logger = logging.getLogger(__name__)

AUDIO_SUFFIXES = (".wav", ".flac", ".ogg")

# Kaiser beta for >= 80 dB stopband attenuation
RESAMPLE_WINDOW = ("kaiser", 8.6)


def read_audio(path) -> Tuple[np.ndarray, int]:
    """Read any libsndfile format as float64, shape (channels, samples)."""
    try:
        data, sr = sf.read(str(path), dtype="float64", always_2d=True)
    except (RuntimeError, OSError) as e:
        raise FormatError(f"cannot read audio: {e}", path=str(path))
    return data.T, int(sr)


def write_wav(path, data: np.ndarray, fs: int) -> None:
    """Write (channels, samples) as 32-bit float WAV."""
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        wavfile.write(str(path), int(fs), np.ascontiguousarray(np.asarray(data, dtype=np.float32).T))
    except (ValueError, OSError) as e:
        raise DatasetIOError(f"cannot write {path}: {e}")


def resample(x: np.ndarray, fs_in: int, fs_out: int) -> np.ndarray:
    """Polyphase windowed-sinc resampling along the last axis."""
    if fs_in == fs_out:
        return x
    g = gcd(fs_in, fs_out)
    return resample_poly(x, fs_out // g, fs_in // g, axis=-1, window=RESAMPLE_WINDOW)


def load_dry_speech(path, fs: int) -> np.ndarray:
    """Mono down-mix of an audio file, resampled to ``fs``."""
    data, sr = read_audio(path)
    return resample(data.mean(axis=0), sr, fs)


def load_speech_corpus(directory, min_seconds: float = 0.0) -> List[Path]:
    """Sorted audio files under ``directory`` lasting at least ``min_seconds``."""
    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigError(f"dry-speech directory does not exist: {directory}")
    files = []
    for path in sorted(p for p in directory.rglob("*") if p.suffix.lower() in AUDIO_SUFFIXES):
        try:
            info = sf.info(str(path))
        except RuntimeError as e:
            logger.warning(f"Skipping unreadable audio file {path}: {e}")
            continue
        if info.frames / info.samplerate >= min_seconds:
            files.append(path)
    if not files:
        raise ConfigError(f"no usable dry-speech files (>= {min_seconds} s) in {directory}")
    logger.info(f"Found {len(files)} dry-speech files in {directory}")
    return files


def write_rir(rir: Rir, path) -> Tuple[Path, Path]:
    """Write ``<path>.wav`` and its ``<path>.json`` sidecar."""
    base = Path(path)
    wav_path = base.with_name(base.name + ".wav")
    json_path = base.with_name(base.name + ".json")
    write_wav(wav_path, rir.data, rir.fs)
    sidecar = {
        "fs": rir.fs,
        "channels": rir.n_channels,
        "samples": rir.n_samples,
        "request_digest": rir.request_digest,
        "seed": rir.seed,
    }
    try:
        json_path.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as e:
        raise DatasetIOError(f"cannot write {json_path}: {e}")
    return wav_path, json_path
