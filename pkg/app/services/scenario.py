"""
Scenario service for ISMForge.

This module draws randomized scenes (room, materials, source and array
poses), renders two-second reverberant two-channel speech samples with
additive white and diffuse speech-shaped noise, and writes whole datasets.

Randomness is split into independent streams per sample index and purpose
(geometry, materials, directivity, speech, noise, split), so that naive and
advanced runs with the same master seed share every geometric draw.
"""

import logging
import shutil
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Set, Tuple, Union

import numpy as np
from joblib import Parallel, delayed
from scipy.linalg import solve_toeplitz
from scipy.signal import fftconvolve, lfilter
from scipy.stats import truncnorm
from tqdm import tqdm

from app.config import settings
from app.exceptions import (
    ConfigError,
    DatasetIOError,
    DegenerateGeometryError,
    InfeasibleProfileError,
    NoValidCropError,
    PreconditionError,
)
from app.formats.audio import load_dry_speech, load_speech_corpus, write_wav
from app.formats.manifest import write_manifest
from app.formats.scene_file import write_scene
from app.models.directivity import ArrayGeometry, Orientation, PatternSpec
from app.models.geometry import Shoebox, Vec3
from app.models.manifest import Manifest, ManifestRecord
from app.models.rir import SimulationMode
from app.models.run_config import RunConfig
from app.models.scene import NoiseConfig, RealismLayer, Sample, ScenarioProfile, SceneSpec
from app.services.directivity import SOURCE_BUILTINS
from app.services.ism_engine import synthesize_rir
from app.services.materials import sample_advanced_absorption, sample_naive_absorption, sample_naive_t60

logger = logging.getLogger(__name__)

# --- Profiles ---

PROFILES: Dict[str, ScenarioProfile] = {
    "voicehome": ScenarioProfile(name="voicehome", aperture=0.104, advanced_receiver="interior"),
    "dirha": ScenarioProfile(name="dirha", aperture=0.30, advanced_receiver="wall"),
    "starss": ScenarioProfile(name="starss", aperture=0.068, advanced_receiver="baffled"),
}

STREAM_TAGS: Dict[str, int] = {
    "geometry": 0,
    "materials": 1,
    "directivity": 2,
    "speech": 3,
    "noise": 4,
    "split": 5,
}

# Vertical walls for wall-mounted arrays: (name, axis, at far wall)
MOUNT_WALLS: Tuple[Tuple[str, int, bool], ...] = (
    ("west", 0, False),
    ("east", 0, True),
    ("south", 1, False),
    ("north", 1, True),
)

SPEECH_SHAPE_CORNER_HZ = 500.0
SPEECH_SHAPE_ORDER = 8


def get_profile(name: str) -> ScenarioProfile:
    if name not in PROFILES:
        raise ConfigError(f"Unknown scenario profile '{name}'. Available: {', '.join(PROFILES)}")
    return PROFILES[name]


def stream(master_seed: int, index: int, tag: str) -> np.random.Generator:
    """Independent generator for (master seed, sample index, purpose)."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(index, STREAM_TAGS[tag])))


# --- Scene sampling ---

def _mic_positions(center: np.ndarray, orientation: Orientation, array: ArrayGeometry) -> np.ndarray:
    return center[None, :] + orientation.to_room(array.relative_positions())


def _far_enough(source: np.ndarray, center: np.ndarray, mics: np.ndarray) -> bool:
    limit = settings.MIN_SOURCE_ARRAY_DISTANCE
    if np.linalg.norm(center - source) < limit:
        return False
    return bool(np.all(np.linalg.norm(mics - source[None, :], axis=1) >= limit))


def _inside(room: Shoebox, points: np.ndarray, margin: float) -> bool:
    return all(room.contains(Vec3.from_array(p), margin=margin) for p in points)


def _wall_pose(dims: np.ndarray, wall: int, along: float, height: float) -> Tuple[np.ndarray, Orientation]:
    """Array center 1 cm in front of a vertical wall, looking into the room."""
    _, axis, far = MOUNT_WALLS[wall]
    center = np.zeros(3)
    offset = settings.WALL_MOUNT_OFFSET
    center[axis] = dims[axis] - offset if far else offset
    center[1 - axis] = along
    center[2] = height
    look = np.zeros(3)
    look[axis] = -1.0 if far else 1.0
    return center, Orientation(look=Vec3.from_array(look))


class _Geometry(NamedTuple):
    """Mode-independent draws shared by naive and advanced scenes."""
    room: Shoebox
    source: np.ndarray
    source_orientation: Orientation
    interior_center: np.ndarray
    interior_orientation: Orientation
    wall: int
    wall_center: np.ndarray
    wall_orientation: Orientation


def _draw_geometry(aperture: float, rng: np.random.Generator) -> _Geometry:
    """Rejection sampling of room, source and both candidate array poses."""
    margin = settings.WALL_MARGIN
    layout = ArrayGeometry.pair(aperture)
    for _ in range(settings.MAX_REJECTIONS):
        dims = np.array([rng.uniform(low, high) for low, high in settings.ROOM_RANGES])
        source = rng.uniform(margin, dims - margin)
        source_yaw = rng.uniform(0.0, 2.0 * np.pi)
        center = rng.uniform(margin, dims - margin)
        yaw = rng.uniform(0.0, 2.0 * np.pi)
        wall = int(rng.integers(len(MOUNT_WALLS)))
        along_axis = 1 - MOUNT_WALLS[wall][1]
        half = aperture / 2.0
        along = rng.uniform(margin + half, max(margin + half, dims[along_axis] - margin - half))
        height = rng.uniform(margin, dims[2] - margin)

        room = Shoebox(dims=Vec3.from_array(dims))
        interior_orientation = Orientation.horizontal(yaw)
        interior_mics = _mic_positions(center, interior_orientation, layout)
        if not (_inside(room, interior_mics, margin) and _far_enough(source, center, interior_mics)):
            continue
        wall_center, wall_orientation = _wall_pose(dims, wall, along, height)
        wall_mics = _mic_positions(wall_center, wall_orientation, layout)
        if not (_inside(room, wall_mics, 0.0) and _far_enough(source, wall_center, wall_mics)):
            continue
        return _Geometry(
            room=room,
            source=source,
            source_orientation=Orientation.horizontal(source_yaw),
            interior_center=center,
            interior_orientation=interior_orientation,
            wall=wall,
            wall_center=wall_center,
            wall_orientation=wall_orientation,
        )
    raise InfeasibleProfileError(f"no valid scene after {settings.MAX_REJECTIONS} draws (aperture {aperture} m)")


def _source_specs(source_patterns: Optional[Sequence[Union[str, Path]]]) -> List[PatternSpec]:
    if source_patterns:
        return [PatternSpec(kind="file", path=str(p)) for p in source_patterns]
    return [PatternSpec(kind="builtin", name=name) for name in SOURCE_BUILTINS]


def sample_scene(
    mode: SimulationMode,
    profile: Union[str, ScenarioProfile],
    rng_seed: int,
    index: int = 0,
    ablate: Sequence[RealismLayer] = (),
    source_patterns: Optional[Sequence[Union[str, Path]]] = None,
) -> SceneSpec:
    """
    Draw one scene.

    Geometry comes from the geometry stream only, so both modes see the same
    room and poses. In advanced mode each layer listed in ``ablate`` falls
    back to its naive counterpart.
    """
    if isinstance(profile, str):
        profile = get_profile(profile)
    ablate = tuple(sorted(set(ablate)))
    if ablate and mode != "advanced":
        raise PreconditionError("realism ablation only applies to advanced mode")

    geo = _draw_geometry(profile.aperture, stream(rng_seed, index, "geometry"))

    materials_rng = stream(rng_seed, index, "materials")
    t60_target = None
    if mode == "advanced" and "walls" not in ablate:
        surfaces = sample_advanced_absorption(materials_rng)
    else:
        t60_target = sample_naive_t60(geo.room, materials_rng)
        surfaces = sample_naive_absorption(t60_target, geo.room)

    directivity_rng = stream(rng_seed, index, "directivity")
    source_pattern = PatternSpec()
    if mode == "advanced" and "source" not in ablate:
        choices = _source_specs(source_patterns)
        source_pattern = choices[int(directivity_rng.integers(len(choices)))]

    receiver = profile.advanced_receiver if mode == "advanced" and "receiver" not in ablate else "interior"
    mounted_wall = None
    if receiver == "wall":
        array = ArrayGeometry.pair(profile.aperture, PatternSpec(kind="half_sphere"))
        center, orientation = geo.wall_center, geo.wall_orientation
        mounted_wall = MOUNT_WALLS[geo.wall][0]
    elif receiver == "baffled":
        array = ArrayGeometry.pair(
            profile.aperture,
            patterns=[PatternSpec(kind="builtin", name="baffled_pair_mic1"), PatternSpec(kind="builtin", name="baffled_pair_mic2")],
            mode="array_centered",
        )
        center, orientation = geo.interior_center, geo.interior_orientation
    else:
        array = ArrayGeometry.pair(profile.aperture)
        center, orientation = geo.interior_center, geo.interior_orientation

    return SceneSpec(
        profile=profile.name,
        mode=mode,
        index=index,
        seed=rng_seed,
        room=geo.room,
        surfaces=surfaces,
        t60_target=t60_target,
        source_position=Vec3.from_array(geo.source),
        source_pattern=source_pattern,
        source_orientation=geo.source_orientation,
        array=array,
        array_center=Vec3.from_array(center),
        array_orientation=orientation,
        mounted_wall=mounted_wall,
        ablate=ablate,
    )


def ground_truth_doa(scene: SceneSpec) -> float:
    """Angle in degrees between the mic1->mic2 axis and the center->source vector."""
    mics = scene.mic_positions()
    if mics.shape[0] != 2:
        raise PreconditionError(f"DOA labels need a two-microphone array, got {mics.shape[0]}")
    axis = mics[1] - mics[0]
    to_source = scene.source_position.as_array() - scene.array_center.as_array()
    norm = np.linalg.norm(axis) * np.linalg.norm(to_source)
    if norm == 0.0:
        raise DegenerateGeometryError("source coincides with the array center")
    cos = np.clip(axis @ to_source / norm, -1.0, 1.0)
    return float(np.degrees(np.arccos(cos)))


# --- Rendering ---

@lru_cache(maxsize=8)
def speech_envelope(fs: int) -> Tuple[float, np.ndarray]:
    """
    All-pole fit (gain, denominator) of the long-term speech spectrum.

    The target power is flat below SPEECH_SHAPE_CORNER_HZ and falls by
    6 dB/octave above it; the SPEECH_SHAPE_ORDER coefficients solve the
    Yule-Walker equations of its autocorrelation.
    """
    freqs = np.linspace(0.0, fs / 2.0, 2049)
    power = 1.0 / (1.0 + (freqs / SPEECH_SHAPE_CORNER_HZ) ** 2)
    r = np.fft.irfft(power)[: SPEECH_SHAPE_ORDER + 1]
    a = np.concatenate([[1.0], solve_toeplitz(r[:-1], -r[1:])])
    gain = float(np.sqrt(r[0] + a[1:] @ r[1:]))
    a.setflags(write=False)
    return gain, a


def speech_shaped_noise(n: int, fs: int, rng: np.random.Generator) -> np.ndarray:
    """White noise through the speech envelope filter."""
    gain, a = speech_envelope(fs)
    return lfilter([gain], a, rng.standard_normal(n))


def choose_crop(speech: np.ndarray, length: int, rng: np.random.Generator) -> int:
    """Start of a window whose RMS is at least half the best window's RMS."""
    if speech.size < length:
        raise PreconditionError(f"dry speech has {speech.size} samples, need {length}")
    energy = np.concatenate([[0.0], np.cumsum(speech.astype(float) ** 2)])
    window_power = (energy[length:] - energy[:-length]) / length
    rms = np.sqrt(np.maximum(window_power, 0.0))
    best = float(rms.max())
    if best <= 0.0:
        raise NoValidCropError("dry speech is silent")
    candidates = np.flatnonzero(rms >= 0.5 * best)
    return int(candidates[rng.integers(candidates.size)])


def _power(x: np.ndarray) -> float:
    return float(np.mean(np.asarray(x, dtype=float) ** 2))


def measured_snr(speech_image: np.ndarray, noise: np.ndarray) -> float:
    """SNR in dB of speech-image power over noise power."""
    p_noise = _power(noise)
    if p_noise == 0.0:
        return float("inf")
    return 10.0 * np.log10(_power(speech_image) / p_noise)


def draw_snr(noise_cfg: NoiseConfig, rng: np.random.Generator) -> float:
    low, high = noise_cfg.snr_clip
    a = (low - noise_cfg.snr_mean) / noise_cfg.snr_sd
    b = (high - noise_cfg.snr_mean) / noise_cfg.snr_sd
    return float(truncnorm.rvs(a, b, loc=noise_cfg.snr_mean, scale=noise_cfg.snr_sd, random_state=rng))


def _diffuse_noise(scene: SceneSpec, noise_cfg: NoiseConfig, length: int, rng: np.random.Generator,
                   max_order: int, fs: int) -> np.ndarray:
    """Speech-shaped noise through the late part of an auxiliary-source RIR."""
    margin = settings.WALL_MARGIN
    dims = scene.room.dims.as_array()
    aux = rng.uniform(margin, dims - margin)
    aux_scene = scene.model_copy(update={"source_position": Vec3.from_array(aux), "source_pattern": PatternSpec()})
    rir = synthesize_rir(aux_scene.to_request(max_order=max_order, fs=fs)).data

    mics = scene.mic_positions()
    direct = int(round(fs * float(np.min(np.linalg.norm(mics - aux[None, :], axis=1))) / settings.SPEED_OF_SOUND))
    late = rir[:, direct + int(round(noise_cfg.late_onset * fs)):]
    if late.shape[1] == 0:
        return np.zeros((rir.shape[0], length))
    source = speech_shaped_noise(length + late.shape[1] - 1, fs, rng)
    return np.stack([fftconvolve(source, h, mode="valid") for h in late])


def render_sample(
    scene: SceneSpec,
    dry_speech: np.ndarray,
    noise_cfg: NoiseConfig,
    rng: Union[int, np.random.Generator, None] = None,
    noise_rng: Union[int, np.random.Generator, None] = None,
    max_order: int = settings.MAX_ORDER,
    fs: int = settings.SAMPLE_RATE,
) -> Sample:
    """
    Convolve dry speech with the scene RIR, crop two seconds and add noise.

    ``rng`` drives the crop; ``noise_rng`` (defaults to ``rng``) drives the
    SNR draw, the auxiliary source and the noise signals.
    """
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    noise_rng = rng if noise_rng is None else (
        noise_rng if isinstance(noise_rng, np.random.Generator) else np.random.default_rng(noise_rng)
    )
    length = int(round(settings.SAMPLE_SECONDS * fs))
    dry_speech = np.asarray(dry_speech, dtype=float)
    if dry_speech.ndim != 1:
        raise PreconditionError("dry speech must be mono")
    start = choose_crop(dry_speech, length, rng)

    rir = synthesize_rir(scene.to_request(max_order=max_order, fs=fs)).data
    segment = dry_speech[max(0, start - rir.shape[1] + 1):start + length]
    lead = start - max(0, start - rir.shape[1] + 1)
    image = np.stack([fftconvolve(segment, h)[lead:lead + length] for h in rir])

    if noise_cfg.enabled:
        snr = draw_snr(noise_cfg, noise_rng)
        white = noise_rng.standard_normal(image.shape)
        diffuse = _diffuse_noise(scene, noise_cfg, length, noise_rng, max_order, fs)
        target = _power(image) / 10.0 ** (snr / 10.0)
        noise = np.sqrt(noise_cfg.white_fraction * target / _power(white)) * white
        if _power(diffuse) > 0.0:
            noise = noise + np.sqrt((1.0 - noise_cfg.white_fraction) * target / _power(diffuse)) * diffuse
        noise *= np.sqrt(target / _power(noise))
    else:
        snr = float("inf")
        noise = np.zeros_like(image)

    return Sample(
        audio=image + noise,
        fs=fs,
        doa_true=ground_truth_doa(scene),
        snr=snr,
        scene_digest=scene.digest(),
        speech_image=image,
        noise=noise,
    )


# --- Dataset generation ---

def sample_id(profile: str, index: int) -> str:
    return f"{profile}-{index:06d}"


def validation_indices(master_seed: int, n_samples: int) -> np.ndarray:
    """Exactly round(VALIDATION_FRACTION * n) indices, drawn from the split stream."""
    n_val = int(round(settings.VALIDATION_FRACTION * n_samples))
    rng = np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(STREAM_TAGS["split"],)))
    return np.sort(rng.permutation(n_samples)[:n_val])


def _generate_one(config: RunConfig, index: int, corpus: List[Path], split: str) -> ManifestRecord:
    profile = get_profile(config.profile)
    noise_cfg = config.noise or profile.noise
    scene = sample_scene(config.mode, profile, config.seed, index, config.ablate, config.source_patterns)

    speech_rng = stream(config.seed, index, "speech")
    path = corpus[int(speech_rng.integers(len(corpus)))]
    dry = load_dry_speech(path, settings.SAMPLE_RATE)
    sample = render_sample(
        scene,
        dry,
        noise_cfg,
        rng=speech_rng,
        noise_rng=stream(config.seed, index, "noise"),
        max_order=config.max_order,
    )

    sid = sample_id(profile.name, index)
    wav = f"audio/{sid}.wav"
    write_wav(config.out_dir / wav, sample.audio, sample.fs)
    write_scene(scene, config.out_dir / "scenes" / f"{sid}.json")
    return ManifestRecord(
        id=sid,
        wav=wav,
        fs=sample.fs,
        doa_true=sample.doa_true,
        snr=sample.snr,
        mode=config.mode,
        scene_digest=sample.scene_digest,
        seed=config.seed,
        aperture_m=profile.aperture,
        split=split,
    )


def _run_outputs(out_dir: Path, ids: List[str], manifest_path: Path) -> List[Path]:
    """Every path a run may write, folders last."""
    files = [out_dir / "audio" / f"{sid}.wav" for sid in ids]
    files += [out_dir / "scenes" / f"{sid}.json" for sid in ids]
    return files + [manifest_path, out_dir / "audio", out_dir / "scenes", out_dir]


def _cleanup(outputs: List[Path], existing: Set[Path]) -> None:
    """Remove what this run created; anything present before the run stays."""
    for path in outputs:
        if path in existing:
            continue
        if path.is_dir():
            if not any(path.iterdir()):
                shutil.rmtree(path)
        else:
            path.unlink(missing_ok=True)


def generate_dataset(config: RunConfig, provenance: Optional[Dict[str, str]] = None, progress: bool = True) -> Path:
    """
    Write ``config.n_samples`` samples and ``manifest.tsv`` under ``config.out_dir``.

    Samples are rendered in parallel; the manifest is assembled in index
    order. Any failure removes what this run wrote and re-raises.
    """
    profile = get_profile(config.profile)
    corpus = load_speech_corpus(config.speech_dir, min_seconds=settings.SAMPLE_SECONDS)
    out_dir = Path(config.out_dir)
    manifest_path = out_dir / "manifest.tsv"
    ids = [sample_id(profile.name, i) for i in range(config.n_samples)]
    validation = set(validation_indices(config.seed, config.n_samples).tolist())
    splits = ["validation" if i in validation else "train" for i in range(config.n_samples)]
    outputs = _run_outputs(out_dir, ids, manifest_path)
    existing = {path for path in outputs if path.exists()}

    logger.info(
        f"Generating {config.n_samples} {config.mode} samples for profile {profile.name} "
        f"(seed {config.seed}, {config.workers} worker(s))"
    )
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        jobs = (delayed(_generate_one)(config, i, corpus, splits[i]) for i in range(config.n_samples))
        records = list(tqdm(
            Parallel(n_jobs=config.workers, return_as="generator")(jobs),
            total=config.n_samples,
            desc="gen",
            disable=not progress,
        ))
        header = dict(provenance or {})
        header.update(config.provenance(profile.noise))
        write_manifest(Manifest(header=header, records=records), manifest_path)
    except OSError as e:
        _cleanup(outputs, existing)
        raise DatasetIOError(f"dataset generation failed: {e}")
    except Exception:
        _cleanup(outputs, existing)
        raise

    logger.info(f"Wrote {len(records)} samples and {manifest_path}")
    return manifest_path
