"""
ISM engine for ISMForge.

This module sums the image-source transfer function in the frequency domain
and turns it into multichannel RIRs. Each image contributes

    exp(-j 2 pi f r/c) / r * air(f, r) * reflection(f) * g_src(f) * g_mic(f)

where the delay is a physical delay of r/c seconds evaluated at the bin
frequencies f = k * fs / n_fft. Naive mode uses a flat reflection
coefficient per order and omnidirectional patterns; advanced mode uses
per-surface minimum-phase spectra and the requested directivities.

The sum over images is a matrix product. Frequency-independent factors
(spreading, flat reflection, cardioid and half-sphere gains) become one
complex weight per image. Measured-grid microphone gains are reduced at the
grid frequencies and blended per bin once at the end. When nothing else
depends on frequency, the block factorisation of the delay phasor lets the
sum run without forming the per-image spectra at all.
"""

import logging
import math
from typing import Iterator, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from app.config import settings
from app.exceptions import ISMForgeError, RequestTooLongError
from app.models.directivity import DirectivityPattern, Orientation
from app.models.geometry import ImageSource, Vec3
from app.models.rir import Rir, RirFailure, RirRequest
from app.services.directivity import OMNI, evaluate, frequency_weights, resolve_pattern
from app.services.geometry import ImageLattice, axis_reflection_counts, distances_and_directions, image_lattice
from app.services.materials import air_coefficients, band_to_dft, eyring_t60, log_reflection_spectrum, mean_absorption

logger = logging.getLogger(__name__)

# (bins, lo grid index, hi grid index, per-bin weights) over a run of bins
Segment = Tuple[slice, int, int, np.ndarray]


class _Receiver(NamedTuple):
    position: np.ndarray
    pattern: DirectivityPattern
    orientation: Orientation
    grid_weights: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]]


class _ChunkGeometry(NamedTuple):
    r: np.ndarray
    arrival: np.ndarray
    weights: np.ndarray
    source_grid: Optional[np.ndarray]


class _EngineContext:
    """Everything shared by the image chunks of one request."""

    def __init__(self, req: RirRequest, n_fft: int):
        self.req = req
        self.n_fft = n_fft
        self.n_bins = n_fft // 2 + 1
        self.c = settings.SPEED_OF_SOUND
        self.lattice: ImageLattice = image_lattice(req.room, req.source_position, req.max_order)
        self.naive = req.mode == "naive"

        # Block factorisation of the delay phasor: bin = coarse * B + fine.
        # Work arrays run over n_pad >= n_bins bins; the tail is dropped.
        self.block = settings.PHASOR_BLOCK
        self.n_coarse = -(-self.n_bins // self.block)
        self.n_pad = self.n_coarse * self.block
        self.fine_bins = np.arange(self.block)
        self.coarse_bins = np.arange(self.n_coarse) * self.block
        self.freqs = np.arange(self.n_pad) * (req.fs / n_fft)

        self.air = air_coefficients(self.freqs) / 2.0 if req.air_absorption else None

        if self.naive:
            self.flat_reflection = _naive_reflection(req)
            self.axis_tables = None
        else:
            self.flat_reflection = None
            pad = ((0, 0), (0, self.n_pad - self.n_bins))
            self.axis_tables = [np.pad(t, pad, mode="edge") for t in _axis_reflection_tables(req, n_fft)]

        self.source_pattern = OMNI if self.naive else resolve_pattern(req.source_pattern)
        self.source_orientation = req.source_orientation
        self.source_segments = (
            _segments(self.source_pattern, self.freqs) if self.source_pattern.kind == "measured_grid" else None
        )

        mic_positions = req.mic_positions()
        orientations = req.mic_orientations()
        self.receivers: List[_Receiver] = []
        for m, spec in enumerate(req.array.patterns):
            pattern = OMNI if self.naive else resolve_pattern(spec)
            weights = None
            if pattern.kind == "measured_grid":
                weights = frequency_weights(np.asarray(pattern.frequencies, dtype=float), self.freqs)
            self.receivers.append(_Receiver(mic_positions[m], pattern, orientations[m], weights))
        self.array_centered = req.array.mode == "array_centered"
        self.center = req.array_center.as_array()

        self.phasor_only = self.air is None and self.axis_tables is None and self.source_segments is None

    @property
    def n_images(self) -> int:
        return len(self.lattice.orders)

    def groups(self) -> List[Tuple[np.ndarray, List[int]]]:
        """Reference points with the receivers measured from them."""
        if self.array_centered:
            return [(self.center, list(range(len(self.receivers))))]
        return [(receiver.position, [m]) for m, receiver in enumerate(self.receivers)]


def _naive_reflection(req: RirRequest) -> float:
    """Flat coefficient sqrt(1 - mean alpha), area weighted and averaged over bands."""
    alpha = float(np.mean(mean_absorption(req.room, req.surfaces)))
    return math.sqrt(1.0 - alpha)


def _axis_reflection_tables(req: RirRequest, n_fft: int) -> List[np.ndarray]:
    """Per-axis reflection spectra indexed by lattice index q + max_order."""
    log_spectra = np.stack([log_reflection_spectrum(band_to_dft(p, n_fft, req.fs)) for p in req.surfaces.profiles()])
    q = np.arange(-req.max_order, req.max_order + 1)
    tables = []
    for axis in range(3):
        near, far = axis_reflection_counts(q)
        exponent = near[:, None] * log_spectra[2 * axis][None, :] + far[:, None] * log_spectra[2 * axis + 1][None, :]
        tables.append(np.exp(exponent))
    return tables


def _segments(pattern: DirectivityPattern, freqs: np.ndarray) -> List[Segment]:
    """Runs of bins that blend the same pair of grid frequencies."""
    lo, hi, w = frequency_weights(np.asarray(pattern.frequencies, dtype=float), freqs)
    edges = np.flatnonzero((np.diff(lo) != 0) | (np.diff(hi) != 0)) + 1
    starts = np.concatenate([[0], edges])
    stops = np.concatenate([edges, [freqs.size]])
    return [(slice(int(s), int(e)), int(lo[s]), int(hi[s]), w[s:e]) for s, e in zip(starts, stops)]


def _phasor_factors(ctx: _EngineContext, r: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Coarse (K, n_coarse) and fine (K, B) factors of exp(-j 2 pi f r / c)."""
    step = (-2j * np.pi * ctx.req.fs / ctx.n_fft) * (r / ctx.c)
    coarse = np.exp(step[:, None] * ctx.coarse_bins[None, :])
    fine = np.exp(step[:, None] * ctx.fine_bins[None, :])
    return coarse, fine


def _delay_phasor(ctx: _EngineContext, r: np.ndarray) -> np.ndarray:
    """exp(-j 2 pi f r / c) on the padded bin grid, shape (K, n_pad)."""
    coarse, fine = _phasor_factors(ctx, r)
    return (coarse[:, :, None] * fine[:, None, :]).reshape(len(r), ctx.n_pad)


def _scalar_gain(pattern: DirectivityPattern, orientation: Orientation, directions: np.ndarray) -> Optional[np.ndarray]:
    """(K,) gains of frequency-independent patterns; None for omni and measured grids."""
    if pattern.kind in ("cardioid", "half_sphere"):
        return evaluate(pattern, orientation, directions, 0.0)[:, 0]
    return None


def _grid_gain(pattern: DirectivityPattern, orientation: Orientation, directions: np.ndarray) -> Optional[np.ndarray]:
    """(K, F) gains of a measured grid at its own frequencies."""
    if pattern.kind != "measured_grid":
        return None
    return evaluate(pattern, orientation, directions, pattern.frequencies)


def _blend(terms: np.ndarray, gains: np.ndarray, segments: List[Segment]) -> None:
    """Multiply (K, n) terms in place by grid gains blended linearly in frequency."""
    for sl, lo, hi, w in segments:
        low = gains[:, lo, None]
        terms[:, sl] *= low + (gains[:, hi, None] - low) * w[None, :]


def _reflection(ctx: _EngineContext, sl: slice) -> Optional[np.ndarray]:
    """Product of the three per-axis reflection spectra, shape (K, n_pad)."""
    if ctx.axis_tables is None:
        return None
    idx = ctx.lattice.indices[sl] + ctx.req.max_order
    product = np.take(ctx.axis_tables[0], idx[:, 0], axis=0)
    buffer = np.empty_like(product)
    for axis in (1, 2):
        np.take(ctx.axis_tables[axis], idx[:, axis], axis=0, out=buffer)
        product *= buffer
    return product


def _geometry(ctx: _EngineContext, sl: slice, reference: np.ndarray) -> _ChunkGeometry:
    """Distances, arrival directions and frequency-independent weights of a chunk."""
    r, arrival = distances_and_directions(ctx.lattice.positions[sl], reference)
    # Departure direction at the real source: mirrored axes flip sign
    mirrored = (ctx.lattice.indices[sl] % 2) != 0
    departure = np.where(mirrored, arrival, -arrival)

    weights = (1.0 / r).astype(complex)
    if ctx.naive:
        weights *= ctx.flat_reflection ** ctx.lattice.orders[sl]
    g_src = _scalar_gain(ctx.source_pattern, ctx.source_orientation, departure)
    if g_src is not None:
        weights *= g_src
    return _ChunkGeometry(r, arrival, weights, _grid_gain(ctx.source_pattern, ctx.source_orientation, departure))


def _spectral_terms(ctx: _EngineContext, geo: _ChunkGeometry, reflection: Optional[np.ndarray]) -> np.ndarray:
    """Frequency-dependent factors of every image in a chunk, shape (K, n_pad)."""
    terms = _delay_phasor(ctx, geo.r)
    if ctx.air is not None:
        air = np.multiply.outer(geo.r, -ctx.air)
        np.exp(air, out=air)
        terms *= air
    if reflection is not None:
        terms *= reflection
    if geo.source_grid is not None:
        _blend(terms, geo.source_grid, ctx.source_segments)
    return terms


def _mic_weights(receiver: _Receiver, geo: _ChunkGeometry) -> np.ndarray:
    """(K,) image weights, or (K, F) per grid frequency for measured microphones."""
    gain = _scalar_gain(receiver.pattern, receiver.orientation, geo.arrival)
    if gain is not None:
        return geo.weights * gain
    grid = _grid_gain(receiver.pattern, receiver.orientation, geo.arrival)
    if grid is not None:
        return geo.weights[:, None] * grid
    return geo.weights


def _reduce_phasor(ctx: _EngineContext, r: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """weights.T @ delay phasor, computed block by block without the phasor itself."""
    coarse, fine = _phasor_factors(ctx, r)
    if weights.ndim == 1:
        return ((weights[:, None] * coarse).T @ fine).ravel()
    return np.stack([((weights[:, j, None] * coarse).T @ fine).ravel() for j in range(weights.shape[1])])


def _collapse(receiver: _Receiver, total: np.ndarray) -> np.ndarray:
    """Blend sums kept per grid frequency into one value per bin."""
    if total.ndim == 1:
        return total
    lo, hi, w = receiver.grid_weights
    bins = np.arange(total.shape[1])
    return (1.0 - w) * total[lo, bins] + w * total[hi, bins]


def _chunk_terms(ctx: _EngineContext, sl: slice, receiver: _Receiver) -> np.ndarray:
    """Per-image spectra of one receiver for the images in ``sl``, shape (K, n_bins)."""
    reference = ctx.center if ctx.array_centered else receiver.position
    geo = _geometry(ctx, sl, reference)
    terms = _spectral_terms(ctx, geo, _reflection(ctx, sl))
    weights = _mic_weights(receiver, geo)
    if weights.ndim == 1:
        terms *= weights[:, None]
    else:
        lo, hi, w = receiver.grid_weights
        terms *= (1.0 - w)[None, :] * weights[:, lo] + w[None, :] * weights[:, hi]
    return terms[:, :ctx.n_bins]


def _chunks(ctx: _EngineContext, width: int) -> Iterator[slice]:
    """Image slices holding about IMAGE_CHUNK_ELEMENTS values of ``width`` each."""
    step = max(1, settings.IMAGE_CHUNK_ELEMENTS // width)
    for start in range(0, ctx.n_images, step):
        yield slice(start, min(start + step, ctx.n_images))


def _finalize(spectra: np.ndarray) -> np.ndarray:
    spectra[..., 0] = spectra[..., 0].real
    spectra[..., -1] = spectra[..., -1].real
    return spectra


def transfer_function(req: RirRequest, n_fft: int) -> np.ndarray:
    """
    Multichannel transfer function, shape (M, n_fft/2+1).

    DC and Nyquist bins are real.
    """
    ctx = _EngineContext(req, n_fft)
    sums: List[Optional[np.ndarray]] = [None] * len(ctx.receivers)
    width = ctx.n_coarse + ctx.block if ctx.phasor_only else ctx.n_pad
    for sl in _chunks(ctx, width):
        reflection = None if ctx.phasor_only else _reflection(ctx, sl)
        for reference, members in ctx.groups():
            geo = _geometry(ctx, sl, reference)
            terms = None if ctx.phasor_only else _spectral_terms(ctx, geo, reflection)
            for m in members:
                weights = _mic_weights(ctx.receivers[m], geo)
                part = _reduce_phasor(ctx, geo.r, weights) if ctx.phasor_only else weights.T @ terms
                if sums[m] is None:
                    sums[m] = part
                else:
                    sums[m] += part

    spectra = np.stack([_collapse(receiver, total)[:ctx.n_bins] for receiver, total in zip(ctx.receivers, sums)])
    logger.debug(f"Summed {ctx.n_images} images over {ctx.n_bins} bins for {len(ctx.receivers)} channels")
    return _finalize(spectra)


def accumulate(contributions: Sequence[np.ndarray]) -> np.ndarray:
    """Sum per-image spectra and make DC and Nyquist real."""
    total = np.sum(np.asarray(contributions, dtype=complex), axis=0)
    return _finalize(np.atleast_2d(total))


def image_contributions(req: RirRequest, n_fft: int) -> Iterator[Tuple[ImageSource, np.ndarray]]:
    """Yield each image with its (M, n_bins) spectrum contribution, in enumeration order."""
    ctx = _EngineContext(req, n_fft)
    lattice = ctx.lattice
    for sl in _chunks(ctx, ctx.n_pad):
        per_mic = [_chunk_terms(ctx, sl, receiver) for receiver in ctx.receivers]
        for i, k in enumerate(range(sl.start, sl.stop)):
            image = ImageSource(
                position=Vec3.from_array(lattice.positions[k]),
                order=int(lattice.orders[k]),
                reflection_counts=tuple(int(c) for c in lattice.counts[k]),
                lattice_index=tuple(int(q) for q in lattice.indices[k]),
            )
            yield image, np.stack([terms[i] for terms in per_mic])


def image_table(req: RirRequest, n_fft: int) -> pd.DataFrame:
    """
    One row per image: lattice index, order, distance and arrival direction
    at the array center, and reflection magnitude at each band center.
    """
    ctx = _EngineContext(req, n_fft)
    lattice = ctx.lattice
    r, directions = distances_and_directions(lattice.positions, ctx.center)
    centers = np.asarray(settings.BAND_CENTERS)
    band_bins = np.rint(centers * n_fft / req.fs).astype(int)

    if ctx.naive:
        magnitudes = ctx.flat_reflection ** lattice.orders[:, None].astype(float)
        magnitudes = np.broadcast_to(magnitudes, (len(r), centers.size))
    else:
        magnitudes = np.ones((len(r), centers.size))
        span = req.max_order
        for axis, table in enumerate(ctx.axis_tables):
            magnitudes = magnitudes * np.abs(table[lattice.indices[:, axis] + span][:, band_bins])

    frame = pd.DataFrame({
        "k": np.arange(len(r)),
        "order": lattice.orders,
        "qx": lattice.indices[:, 0],
        "qy": lattice.indices[:, 1],
        "qz": lattice.indices[:, 2],
        "r_m": r,
        "azimuth_deg": np.degrees(np.arctan2(directions[:, 1], directions[:, 0])),
        "elevation_deg": np.degrees(np.arcsin(np.clip(directions[:, 2], -1.0, 1.0))),
    })
    for j, fc in enumerate(centers):
        frame[f"d_{int(fc)}"] = magnitudes[:, j]
    return frame


def rir_length(req: RirRequest) -> int:
    """Power of two covering the farthest image delay, the Eyring T60 and the guard."""
    lattice = image_lattice(req.room, req.source_position, req.max_order)
    references = req.mic_positions() if req.array.mode == "per_microphone" else req.array_center.as_array()[None, :]
    max_r = max(float(np.max(np.linalg.norm(lattice.positions - ref[None, :], axis=1))) for ref in references)
    t60 = float(np.max(eyring_t60(req.room, req.surfaces)))
    seconds = max_r / settings.SPEED_OF_SOUND + t60 + settings.RIR_GUARD_SECONDS
    n = 1 << max(1, math.ceil(math.log2(max(2.0, req.fs * seconds))))
    if n > settings.RIR_MAX_SAMPLES:
        raise RequestTooLongError(f"RIR needs {n} samples, cap is {settings.RIR_MAX_SAMPLES}")
    return n


def synthesize_rir(req: RirRequest, n_fft: Optional[int] = None) -> Rir:
    """Inverse real DFT of the transfer function; length from rir_length unless given."""
    n = n_fft or rir_length(req)
    spectra = transfer_function(req, n)
    data = np.fft.irfft(spectra, n=n, axis=-1)
    return Rir(data=data, fs=req.fs, request_digest=req.digest(), seed=req.seed)


def _safe_synthesize(index: int, req: RirRequest) -> Union[Rir, RirFailure]:
    try:
        return synthesize_rir(req)
    except ISMForgeError as e:
        logger.error(f"RIR request {index} failed: {e.detail}")
        return RirFailure(index=index, detail=e.detail)


def batch_rirs(requests: List[RirRequest], workers: int = 1) -> List[Union[Rir, RirFailure]]:
    """Synthesize many RIRs; order follows the input and failures are reported in place."""
    if workers < 1:
        raise ValueError("workers must be >= 1")
    if not requests:
        return []
    logger.info(f"Synthesizing {len(requests)} RIRs with {workers} worker(s)")
    return Parallel(n_jobs=workers)(delayed(_safe_synthesize)(i, req) for i, req in enumerate(requests))
