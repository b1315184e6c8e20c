import time

import numpy as np
import psutil
import pytest
from scipy.signal import butter, sosfilt

from app.config import settings
from app.exceptions import RequestTooLongError
from app.models import AbsorptionProfile, ArrayGeometry, Orientation, PatternSpec, Rir, RirFailure, Shoebox, SurfaceSet, Vec3
from app.services import ism_engine
from app.services.directivity import evaluate, resolve_pattern
from app.services.geometry import enumerate_images, image_count
from app.services.ism_engine import (
    accumulate,
    batch_rirs,
    image_contributions,
    image_table,
    rir_length,
    synthesize_rir,
    transfer_function,
)
from app.services.materials import air_coefficients, compound_reflection, eyring_t60

from tests.conftest import make_request

C = settings.SPEED_OF_SOUND

SINGLE_MIC = ArrayGeometry(positions=[Vec3(x=0.0, y=0.0, z=0.0)], patterns=[PatternSpec()], orientations=[Orientation.identity()])

SURFACES = SurfaceSet.from_list([
    AbsorptionProfile(alphas=(0.1, 0.2, 0.35, 0.5, 0.6, 0.7)),
    AbsorptionProfile.flat(0.2),
    AbsorptionProfile(alphas=(0.05, 0.05, 0.1, 0.1, 0.2, 0.2)),
    AbsorptionProfile.flat(0.5),
    AbsorptionProfile(alphas=(0.3, 0.3, 0.3, 0.4, 0.4, 0.4)),
    AbsorptionProfile(alphas=(0.6, 0.7, 0.8, 0.8, 0.9, 0.9)),
])


def oracle_transfer_function(req, n_fft):
    """Scalar per-image sum with every factor evaluated directly."""
    freqs = np.fft.rfftfreq(n_fft, d=1.0 / req.fs)
    air = air_coefficients(freqs) if req.air_absorption else np.zeros_like(freqs)
    naive = req.mode == "naive"
    source_pattern = resolve_pattern(PatternSpec() if naive else req.source_pattern)
    mics = req.mic_positions()
    orientations = req.mic_orientations()
    areas = req.room.surface_areas()
    d = np.sqrt(1.0 - np.mean(areas @ req.surfaces.alpha_matrix() / areas.sum()))

    out = np.zeros((len(mics), freqs.size), dtype=complex)
    for image in enumerate_images(req.room, req.source_position, req.max_order):
        p = image.position.as_array()
        if naive:
            reflection = d ** image.order
        else:
            reflection = compound_reflection(image, req.surfaces, n_fft, req.fs)
        for m, mic in enumerate(mics):
            reference = req.array_center.as_array() if req.array.mode == "array_centered" else mic
            delta = p - reference
            r = np.linalg.norm(delta)
            arrival = delta / r
            departure = -arrival * np.where(np.array(image.mirrored_axes), -1.0, 1.0)
            g_src = evaluate(source_pattern, req.source_orientation, departure, freqs)[0]
            mic_pattern = resolve_pattern(PatternSpec() if naive else req.array.patterns[m])
            g_mic = evaluate(mic_pattern, orientations[m], arrival, freqs)[0]
            out[m] += np.exp(-2j * np.pi * freqs * r / C) / r * np.exp(-air * r / 2) * reflection * g_src * g_mic
    out[:, 0] = out[:, 0].real
    out[:, -1] = out[:, -1].real
    return out


def psinc(x, n):
    """Periodic sinc sin(pi x) / (n tan(pi x / n)) for even n."""
    x = np.asarray(x, dtype=float)
    return np.sin(np.pi * x) / (n * np.tan(np.pi * x / n))


def oracle_time_domain(req, n):
    """Naive-mode RIR as a sum of periodic sincs, no air absorption."""
    areas = req.room.surface_areas()
    d = np.sqrt(1.0 - np.mean(areas @ req.surfaces.alpha_matrix() / areas.sum()))
    t = np.arange(n)
    out = np.zeros((req.array.n_mics, n))
    for image in enumerate_images(req.room, req.source_position, req.max_order):
        for m, mic in enumerate(req.mic_positions()):
            r = np.linalg.norm(image.position.as_array() - mic)
            delay = req.fs * r / C
            out[m] += d ** image.order / r * psinc(t - delay, n)
    return out


def relative_error(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


@pytest.mark.parametrize("seed", range(5))
def test_transfer_function_matches_oracle_advanced(room, seed):
    rng = np.random.default_rng(seed)
    source = rng.uniform(0.5, room.dims.as_array() - 0.5)
    center = rng.uniform(0.5, room.dims.as_array() - 0.5)
    req = make_request(
        room,
        source=source,
        center=center,
        max_order=2,
        mode="advanced",
        surfaces=SURFACES,
        source_pattern=PatternSpec(kind="builtin", name="talker"),
        source_orientation=Orientation.horizontal(rng.uniform(0, 2 * np.pi)),
        array=ArrayGeometry.pair(0.104, PatternSpec(kind="cardioid", a=0.6)),
    )
    assert relative_error(transfer_function(req, 512), oracle_transfer_function(req, 512)) < 1e-9


@pytest.mark.parametrize("seed", range(5))
def test_transfer_function_matches_oracle_naive(room, seed):
    rng = np.random.default_rng(100 + seed)
    req = make_request(
        room,
        source=rng.uniform(0.5, room.dims.as_array() - 0.5),
        center=rng.uniform(0.5, room.dims.as_array() - 0.5),
        max_order=2,
        alpha=float(rng.uniform(0.1, 0.6)),
    )
    assert relative_error(transfer_function(req, 512), oracle_transfer_function(req, 512)) < 1e-9


def test_transfer_function_matches_oracle_array_centered(room):
    array = ArrayGeometry.pair(
        0.068,
        patterns=[PatternSpec(kind="builtin", name="baffled_pair_mic1"), PatternSpec(kind="builtin", name="baffled_pair_mic2")],
        mode="array_centered",
    )
    req = make_request(room, max_order=1, mode="advanced", surfaces=SURFACES, array=array)
    assert relative_error(transfer_function(req, 1024), oracle_transfer_function(req, 1024)) < 1e-9


@pytest.mark.parametrize("seed", range(5))
def test_rir_matches_periodic_sinc_oracle(room, seed):
    rng = np.random.default_rng(200 + seed)
    req = make_request(
        room,
        source=rng.uniform(0.5, room.dims.as_array() - 0.5),
        center=rng.uniform(0.5, room.dims.as_array() - 0.5),
        max_order=int(rng.integers(0, 3)),
        air_absorption=False,
    )
    n = 4096
    rir = synthesize_rir(req, n)
    assert relative_error(rir.data, oracle_time_domain(req, n)) < 10 ** (-50 / 20)


@pytest.mark.parametrize("seed", range(10))
def test_direct_path_arrival_and_gain(room, seed):
    rng = np.random.default_rng(300 + seed)
    req = make_request(
        room,
        source=rng.uniform(0.5, room.dims.as_array() - 0.5),
        center=rng.uniform(0.5, room.dims.as_array() - 0.5),
        max_order=0,
        air_absorption=False,
    )
    rir = synthesize_rir(req, 2048)
    for m, mic in enumerate(req.mic_positions()):
        r = np.linalg.norm(req.source_position.as_array() - mic)
        h = rir.data[m]
        assert abs(int(np.argmax(np.abs(h))) - req.fs * r / C) <= 1.0
        # DC gain of a single delayed impulse is 1/r
        assert h.sum() == pytest.approx(1.0 / r, rel=1e-9)
        nearest = int(round(req.fs * r / C))
        assert h[nearest] == pytest.approx(psinc(nearest - req.fs * r / C, 2048) / r, rel=0.01)


def test_advanced_reduces_to_naive_for_flat_omni(room):
    for seed in range(5):
        rng = np.random.default_rng(400 + seed)
        kwargs = dict(
            source=rng.uniform(0.5, room.dims.as_array() - 0.5),
            center=rng.uniform(0.5, room.dims.as_array() - 0.5),
            max_order=3,
            alpha=float(rng.uniform(0.1, 0.5)),
        )
        naive = synthesize_rir(make_request(room, mode="naive", **kwargs), 8192).data
        advanced = synthesize_rir(make_request(room, mode="advanced", **kwargs), 8192).data
        assert relative_error(advanced, naive) < 10 ** (-60 / 20)


def test_contributions_sum_to_transfer_function(room):
    req = make_request(room, max_order=2, mode="advanced", surfaces=SURFACES,
                       source_pattern=PatternSpec(kind="builtin", name="loudspeaker_large"))
    pairs = list(image_contributions(req, 512))
    assert len(pairs) == len(enumerate_images(req.room, req.source_position, 2))
    total = accumulate([spectrum for _, spectrum in pairs])
    assert relative_error(total, transfer_function(req, 512)) < 1e-9


def test_contributions_resynthesize_rir(room):
    req = make_request(room, max_order=2, air_absorption=False)
    n = rir_length(req)
    total = accumulate([spectrum for _, spectrum in image_contributions(req, n)])
    resynthesized = np.fft.irfft(total, n=n, axis=-1)
    assert np.max(np.abs(resynthesized - synthesize_rir(req).data)) < 1e-9


def test_image_table_rows(room):
    req = make_request(room, max_order=2, mode="advanced", surfaces=SURFACES)
    table = image_table(req, 1024)
    assert len(table) == sum(image_count(o) for o in range(3))
    assert list(table["k"]) == list(range(len(table)))
    direct = table.iloc[0]
    assert direct["order"] == 0
    assert direct["r_m"] == pytest.approx(np.linalg.norm(req.source_position.as_array() - req.array_center.as_array()))
    assert direct["d_1000"] == pytest.approx(1.0)
    assert np.all(table.filter(like="d_").to_numpy() <= 1.0 + 1e-12)


def test_image_table_naive_magnitudes(room):
    req = make_request(room, max_order=2, alpha=0.36)
    table = image_table(req, 1024)
    assert np.allclose(table["d_500"], 0.8 ** table["order"])


def test_array_centered_omni_channels_identical(room):
    array = ArrayGeometry.pair(0.1, mode="array_centered")
    rir = synthesize_rir(make_request(room, array=array, max_order=2), 4096)
    assert np.array_equal(rir.data[0], rir.data[1])


def test_transfer_function_matches_oracle_measured_microphones(room):
    array = ArrayGeometry.pair(
        0.068,
        patterns=[PatternSpec(kind="builtin", name="baffled_pair_mic1"), PatternSpec(kind="builtin", name="baffled_pair_mic2")],
    )
    req = make_request(
        room,
        max_order=2,
        mode="advanced",
        surfaces=SURFACES,
        array=array,
        array_orientation=Orientation.horizontal(0.7),
        source_pattern=PatternSpec(kind="builtin", name="loudspeaker_small"),
    )
    assert relative_error(transfer_function(req, 1024), oracle_transfer_function(req, 1024)) < 1e-9


@pytest.mark.parametrize("mode", ["naive", "advanced"])
@pytest.mark.parametrize("air", [False, True])
def test_chunk_size_does_not_change_the_sum(room, monkeypatch, mode, air):
    req = make_request(room, max_order=3, mode=mode, surfaces=SURFACES, air_absorption=air,
                       source_pattern=PatternSpec(kind="builtin", name="talker"))
    whole = transfer_function(req, 2048)
    monkeypatch.setattr(ism_engine, "settings", settings.model_copy(update={"IMAGE_CHUNK_ELEMENTS": 3000}))
    assert relative_error(transfer_function(req, 2048), whole) < 1e-12


@pytest.mark.parametrize("mode", ["naive", "advanced"])
def test_swapping_source_and_microphone_is_reciprocal(room, mode):
    rng = np.random.default_rng(17)
    for _ in range(3):
        a = rng.uniform(0.5, room.dims.as_array() - 0.5)
        b = rng.uniform(0.5, room.dims.as_array() - 0.5)
        forward = make_request(room, source=a, center=b, max_order=4, mode=mode, surfaces=SURFACES, array=SINGLE_MIC)
        backward = make_request(room, source=b, center=a, max_order=4, mode=mode, surfaces=SURFACES, array=SINGLE_MIC)
        h_ab = synthesize_rir(forward, 8192).data
        h_ba = synthesize_rir(backward, 8192).data
        assert relative_error(h_ba, h_ab) < 10 ** (-80 / 20)


def test_rir_energy_equals_spectrum_energy(room):
    req = make_request(room, max_order=3, mode="advanced", surfaces=SURFACES,
                       source_pattern=PatternSpec(kind="builtin", name="talker"))
    n = 4096
    spectra = transfer_function(req, n)
    h = synthesize_rir(req, n).data
    weights = np.full(spectra.shape[-1], 2.0)
    weights[[0, -1]] = 1.0
    spectral = np.sum(weights * np.abs(spectra) ** 2, axis=-1) / n
    assert np.sum(h ** 2, axis=-1) == pytest.approx(spectral, rel=1e-9)


def test_energy_does_not_grow_with_absorption(room):
    energies = []
    for alpha in np.linspace(0.05, 0.95, 10):
        h = synthesize_rir(make_request(room, alpha=float(alpha), max_order=4), 8192).data
        energies.append(float(np.sum(h ** 2)))
    assert np.all(np.diff(energies) <= 0.0)


def test_half_sample_delay_splits_into_two_equal_taps(room):
    fs = 16000
    r = 80.5 * C / fs
    center = np.array([1.5, 2.5, 1.5])
    req = make_request(room, source=center + [r, 0.0, 0.0], center=center, max_order=0,
                       fs=fs, air_absorption=False, array=SINGLE_MIC)
    h = synthesize_rir(req, 1024).data[0]
    assert h[80] == pytest.approx(h[81], rel=1e-9)
    assert set(np.argsort(np.abs(h))[-2:]) == {80, 81}
    assert h[80] == pytest.approx(psinc(0.5, 1024) / r, rel=1e-9)


def test_rir_length_rule(room):
    req = make_request(room, max_order=3, alpha=0.3)
    n = rir_length(req)
    assert n & (n - 1) == 0
    mics = req.mic_positions()
    max_r = max(
        np.linalg.norm(i.position.as_array() - mic)
        for i in enumerate_images(room, req.source_position, 3)
        for mic in mics
    )
    needed = req.fs * (max_r / C + float(np.max(eyring_t60(room, req.surfaces))) + settings.RIR_GUARD_SECONDS)
    assert needed <= n < 2 * needed


def test_rir_is_deterministic(room):
    req = make_request(room, max_order=3, mode="advanced", surfaces=SURFACES, seed=5)
    first, second = synthesize_rir(req), synthesize_rir(req)
    assert np.array_equal(first.data, second.data)
    assert first.request_digest == req.digest()
    assert first.seed == 5


def too_long_request():
    big = Shoebox(dims=Vec3(x=10.0, y=10.0, z=4.5))
    return make_request(big, source=(2, 2, 2), center=(6, 6, 2), alpha=0.01, max_order=1, fs=384000)


def test_request_too_long():
    with pytest.raises(RequestTooLongError):
        rir_length(too_long_request())


def test_batch_reports_failures_in_place(room):
    good = make_request(room, max_order=1)
    results = batch_rirs([good, too_long_request(), good], workers=1)
    assert isinstance(results[0], Rir)
    assert isinstance(results[1], RirFailure) and results[1].index == 1
    assert np.array_equal(results[0].data, results[2].data)


def test_batch_parallel_equals_serial(room):
    requests = [make_request(room, max_order=2, alpha=a) for a in (0.2, 0.3, 0.4)]
    serial = batch_rirs(requests, workers=1)
    parallel = batch_rirs(requests, workers=2)
    for s, p in zip(serial, parallel):
        assert np.array_equal(s.data, p.data)


def test_batch_empty():
    assert batch_rirs([], workers=2) == []


def schroeder_t60(h, fs):
    """T60 from the -5..-25 dB span of the Schroeder decay, extrapolated to 60 dB."""
    energy = np.cumsum(h[::-1] ** 2)[::-1]
    decay = 10 * np.log10(energy / energy[0])
    t = np.arange(h.size) / fs
    span = (decay <= -5) & (decay >= -25)
    slope, _ = np.polyfit(t[span], decay[span], 1)
    return -60.0 / slope


def octave_band(h, fs, center=1000.0):
    """Fourth-order Butterworth octave band around ``center``."""
    sos = butter(4, [center / np.sqrt(2.0), center * np.sqrt(2.0)], btype="bandpass", fs=fs, output="sos")
    return sosfilt(sos, h)


@pytest.mark.slow
def test_schroeder_t60_follows_eyring():
    rng = np.random.default_rng(42)
    hits = 0
    for _ in range(20):
        dims = rng.uniform([3.5, 3.5, 2.5], [5.5, 5.5, 3.5])
        room = Shoebox(dims=Vec3.from_array(dims))
        alpha = float(rng.uniform(0.1, 0.5))
        # images past this order carry less than -35 dB of the energy
        order = int(np.ceil(-3.5 * np.log(10.0) / np.log1p(-alpha)))
        req = make_request(
            room,
            source=rng.uniform(0.5, dims - 0.5),
            center=rng.uniform(0.5, dims - 0.5),
            alpha=alpha,
            max_order=order,
            fs=8000,
            air_absorption=False,
            array=SINGLE_MIC,
        )
        # the all-positive reflections pile up at DC; measure in the 1 kHz octave
        h = octave_band(synthesize_rir(req).data[0], 8000)
        predicted = float(eyring_t60(room, req.surfaces)[0])
        if abs(schroeder_t60(h, 8000) - predicted) <= 0.2 * predicted:
            hits += 1
    assert hits >= 18



@pytest.mark.slow
def test_energy_converges_with_order(room):
    req = make_request(room, alpha=0.3, max_order=20, mode="advanced", surfaces=SurfaceSet.uniform(0.3))
    n = rir_length(req)
    full = synthesize_rir(req, n).data
    truncated = synthesize_rir(req.model_copy(update={"max_order": 17}), n).data
    assert np.sum((full - truncated) ** 2) / np.sum(full ** 2) < 0.01


@pytest.mark.slow
def test_order_17_batch_runtime():
    rng = np.random.default_rng(9)
    requests = []
    for _ in range(200):
        dims = rng.uniform([3.0, 3.0, 2.0], [10.0, 10.0, 4.5])
        requests.append(make_request(
            Shoebox(dims=Vec3.from_array(dims)),
            source=rng.uniform(0.5, dims - 0.5),
            center=rng.uniform(0.5, dims - 0.5),
            alpha=float(rng.uniform(0.2, 0.5)),
            max_order=17,
        ))
    start = time.perf_counter()
    results = batch_rirs(requests, workers=1)
    assert all(isinstance(r, Rir) for r in results)
    assert time.perf_counter() - start < 300


@pytest.mark.slow
@pytest.mark.skipif((psutil.cpu_count(logical=False) or 1) < 8, reason="needs 8 physical cores")
def test_eight_workers_scale_at_least_four_times():
    rng = np.random.default_rng(13)
    requests = []
    for _ in range(64):
        dims = rng.uniform([3.0, 3.0, 2.0], [10.0, 10.0, 4.5])
        requests.append(make_request(
            Shoebox(dims=Vec3.from_array(dims)),
            source=rng.uniform(0.5, dims - 0.5),
            center=rng.uniform(0.5, dims - 0.5),
            alpha=float(rng.uniform(0.2, 0.5)),
            max_order=17,
        ))
    batch_rirs(requests[:8], workers=8)

    start = time.perf_counter()
    serial = batch_rirs(requests, workers=1)
    serial_seconds = time.perf_counter() - start
    start = time.perf_counter()
    parallel = batch_rirs(requests, workers=8)
    parallel_seconds = time.perf_counter() - start

    assert all(np.array_equal(s.data, p.data) for s, p in zip(serial, parallel))
    assert serial_seconds / parallel_seconds >= 4.0
