import numpy as np
import pytest

from app.config import settings
from app.exceptions import OutOfRangeError, PreconditionError
from app.models import AbsorptionProfile, ImageSource, Shoebox, SurfaceSet, Vec3
from app.services.materials import (
    EYRING_CONSTANT,
    achievable_t60_range,
    air_attenuation,
    band_to_dft,
    clip_target_t60,
    compound_reflection,
    draw_surface,
    eyring_t60,
    half_cosine_interp,
    mean_absorption,
    mid_t60,
    minimum_phase,
    mixture_band_means,
    mixture_band_stds,
    sample_advanced_absorption,
    sample_naive_absorption,
    sample_naive_t60,
    surface_kind,
)

PROFILE = AbsorptionProfile(alphas=(0.1, 0.2, 0.35, 0.5, 0.6, 0.7))


def test_band_to_dft_hits_band_centers():
    # 16 kHz / 2048 puts every octave center exactly on a bin
    mag = band_to_dft(PROFILE, 2048, 16000)
    bins = [int(c * 2048 / 16000) for c in settings.BAND_CENTERS]
    assert mag[bins] == pytest.approx(np.sqrt(1.0 - PROFILE.as_array()), abs=1e-12)


def test_band_to_dft_flat_outside_bands():
    mag = band_to_dft(PROFILE, 2048, 16000)
    freqs = np.fft.rfftfreq(2048, d=1 / 16000)
    assert mag[freqs <= 125.0] == pytest.approx(np.sqrt(0.9))
    assert mag[freqs >= 4000.0] == pytest.approx(np.sqrt(0.3))


def test_band_to_dft_preconditions():
    with pytest.raises(PreconditionError):
        band_to_dft(PROFILE, 1000, 16000)
    with pytest.raises(PreconditionError):
        band_to_dft(PROFILE, 1024, 8000)


def test_half_cosine_is_monotone_between_centers():
    freqs = np.geomspace(100, 5000, 400)
    values = half_cosine_interp(settings.BAND_CENTERS, [1, 2, 3, 4, 5, 6], freqs)
    assert np.all(np.diff(values) >= -1e-12)


def test_half_cosine_midpoint_on_log_axis():
    value = half_cosine_interp([100.0, 400.0], [0.0, 1.0], np.array([200.0]))
    assert value[0] == pytest.approx(0.5)


def test_minimum_phase_keeps_magnitude():
    mag = band_to_dft(PROFILE, 1024, 16000)
    spectrum = minimum_phase(mag)
    assert np.abs(spectrum) == pytest.approx(mag, rel=1e-9)


def test_minimum_phase_is_front_loaded():
    mag = band_to_dft(PROFILE, 1024, 16000)
    h = np.fft.irfft(minimum_phase(mag), n=1024)
    energy = np.cumsum(h ** 2)
    assert energy[50] / energy[-1] > 0.99


def test_minimum_phase_flat_is_real_constant():
    spectrum = minimum_phase(np.full(513, 0.8))
    assert spectrum == pytest.approx(np.full(513, 0.8 + 0j), abs=1e-12)


def test_minimum_phase_floors_zero_magnitude():
    spectrum = minimum_phase(np.zeros(33))
    assert np.all(np.isfinite(spectrum))
    assert np.abs(spectrum) == pytest.approx(np.full(33, settings.MAGNITUDE_FLOOR), rel=1e-6)


def test_compound_reflection_is_product_of_powers():
    surfaces = SurfaceSet.from_list([
        PROFILE,
        AbsorptionProfile.flat(0.2),
        AbsorptionProfile(alphas=(0.05, 0.05, 0.1, 0.1, 0.2, 0.2)),
        AbsorptionProfile.flat(0.5),
        AbsorptionProfile(alphas=(0.3, 0.3, 0.3, 0.4, 0.4, 0.4)),
        AbsorptionProfile.flat(0.9),
    ])
    counts = (2, 1, 0, 1, 1, 0)
    image = ImageSource(position=Vec3(x=0, y=0, z=0), order=5, reflection_counts=counts, lattice_index=(3, 1, 1))
    expected = np.ones(513, dtype=complex)
    for profile, c in zip(surfaces.profiles(), counts):
        expected *= minimum_phase(band_to_dft(profile, 1024, 16000)) ** c
    assert compound_reflection(image, surfaces, 1024, 16000) == pytest.approx(expected, rel=1e-9)


def test_compound_reflection_order_zero_is_unity():
    image = ImageSource(position=Vec3(x=1, y=1, z=1), order=0, reflection_counts=(0,) * 6, lattice_index=(0, 0, 0))
    assert np.all(compound_reflection(image, SurfaceSet.uniform(0.5), 256, 16000) == 1.0)


def test_air_attenuation():
    freqs = np.array([125.0, 1000.0, 4000.0])
    assert air_attenuation(0.0, freqs) == pytest.approx(np.ones(3))
    gains = air_attenuation(10.0, freqs)
    assert np.all(np.diff(gains) < 0)
    assert gains[-1] == pytest.approx(np.exp(-0.012 * 10 / 2))
    with pytest.raises(PreconditionError):
        air_attenuation(-1.0, freqs)


def test_eyring_formula(room):
    alpha = 0.25
    t60 = eyring_t60(room, SurfaceSet.uniform(alpha))
    expected = EYRING_CONSTANT * room.volume / (-room.total_area * np.log(1 - alpha))
    assert t60 == pytest.approx(np.full(6, expected))
    assert mid_t60(room, SurfaceSet.uniform(alpha)) == pytest.approx(expected)


def test_eyring_full_absorption_is_zero(room):
    assert np.all(eyring_t60(room, SurfaceSet.uniform(1.0)) == 0.0)


def test_full_absorption_is_minimal_t60_in_any_room():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        dims = [rng.uniform(low, high) for low, high in settings.ROOM_RANGES]
        room = Shoebox(dims=Vec3(x=dims[0], y=dims[1], z=dims[2]))
        assert np.all(mean_absorption(room, SurfaceSet.uniform(1.0)) <= 1.0)
        t_min, t_max = achievable_t60_range(room)
        assert t_min == 0.0
        assert np.isfinite(t_max)
        target = clip_target_t60(rng.uniform(0.01, 3.0), room)
        assert 0.0 < target <= t_max
        assert sample_naive_absorption(target, room).is_flat_uniform


def test_targets_at_the_range_edge_round_trip(room):
    _, t_max = achievable_t60_range(room)
    surfaces = sample_naive_absorption(clip_target_t60(10.0 * t_max, room), room)
    assert surfaces.alpha_matrix()[0, 0] == settings.ALPHA_MIN


@pytest.mark.parametrize("target", [0.2, 0.45, 0.8])
def test_naive_absorption_hits_target(room, target):
    surfaces = sample_naive_absorption(target, room)
    assert surfaces.is_flat_uniform
    assert eyring_t60(room, surfaces) == pytest.approx(np.full(6, target), rel=1e-9)


def test_naive_absorption_out_of_range(room):
    t_min, t_max = achievable_t60_range(room)
    with pytest.raises(OutOfRangeError):
        sample_naive_absorption(t_max * 1.5, room)
    with pytest.raises(PreconditionError):
        sample_naive_absorption(0.0, room)
    assert t_min == 0.0


def test_naive_t60_draw_is_seeded_and_in_range(room):
    draws = [sample_naive_t60(room, seed) for seed in range(50)]
    low, high = settings.NAIVE_T60_RANGE
    assert all(low <= t <= high for t in draws)
    assert sample_naive_t60(room, 7) == sample_naive_t60(room, 7)


def test_advanced_absorption_is_seeded():
    assert sample_advanced_absorption(3) == sample_advanced_absorption(3)
    assert sample_advanced_absorption(3) != sample_advanced_absorption(4)


@pytest.mark.parametrize("kind", ["wall", "floor", "ceiling"])
def test_mixture_draws_match_analytic_moments(kind):
    rng = np.random.default_rng(11)
    draws = np.stack([draw_surface(kind, rng).as_array() for _ in range(3000)])
    assert np.all((draws >= 0.01) & (draws <= 0.99))
    standard_error = mixture_band_stds(kind) / np.sqrt(draws.shape[0])
    assert np.all(np.abs(draws.mean(axis=0) - mixture_band_means(kind)) < 5 * standard_error)


def test_mixture_means_rise_with_frequency():
    for kind in ("wall", "floor", "ceiling"):
        assert np.all(np.diff(mixture_band_means(kind)) > 0)


def test_surface_kinds():
    assert surface_kind("west") == "wall"
    assert surface_kind("floor") == "floor"
    assert surface_kind("ceiling") == "ceiling"


def test_advanced_mid_t60_population_overlaps_naive():
    rooms_rng = np.random.default_rng(5)
    naive, advanced = [], []
    for i in range(300):
        dims = [rooms_rng.uniform(lo, hi) for lo, hi in settings.ROOM_RANGES]
        room = Shoebox(dims=Vec3(x=dims[0], y=dims[1], z=dims[2]))
        naive.append(mid_t60(room, sample_naive_absorption(sample_naive_t60(room, 1000 + i), room)))
        advanced.append(mid_t60(room, sample_advanced_absorption(2000 + i)))
    # Both populations live in the same sub-second range
    assert 0.15 < np.median(naive) < 1.0
    assert 0.15 < np.median(advanced) < 1.0
