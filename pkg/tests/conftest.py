"""
Shared fixtures for the ISMForge test suite.
"""

import numpy as np
import pytest
import soundfile as sf

from app.models import ArrayGeometry, Orientation, RirRequest, Shoebox, SurfaceSet, Vec3


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow acceptance tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def speech_like(seconds: float = 3.0, fs: int = 16000, seed: int = 0) -> np.ndarray:
    """Voiced harmonic bursts with pauses, roughly speech-shaped."""
    rng = np.random.default_rng(seed)
    n = int(seconds * fs)
    t = np.arange(n) / fs
    f0 = 120.0 + 30.0 * np.sin(2 * np.pi * 0.7 * t)
    phase = 2 * np.pi * np.cumsum(f0) / fs
    voiced = sum(np.sin(k * phase) / k for k in range(1, 25))
    syllables = np.clip(np.sin(2 * np.pi * 4.0 * t), 0.0, None) ** 2
    pauses = (np.sin(2 * np.pi * 0.4 * t + 0.3) > -0.6).astype(float)
    breath = 0.05 * rng.standard_normal(n)
    return 0.3 * (voiced * syllables + breath * syllables) * pauses


@pytest.fixture
def fs():
    return 16000


@pytest.fixture
def room():
    return Shoebox(dims=Vec3(x=4.0, y=5.0, z=3.0))


@pytest.fixture
def dry_speech():
    return speech_like()


@pytest.fixture
def speech_dir(tmp_path):
    directory = tmp_path / "speech"
    directory.mkdir()
    for i in range(2):
        sf.write(str(directory / f"utt{i}.wav"), speech_like(2.5, 16000, seed=i), 16000, subtype="FLOAT")
    return directory


def make_request(
    room: Shoebox,
    source=(1.2, 1.7, 1.3),
    center=(2.6, 3.1, 1.5),
    alpha: float = 0.3,
    max_order: int = 2,
    mode: str = "naive",
    fs: int = 16000,
    aperture: float = 0.104,
    **kwargs,
) -> RirRequest:
    surfaces = kwargs.pop("surfaces", SurfaceSet.uniform(alpha))
    array = kwargs.pop("array", ArrayGeometry.pair(aperture))
    return RirRequest(
        room=room,
        surfaces=surfaces,
        source_position=Vec3(x=source[0], y=source[1], z=source[2]),
        array=array,
        array_center=Vec3(x=center[0], y=center[1], z=center[2]),
        array_orientation=kwargs.pop("array_orientation", Orientation.horizontal(0.4)),
        fs=fs,
        max_order=max_order,
        mode=mode,
        **kwargs,
    )
