import numpy as np
import pytest

RATE = 16_000


def speech(seconds: float, seed: int = 0, amplitude: float = 0.25) -> np.ndarray:
    """Speech-like test signal: harmonic stack plus noise, constant envelope."""
    rng = np.random.default_rng(seed)
    t = np.arange(int(seconds * RATE)) / RATE
    tone = sum(np.sin(2 * np.pi * f * t + phase)
               for f, phase in ((220.0, 0.0), (440.0, 1.3), (880.0, 2.1), (1320.0, 0.7)))
    signal = tone / 4.0 + 0.4 * rng.normal(size=len(t))
    return amplitude * signal / np.max(np.abs(signal))


def silence(seconds: float) -> np.ndarray:
    return np.zeros(int(seconds * RATE))


@pytest.fixture
def rate():
    return RATE
