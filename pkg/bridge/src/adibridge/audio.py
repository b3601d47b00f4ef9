"""WAV decoding, mono mixdown, and resampling to the 16 kHz working rate."""

import wave
from pathlib import Path

import numpy as np

TARGET_RATE = 16_000

_WIDTH_DTYPES = {1: np.uint8, 2: np.dtype("<i2"), 4: np.dtype("<i4")}


class AudioDecodeError(ValueError):
    pass


def read_wav(path) -> tuple[np.ndarray, int]:
    """PCM WAV to mono float64 in [-1, 1], plus the native sample rate."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as wav:
            width = wav.getsampwidth()
            channels = wav.getnchannels()
            rate = wav.getframerate()
            raw = wav.readframes(wav.getnframes())
    except (wave.Error, EOFError, OSError) as exc:
        raise AudioDecodeError(f"{path}: {exc}") from exc
    if width not in _WIDTH_DTYPES:
        raise AudioDecodeError(f"{path}: unsupported sample width {width}")

    samples = np.frombuffer(raw, dtype=_WIDTH_DTYPES[width]).astype(np.float64)
    if width == 1:  # unsigned 8-bit
        samples = (samples - 128.0) / 128.0
    else:
        samples = samples / float(2 ** (8 * width - 1))
    if channels > 1:
        samples = samples.reshape(-1, channels).mean(axis=1)
    return samples, rate


def write_wav(path, samples: np.ndarray, rate: int = TARGET_RATE) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    clipped = np.clip(samples, -1.0, 1.0)
    pcm = (clipped * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as wav:
        wav.setnchannels(1)
        wav.setsampwidth(2)
        wav.setframerate(rate)
        wav.writeframes(pcm.tobytes())


def resample(samples: np.ndarray, src_rate: int, dst_rate: int = TARGET_RATE) -> np.ndarray:
    """Linear-interpolation resampling; adequate for features, not playback."""
    if src_rate == dst_rate:
        return samples
    duration = len(samples) / src_rate
    n_out = int(round(duration * dst_rate))
    src_t = np.arange(len(samples)) / src_rate
    dst_t = np.arange(n_out) / dst_rate
    return np.interp(dst_t, src_t, samples)


def load_as_16k(path) -> np.ndarray:
    samples, rate = read_wav(path)
    return resample(samples, rate, TARGET_RATE)
