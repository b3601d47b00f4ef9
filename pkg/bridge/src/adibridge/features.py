"""Frame-level feature extraction at the downstream 50 frames/second rate.

The extractor is a deterministic stack: a log mel filterbank over 25 ms
windows hopped every 320 samples, followed by fixed random-projection
layers with temporal smoothing and tanh. The layer index picks how deep in
the stack to tap, mirroring how a pretrained speech model would be tapped
at an intermediate layer; weights derive from the model identifier, so the
same identifier always produces the same features. No pretrained weights
are involved; swap in a real model behind extract() for production runs.
"""

import hashlib
import re

import numpy as np

from .audio import TARGET_RATE

WINDOW = 400  # 25 ms at 16 kHz
HOP = 320  # 20 ms -> 50 frames/second
N_FFT = 512
FPS = TARGET_RATE // HOP

_MODEL_RE = re.compile(r"^lfb(?P<dim>\d+)x(?P<layers>\d+)$")
DEFAULT_MODEL = "lfb64x12"
DEFAULT_LAYER = 10

# smoothing reaches +-2 frames per layer
_SMOOTH_RADIUS = 2


class FeatureConfigError(ValueError):
    pass


def _mel_filterbank(dim: int, rate: int) -> np.ndarray:
    def to_mel(f):
        return 2595.0 * np.log10(1.0 + f / 700.0)

    def from_mel(m):
        return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

    points = from_mel(np.linspace(to_mel(0.0), to_mel(rate / 2), dim + 2))
    bins = np.floor((N_FFT + 1) * points / rate).astype(int)
    bank = np.zeros((dim, N_FFT // 2 + 1))
    for i in range(dim):
        lo, mid, hi = bins[i], bins[i + 1], bins[i + 2]
        if mid > lo:
            bank[i, lo:mid] = (np.arange(lo, mid) - lo) / (mid - lo)
        if hi > mid:
            bank[i, mid:hi] = (hi - np.arange(mid, hi)) / (hi - mid)
    return bank


def _smooth(h: np.ndarray) -> np.ndarray:
    """Moving average over +-2 frames, edges replicated."""
    padded = np.concatenate([h[:1].repeat(_SMOOTH_RADIUS, axis=0), h,
                             h[-1:].repeat(_SMOOTH_RADIUS, axis=0)])
    return (padded[0:-4] + padded[1:-3] + padded[2:-2] + padded[3:-1] + padded[4:]) / 5.0


def frame_count(n_samples: int) -> int:
    if n_samples < WINDOW:
        return 0
    return 1 + (n_samples - WINDOW) // HOP


class LayeredFilterbankExtractor:
    def __init__(self, model_id: str = DEFAULT_MODEL):
        match = _MODEL_RE.match(model_id)
        if not match:
            raise FeatureConfigError(f"unknown model identifier {model_id!r} (expected lfb<dim>x<layers>)")
        self.model_id = model_id
        self.dim = int(match["dim"])
        self.n_layers = int(match["layers"])
        if self.dim < 1 or self.n_layers < 0:
            raise FeatureConfigError(f"bad model shape in {model_id!r}")

        digest = hashlib.sha256(model_id.encode()).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
        self._filterbank = _mel_filterbank(self.dim, TARGET_RATE)
        self._window = np.hanning(WINDOW)
        scale = 1.0 / np.sqrt(self.dim)
        self._weights = [rng.normal(scale=scale, size=(self.dim, self.dim))
                         for _ in range(self.n_layers)]

    def validate_layer(self, layer: int) -> None:
        if not 0 <= layer <= self.n_layers:
            raise FeatureConfigError(
                f"layer {layer} invalid for {self.model_id} (0..{self.n_layers})"
            )

    def receptive_radius(self, layer: int) -> int:
        return _SMOOTH_RADIUS * layer

    def _frames(self, samples: np.ndarray) -> np.ndarray:
        n = frame_count(len(samples))
        if n < 1:
            raise FeatureConfigError(
                f"audio too short: {len(samples)} samples < one {WINDOW}-sample window"
            )
        idx = np.arange(WINDOW)[None, :] + HOP * np.arange(n)[:, None]
        windowed = samples[idx] * self._window
        spectrum = np.abs(np.fft.rfft(windowed, n=N_FFT, axis=1)) ** 2
        return np.log(spectrum @ self._filterbank.T + 1e-10)

    def _apply_layers(self, h: np.ndarray, layer: int) -> np.ndarray:
        for weight in self._weights[:layer]:
            h = np.tanh(_smooth(h) @ weight)
        return h

    def extract(self, samples: np.ndarray, rate: int = TARGET_RATE,
                layer: int = DEFAULT_LAYER, auto_chunk_frames: int = 8000) -> np.ndarray:
        """T x D float32 features; long inputs are chunked transparently."""
        if rate != TARGET_RATE:
            raise FeatureConfigError(f"extractor expects {TARGET_RATE} Hz input, got {rate}")
        self.validate_layer(layer)
        samples = np.asarray(samples, dtype=np.float64)
        if frame_count(len(samples)) > auto_chunk_frames:
            return self.extract_chunked(samples, rate, layer, chunk_frames=auto_chunk_frames)
        return self._apply_layers(self._frames(samples), layer).astype(np.float32)

    def extract_chunked(self, samples: np.ndarray, rate: int = TARGET_RATE,
                        layer: int = DEFAULT_LAYER, chunk_frames: int = 500) -> np.ndarray:
        """Chunk-wise extraction with enough overlap that, away from the true
        utterance edges, every kept frame sees its full receptive field;
        output matches whole-utterance extraction."""
        if rate != TARGET_RATE:
            raise FeatureConfigError(f"extractor expects {TARGET_RATE} Hz input, got {rate}")
        self.validate_layer(layer)
        samples = np.asarray(samples, dtype=np.float64)
        total = frame_count(len(samples))
        if total < 1:
            raise FeatureConfigError("audio too short for one window")
        if chunk_frames < 1:
            raise FeatureConfigError(f"chunk_frames must be >= 1, got {chunk_frames}")

        margin = self.receptive_radius(layer)
        out = np.empty((total, self.dim), dtype=np.float32)
        for start in range(0, total, chunk_frames):
            stop = min(start + chunk_frames, total)
            lo = max(0, start - margin)
            hi = min(total, stop + margin)
            piece = samples[lo * HOP:(hi - 1) * HOP + WINDOW]
            local = self._apply_layers(self._frames(piece), layer)
            out[start:stop] = local[start - lo:stop - lo]
        return out


def build_extractor(model_id: str = DEFAULT_MODEL) -> LayeredFilterbankExtractor:
    return LayeredFilterbankExtractor(model_id)
