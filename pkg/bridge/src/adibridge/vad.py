"""Energy-based voice activity detection.

Frames the signal at 25 ms / 10 ms, marks frames whose RMS clears an
absolute threshold, merges voiced runs across short gaps, and keeps
segments strictly longer than the minimum duration.
"""

from dataclasses import dataclass

import numpy as np

from .audio import TARGET_RATE


@dataclass(frozen=True)
class VadSettings:
    rms_threshold: float = 0.01  # roughly -40 dBFS
    min_duration_s: float = 3.0  # exclusive lower bound
    min_gap_s: float = 0.3
    window_s: float = 0.025
    hop_s: float = 0.010


def frame_rms(samples: np.ndarray, rate: int, window_s: float, hop_s: float) -> np.ndarray:
    window = int(window_s * rate)
    hop = int(hop_s * rate)
    if len(samples) < window:
        return np.zeros(0)
    n = 1 + (len(samples) - window) // hop
    idx = np.arange(window)[None, :] + hop * np.arange(n)[:, None]
    return np.sqrt((samples[idx] ** 2).mean(axis=1))


def segment(samples: np.ndarray, rate: int = TARGET_RATE,
            settings: VadSettings = VadSettings()) -> list[tuple[float, float]]:
    """Non-overlapping (start_s, end_s) spans of voiced audio, each strictly
    longer than min_duration_s."""
    rms = frame_rms(samples, rate, settings.window_s, settings.hop_s)
    voiced = rms > settings.rms_threshold
    if not voiced.any():
        return []

    hop = settings.hop_s
    runs: list[list[float]] = []
    start = None
    for i, v in enumerate(voiced):
        if v and start is None:
            start = i
        elif not v and start is not None:
            runs.append([start * hop, i * hop + settings.window_s])
            start = None
    if start is not None:
        runs.append([start * hop, (len(voiced) - 1) * hop + settings.window_s])

    merged = [runs[0]]
    for run_start, run_end in runs[1:]:
        if run_start - merged[-1][1] < settings.min_gap_s:
            merged[-1][1] = run_end
        else:
            merged.append([run_start, run_end])

    total = len(samples) / rate
    spans = [(s, min(e, total)) for s, e in merged]
    return [(s, e) for s, e in spans if e - s > settings.min_duration_s]
