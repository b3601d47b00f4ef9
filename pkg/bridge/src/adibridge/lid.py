"""Language scoring for segments.

The default scorer is a deterministic stand-in built from spectral
statistics: it rewards energy concentrated in the speech band and a
non-flat spectrum, and maps the result through a sigmoid to [0, 1]. It
exists to exercise the pipeline end to end; a real spoken language
identification model drops in behind the same one-segment / batch
interface.
"""

import numpy as np

from .audio import TARGET_RATE


class ScorerError(RuntimeError):
    pass


class SpectralHeuristicScorer:
    """score() is pure: the same segment always gets the same score."""

    speech_band = (300.0, 3400.0)

    def score(self, samples: np.ndarray, rate: int = TARGET_RATE) -> float:
        samples = np.asarray(samples, dtype=np.float64)
        if len(samples) < rate // 10:
            raise ScorerError(f"segment too short to score: {len(samples)} samples")
        spectrum = np.abs(np.fft.rfft(samples)) ** 2
        freqs = np.fft.rfftfreq(len(samples), d=1.0 / rate)
        total = spectrum.sum()
        if total <= 0:
            return 0.0
        lo, hi = self.speech_band
        band = spectrum[(freqs >= lo) & (freqs <= hi)].sum() / total

        power = spectrum[1:] / spectrum[1:].sum()
        entropy = -(power * np.log(power + 1e-30)).sum() / np.log(len(power))
        peakiness = 1.0 - entropy

        z = 6.0 * band + 4.0 * peakiness - 3.0
        return float(1.0 / (1.0 + np.exp(-z)))

    def score_batch(self, segments: list[np.ndarray], rate: int = TARGET_RATE) -> list[float]:
        return [self.score(s, rate) for s in segments]
