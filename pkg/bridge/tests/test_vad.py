import numpy as np

from adibridge.vad import VadSettings, segment
from conftest import silence, speech


class TestSegment:
    def test_pure_silence_no_segments(self):
        assert segment(silence(12.0)) == []

    def test_continuous_speech_single_segment(self):
        spans = segment(speech(10.0))
        assert len(spans) == 1
        start, end = spans[0]
        assert start < 0.1
        assert abs((end - start) - 10.0) < 0.1

    def test_speech_silence_speech(self):
        # 4 s speech / 5 s silence / 4 s speech: two segments of about 4 s,
        # voicing mask known by construction
        audio = np.concatenate([speech(4.0, seed=1), silence(5.0), speech(4.0, seed=2)])
        spans = segment(audio)
        assert len(spans) == 2
        (s1, e1), (s2, e2) = spans
        assert abs((e1 - s1) - 4.0) < 0.2
        assert abs((e2 - s2) - 4.0) < 0.2
        assert abs(s2 - 9.0) < 0.2

    def test_all_durations_exceed_minimum(self):
        audio = np.concatenate([speech(3.5, seed=3), silence(2.0), speech(1.0, seed=4)])
        spans = segment(audio)
        assert spans  # the 3.5 s chunk survives, the 1 s chunk does not
        assert all(e - s > 3.0 for s, e in spans)

    def test_non_overlapping_and_sorted(self):
        audio = np.concatenate([speech(4.0, seed=5), silence(1.0), speech(4.0, seed=6),
                                silence(4.0), speech(5.0, seed=7)])
        spans = segment(audio)
        for (s1, e1), (s2, e2) in zip(spans, spans[1:]):
            assert e1 <= s2

    def test_short_gaps_merge(self):
        audio = np.concatenate([speech(2.0, seed=8), silence(0.1), speech(2.0, seed=9)])
        spans = segment(audio)
        assert len(spans) == 1
        assert spans[0][1] - spans[0][0] > 3.9

    def test_threshold_setting(self):
        quiet = 0.004 * speech(5.0, amplitude=1.0)
        assert segment(quiet) == []
        spans = segment(quiet, settings=VadSettings(rms_threshold=0.0005))
        assert len(spans) == 1
