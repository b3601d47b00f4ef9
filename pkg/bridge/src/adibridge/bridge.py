"""Batch job: audio files in, feature files plus a manifest out."""

import logging
from dataclasses import dataclass, field
from pathlib import Path

from .audio import AudioDecodeError, load_as_16k
from .features import DEFAULT_LAYER, DEFAULT_MODEL, FPS, build_extractor
from .formats import manifest_row, write_feature_file, write_manifest
from .lid import ScorerError, SpectralHeuristicScorer
from .vad import VadSettings, segment

log = logging.getLogger("adibridge")


@dataclass
class BridgeJob:
    audio_paths: list
    out_features_dir: str
    out_manifest_path: str
    model: str = DEFAULT_MODEL
    layer: int = DEFAULT_LAYER
    vad: VadSettings = field(default_factory=VadSettings)
    chunk_frames: int = 0  # 0: whole-utterance extraction (auto-chunks when huge)


@dataclass
class BridgeResult:
    rows: list
    skipped_files: list
    flagged_utterances: list  # scored as None because the scorer failed


def run_job(job: BridgeJob) -> BridgeResult:
    extractor = build_extractor(job.model)
    extractor.validate_layer(job.layer)
    scorer = SpectralHeuristicScorer()
    out_dir = Path(job.out_features_dir)

    rows = []
    skipped = []
    flagged = []
    for path in job.audio_paths:
        path = Path(path)
        try:
            samples = load_as_16k(path)
        except AudioDecodeError as exc:
            log.warning("skipping undecodable file %s: %s", path, exc)
            skipped.append(str(path))
            continue

        for index, (start, end) in enumerate(segment(samples, settings=job.vad)):
            uid = f"{path.stem}_{index:04d}"
            piece = samples[int(start * 16_000):int(end * 16_000)]

            try:
                score = scorer.score(piece)
            except ScorerError as exc:
                log.warning("flagging %s: scorer failed (%s)", uid, exc)
                score = None
                flagged.append(uid)

            if job.chunk_frames > 0:
                frames = extractor.extract_chunked(piece, layer=job.layer,
                                                   chunk_frames=job.chunk_frames)
            else:
                frames = extractor.extract(piece, layer=job.layer)
            write_feature_file(out_dir / f"{uid}.fmx", frames, fps=FPS)
            rows.append(manifest_row(uid, path.stem, round(end - start, 3),
                                     language_score=score))

    write_manifest(rows, job.out_manifest_path)
    log.info("wrote %d utterances from %d files (%d skipped, %d flagged)",
             len(rows), len(job.audio_paths), len(skipped), len(flagged))
    return BridgeResult(rows, skipped, flagged)
