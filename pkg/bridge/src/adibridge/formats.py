"""Writers for the downstream toolkit's file formats.

Implemented independently against the published layout so the bridge
couples to the formats, not to the toolkit's code:

  * feature file: 16-byte header (magic FMX1, version, reserved, uint16
    frame rate, uint32 T, uint32 D, all little-endian), then T*D float32
    row-major;
  * manifest: UTF-8 JSON lines with the fixed field set.
"""

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"FMX1"
VERSION = 1
HEADER = struct.Struct("<4sBBHII")

MANIFEST_FIELDS = (
    "utterance_id", "source_video_id", "duration_s", "country", "label",
    "language_score", "confidence", "bucket", "split",
)


def write_feature_file(path, frames: np.ndarray, fps: int = 50) -> None:
    frames = np.ascontiguousarray(frames, dtype="<f4")
    if frames.ndim != 2 or frames.shape[0] < 1 or frames.shape[1] < 1:
        raise ValueError(f"frames must be a nonempty 2-D matrix, got shape {frames.shape}")
    if not np.isfinite(frames).all():
        raise ValueError("frames contain non-finite values")
    t, d = frames.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(HEADER.pack(MAGIC, VERSION, 0, fps, t, d) + frames.tobytes())


def manifest_row(utterance_id: str, source_video_id: str, duration_s: float,
                 language_score: float | None = None, country: str | None = None,
                 split: str = "train") -> dict:
    row = dict.fromkeys(MANIFEST_FIELDS)
    row.update(
        utterance_id=utterance_id,
        source_video_id=source_video_id,
        duration_s=duration_s,
        language_score=language_score,
        country=country,
        split=split,
    )
    return row


def write_manifest(rows: list[dict], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps(row, sort_keys=True) for row in rows]
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
