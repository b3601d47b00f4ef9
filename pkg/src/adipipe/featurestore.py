"""On-disk formats for frame features and dataset manifests.

Feature file layout (little-endian, 16-byte header):

    bytes 0..3    magic  b"FMX1"
    byte  4       format version (1)
    byte  5       reserved (0)
    bytes 6..7    uint16 flags: frame rate in frames/second (default 50)
    bytes 8..11   uint32 T, number of frames
    bytes 12..15  uint32 D, feature dimension

followed by T*D float32 values, row-major. The header is fixed-size so T
and D can be read without touching the payload.

Manifests are UTF-8 JSON lines, one record per line, with the fields
utterance_id, source_video_id, duration_s, country, label, language_score,
confidence, bucket, split.
"""

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DataError

MAGIC = b"FMX1"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sBBHII")
DEFAULT_FPS = 50

# Country codes covered by the 17-way dialect label scheme, plus MSA for
# the 18-way variant.
ADI17_CODES = (
    "ALG", "EGY", "IRQ", "JOR", "KSA", "KUW", "LEB", "LIB", "MAU",
    "MOR", "OMA", "PAL", "QAT", "SUD", "SYR", "UAE", "YEM",
)
MSA = "MSA"
ADI17_MSA_LABELS = ADI17_CODES + (MSA,)

BUCKETS = ("surrogate", "low", "medium", "high")
SPLITS = ("train", "dev", "test")


@dataclass
class FeatureMatrix:
    """Frame-level features for one utterance: a T x D float matrix."""

    utterance_id: str
    frames: np.ndarray
    fps: int = DEFAULT_FPS

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 2:
            raise DataError(f"{self.utterance_id}: frames must be 2-D, got shape {self.frames.shape}")
        t, d = self.frames.shape
        if t < 1 or d < 1:
            raise DataError(f"{self.utterance_id}: need T >= 1 and D >= 1, got {t}x{d}")
        if not np.isfinite(self.frames).all():
            raise DataError(f"{self.utterance_id}: frames contain non-finite values")
        if not 1 <= self.fps <= 0xFFFF:
            raise DataError(f"{self.utterance_id}: fps {self.fps} out of uint16 range")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]


def write_features(m: FeatureMatrix, path) -> None:
    """Write a feature matrix; round-trips bit-exactly through read_features."""
    t, d = m.frames.shape
    header = HEADER.pack(MAGIC, FORMAT_VERSION, 0, m.fps, t, d)
    payload = np.ascontiguousarray(m.frames, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def read_features(path, utterance_id: str | None = None) -> FeatureMatrix:
    """Read a feature file written by write_features.

    utterance_id defaults to the file stem; the file itself carries no id.
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < HEADER.size:
        raise DataError(f"{path}: file shorter than header ({len(raw)} bytes)")
    magic, version, _reserved, fps, t, d = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported format version {version}")
    expected = HEADER.size + 4 * t * d
    if len(raw) != expected:
        raise DataError(f"{path}: payload length {len(raw) - HEADER.size} does not match header {t}x{d}")
    frames = np.frombuffer(raw, dtype="<f4", offset=HEADER.size).reshape(t, d)
    return FeatureMatrix(utterance_id or path.stem, frames.copy(), fps=fps)


def read_feature_shape(path) -> tuple[int, int]:
    """Read (T, D) from the header without loading the payload."""
    path = Path(path)
    with open(path, "rb") as fh:
        raw = fh.read(HEADER.size)
    if len(raw) < HEADER.size:
        raise DataError(f"{path}: file shorter than header")
    magic, version, _reserved, _fps, t, d = HEADER.unpack(raw)
    if magic != MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported format version {version}")
    return t, d


class FeatureStore:
    """Directory of one feature file per utterance, named <utterance_id>.fmx."""

    suffix = ".fmx"

    def __init__(self, root):
        self.root = Path(root)

    def path_for(self, utterance_id: str) -> Path:
        return self.root / f"{utterance_id}{self.suffix}"

    def write(self, m: FeatureMatrix) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        path = self.path_for(m.utterance_id)
        write_features(m, path)
        return path

    def read(self, utterance_id: str) -> FeatureMatrix:
        path = self.path_for(utterance_id)
        if not path.exists():
            raise DataError(f"no feature file for utterance {utterance_id!r} at {path}")
        return read_features(path, utterance_id)

    def shape(self, utterance_id: str) -> tuple[int, int]:
        path = self.path_for(utterance_id)
        if not path.exists():
            raise DataError(f"no feature file for utterance {utterance_id!r} at {path}")
        return read_feature_shape(path)


MANIFEST_FIELDS = (
    "utterance_id", "source_video_id", "duration_s", "country", "label",
    "language_score", "confidence", "bucket", "split",
)


@dataclass
class UtteranceRecord:
    """One manifest row."""

    utterance_id: str
    source_video_id: str
    duration_s: float
    country: str | None = None
    label: str | None = None
    language_score: float | None = None
    confidence: float | None = None
    bucket: str | None = None
    split: str = "train"

    def __post_init__(self):
        if self.duration_s <= 0:
            raise DataError(f"{self.utterance_id}: duration_s must be positive, got {self.duration_s}")
        for name in ("language_score", "confidence"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise DataError(f"{self.utterance_id}: {name} {value} outside [0, 1]")
        if self.country is not None and self.country not in ADI17_CODES:
            raise DataError(f"{self.utterance_id}: unknown country code {self.country!r}")
        if self.bucket is not None:
            if self.bucket not in BUCKETS:
                raise DataError(f"{self.utterance_id}: unknown bucket {self.bucket!r}")
            if self.confidence is None and self.country is None:
                raise DataError(
                    f"{self.utterance_id}: bucket set without confidence or country"
                )
        if self.split not in SPLITS:
            raise DataError(f"{self.utterance_id}: unknown split {self.split!r}")

    def to_json(self) -> str:
        row = {name: getattr(self, name) for name in MANIFEST_FIELDS}
        return json.dumps(row, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "UtteranceRecord":
        row = json.loads(line)
        unknown = set(row) - set(MANIFEST_FIELDS)
        if unknown:
            raise DataError(f"manifest row has unknown fields: {sorted(unknown)}")
        return cls(**row)


@dataclass
class Manifest:
    """Ordered utterance records plus the label vocabulary in force."""

    records: list[UtteranceRecord] = field(default_factory=list)
    label_set: tuple[str, ...] = ()

    def __post_init__(self):
        self.label_set = tuple(self.label_set)
        if not self.label_set:
            self.label_set = tuple(sorted({r.label for r in self.records if r.label is not None}))
        seen: set[str] = set()
        for r in self.records:
            if r.utterance_id in seen:
                raise DataError(f"duplicate utterance_id {r.utterance_id!r}")
            seen.add(r.utterance_id)
            if r.label is not None and r.label not in self.label_set:
                raise DataError(f"{r.utterance_id}: label {r.label!r} not in label set")

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def ids(self) -> list[str]:
        return [r.utterance_id for r in self.records]

    def by_id(self) -> dict[str, UtteranceRecord]:
        return {r.utterance_id: r for r in self.records}

    def subset(self, predicate) -> "Manifest":
        return Manifest([replace(r) for r in self.records if predicate(r)], self.label_set)

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [r.to_json() for r in self.records]
        path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")

    @classmethod
    def load(cls, path, label_set: tuple[str, ...] = ()) -> "Manifest":
        path = Path(path)
        if not path.exists():
            raise DataError(f"manifest not found: {path}")
        records = []
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            try:
                records.append(UtteranceRecord.from_json(line))
            except (json.JSONDecodeError, TypeError) as exc:
                raise DataError(f"{path}:{lineno}: bad manifest line ({exc})") from exc
        return cls(records, label_set)


def filter_by_duration(manifest: Manifest, min_s: float, max_s: float | None = None) -> Manifest:
    """Keep records with min_s < duration_s (<= max_s when given), order preserved.

    Lower bound is exclusive, upper bound inclusive.
    """
    if min_s < 0:
        raise DataError(f"min_s must be >= 0, got {min_s}")
    if max_s is not None and max_s <= min_s:
        raise DataError(f"max_s {max_s} must exceed min_s {min_s}")
    keep = lambda r: r.duration_s > min_s and (max_s is None or r.duration_s <= max_s)
    return manifest.subset(keep)
