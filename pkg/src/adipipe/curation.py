"""Silver-label curation: language filtering, surrogate labels, confidence
bucketing, agreement statistics, and self-training set assembly.

Every operation is manifest-in / manifest-out and leaves its input
untouched.
"""

import json
import math
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .classifier import Prediction
from .errors import DataError
from .evaluation import REGIONS
from .featurestore import BUCKETS, Manifest, UtteranceRecord

# Thresholds from the reference large-scale collection run, kept for report
# formatting fixtures; fresh runs fit their own.
REFERENCE_THRESHOLDS = (0.5424, 0.8784)


@dataclass(frozen=True)
class BucketThresholds:
    """Tertile cut points over a confidence sample."""

    t_low: float
    t_high: float
    n_fit: int = 0
    fit_on: str = ""  # which sample the thresholds were fit on

    def __post_init__(self):
        if not (0.0 < self.t_low <= 1.0 and 0.0 < self.t_high <= 1.0):
            raise DataError(f"thresholds must lie in (0, 1]: {self.t_low}, {self.t_high}")
        if self.t_low > self.t_high:
            raise DataError(f"t_low {self.t_low} exceeds t_high {self.t_high}")

    @property
    def degenerate(self) -> bool:
        return self.t_low == self.t_high

    def save(self, path) -> None:
        row = {"t_low": self.t_low, "t_high": self.t_high, "n_fit": self.n_fit, "fit_on": self.fit_on}
        Path(path).write_text(json.dumps(row, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "BucketThresholds":
        row = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(row["t_low"], row["t_high"], row.get("n_fit", 0), row.get("fit_on", ""))


def describe_thresholds(th: BucketThresholds) -> str:
    """Human-readable bucket rules, percent-formatted."""
    return (
        f"low: confidence < {th.t_low * 100:.2f}% | "
        f"medium: {th.t_low * 100:.2f}% <= confidence < {th.t_high * 100:.2f}% | "
        f"high: confidence >= {th.t_high * 100:.2f}%"
    )


def retention_line(stage: str, n_in: int, n_out: int) -> str:
    ratio = n_out / n_in if n_in else 0.0
    return f"{stage}: kept {n_out}/{n_in} ({ratio * 100:.2f}%)"


def filter_language(manifest: Manifest, min_score: float) -> Manifest:
    """Keep records whose language score reaches min_score."""
    missing = [r.utterance_id for r in manifest if r.language_score is None]
    if missing:
        raise DataError(f"records missing language_score: {missing[:5]}{'...' if len(missing) > 5 else ''}")
    return manifest.subset(lambda r: r.language_score >= min_score)


def surrogate_label(manifest: Manifest) -> Manifest:
    """Label every record with its country of origin and mark it surrogate."""
    records = []
    for r in manifest:
        if r.country is None:
            raise DataError(f"{r.utterance_id}: no country to use as surrogate label")
        records.append(replace(r, label=r.country, bucket="surrogate"))
    label_set = tuple(sorted(set(manifest.label_set) | {r.label for r in records}))
    return Manifest(records, label_set)


def _confidences(predictions) -> np.ndarray:
    values = [p.confidence if isinstance(p, Prediction) else float(p) for p in predictions]
    return np.asarray(values, dtype=np.float64)


def fit_thresholds(predictions, fit_on: str = "") -> BucketThresholds:
    """Empirical 1/3 and 2/3 quantiles of the prediction confidences,
    linearly interpolated between order statistics."""
    conf = _confidences(predictions)
    if len(conf) < 3:
        raise DataError(f"need at least 3 predictions to fit tertiles, got {len(conf)}")
    t_low = float(np.quantile(conf, 1.0 / 3.0))
    t_high = float(np.quantile(conf, 2.0 / 3.0))
    th = BucketThresholds(t_low, t_high, n_fit=len(conf), fit_on=fit_on)
    if th.degenerate:
        warnings.warn("degenerate thresholds: t_low == t_high, bucketing collapses", stacklevel=2)
    return th


def bucket_of(confidence: float, th: BucketThresholds) -> str:
    """low below t_low, high at or above t_high, medium in between."""
    if confidence < th.t_low:
        return "low"
    if confidence >= th.t_high:
        return "high"
    return "medium"


def bucket(manifest: Manifest, predictions: list[Prediction], th: BucketThresholds) -> Manifest:
    """Annotate records with predicted label, confidence, and bucket."""
    by_id = {p.utterance_id: p for p in predictions}
    records = []
    for r in manifest:
        p = by_id.get(r.utterance_id)
        if p is None:
            raise DataError(f"no prediction for utterance {r.utterance_id!r}")
        records.append(replace(
            r, label=p.predicted_label, confidence=p.confidence,
            bucket=bucket_of(p.confidence, th),
        ))
    label_set = tuple(sorted(set(manifest.label_set) | {r.label for r in records}))
    return Manifest(records, label_set)


def bucket_by_confidence(manifest: Manifest, th: BucketThresholds) -> Manifest:
    """Bucket records that already carry a confidence column."""
    records = []
    for r in manifest:
        if r.confidence is None:
            raise DataError(f"{r.utterance_id}: no confidence to bucket on")
        records.append(replace(r, bucket=bucket_of(r.confidence, th)))
    return Manifest(records, manifest.label_set)


@dataclass
class AgreementReport:
    match_count: int
    total: int
    per_country: dict[str, dict[str, float]]

    @property
    def match_fraction(self) -> float:
        return self.match_count / self.total if self.total else 0.0

    def format(self) -> str:
        lines = [f"agreement: {self.match_count}/{self.total} ({self.match_fraction * 100:.2f}%)"]
        for country in sorted(self.per_country):
            row = self.per_country[country]
            lines.append(
                f"  {country}: {row['matches']}/{row['total']} ({row['fraction'] * 100:.2f}%)"
            )
        return "\n".join(lines)


def agreement_report(manifest: Manifest) -> AgreementReport:
    """How often the predicted label equals the origin country."""
    per_country: dict[str, dict[str, float]] = {}
    matches = 0
    total = 0
    for r in manifest:
        if r.country is None or r.label is None:
            raise DataError(f"{r.utterance_id}: needs both country and predicted label")
        row = per_country.setdefault(r.country, {"matches": 0, "total": 0, "fraction": 0.0})
        row["total"] += 1
        total += 1
        if r.label == r.country:
            row["matches"] += 1
            matches += 1
    for row in per_country.values():
        row["fraction"] = row["matches"] / row["total"]
    return AgreementReport(matches, total, per_country)


@dataclass
class SelfTrainSet:
    base: Manifest
    added: Manifest
    setting: str

    def combined(self) -> Manifest:
        label_set = tuple(sorted(set(self.base.label_set) | set(self.added.label_set)))
        records = [replace(r) for r in self.base.records] + [replace(r) for r in self.added.records]
        return Manifest(records, label_set)


def assemble_selftrain(base: Manifest, pool: Manifest, setting: str) -> SelfTrainSet:
    """Pick the pool records of one bucket and pair them with the base set.

    Surrogate keeps the country label; low/medium/high keep the predicted
    label already on the record. Base and pool must not share ids.
    """
    if setting not in BUCKETS:
        raise DataError(f"unknown self-training setting {setting!r}")
    overlap = set(base.ids()) & set(pool.ids())
    if overlap:
        raise DataError(f"base and pool share utterance ids: {sorted(overlap)[:5]}")
    added_records = [replace(r) for r in pool if r.bucket == setting]
    for r in added_records:
        if r.label is None:
            raise DataError(f"{r.utterance_id}: selected for {setting} but has no label")
    added = Manifest(added_records, pool.label_set)
    return SelfTrainSet(base, added, setting)


AUDIT_COLUMNS = (
    "utterance_id", "country", "predicted_label", "confidence",
    "belongs_to_country", "msa_or_da", "prediction_correct",
)


def human_audit_sample(manifest: Manifest, per_label: int, labels: list[str], seed: int) -> Manifest:
    """Sample per_label prediction/country mismatches for each requested country."""
    if per_label < 0:
        raise DataError(f"per_label must be >= 0, got {per_label}")
    rng = np.random.default_rng(seed)
    picked: list[UtteranceRecord] = []
    for country in labels:
        mismatches = [r for r in manifest
                      if r.country == country and r.label is not None and r.label != r.country]
        if len(mismatches) < per_label:
            raise DataError(
                f"{country}: only {len(mismatches)} mismatched records, need {per_label}"
            )
        if per_label:
            idx = rng.choice(len(mismatches), size=per_label, replace=False)
            picked.extend(replace(mismatches[i]) for i in sorted(idx))
    return Manifest(picked, manifest.label_set)


def write_annotation_sheet(sample: Manifest, path) -> None:
    """Tab-separated sheet with empty columns for the human annotator."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["\t".join(AUDIT_COLUMNS)]
    for r in sample:
        conf = "" if r.confidence is None else f"{r.confidence:.4f}"
        lines.append("\t".join([r.utterance_id, r.country or "", r.label or "", conf, "", "", ""]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass
class ChannelStats:
    source_video_id: str
    n: int
    label_entropy: float
    gulf_share: float
    suspect_msa: bool


def channel_consistency_report(manifest: Manifest, gulf_share_flag: float = 0.5) -> list[ChannelStats]:
    """Per-source label entropy and Gulf-region share.

    Sources whose predictions concentrate on Gulf countries are flagged as
    likely MSA carriers; this is a report, records are never relabeled.
    """
    groups: dict[str, list[str]] = {}
    for r in manifest:
        if r.label is None:
            raise DataError(f"{r.utterance_id}: no predicted label")
        groups.setdefault(r.source_video_id, []).append(r.label)

    stats = []
    for source in sorted(groups):
        labels = groups[source]
        counts = {}
        for label in labels:
            counts[label] = counts.get(label, 0) + 1
        n = len(labels)
        entropy = -sum((c / n) * math.log(c / n) for c in counts.values())
        gulf = sum(1 for label in labels if REGIONS.get(label) == "Gulf") / n
        stats.append(ChannelStats(source, n, entropy, gulf, gulf >= gulf_share_flag))
    return stats
