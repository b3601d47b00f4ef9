"""Macro-F1 evaluation, confusion matrices, and country-to-region pooling.

All scores are on a 0..100 percent scale. Per-class F1 is 0 whenever
precision + recall is 0, and classes absent from the data still count in
the macro average.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .featurestore import ADI17_CODES, MSA

REGIONS = {
    "KSA": "Gulf", "UAE": "Gulf", "OMA": "Gulf", "IRQ": "Gulf",
    "KUW": "Gulf", "YEM": "Gulf", "QAT": "Gulf",
    "LEB": "Levantine", "PAL": "Levantine", "JOR": "Levantine", "SYR": "Levantine",
    "EGY": "Egypt", "SUD": "Egypt",
    "MOR": "NorthAfrica", "MAU": "NorthAfrica", "LIB": "NorthAfrica", "ALG": "NorthAfrica",
}
REGION_NAMES = ("Gulf", "Levantine", "Egypt", "NorthAfrica")


def validate_region_map(region_map: dict[str, str] = REGIONS) -> None:
    """The map must cover all 17 codes with region sizes (7, 4, 2, 4)."""
    missing = set(ADI17_CODES) - set(region_map)
    if missing:
        raise DataError(f"region map misses codes: {sorted(missing)}")
    extra = set(region_map) - set(ADI17_CODES)
    if extra:
        raise DataError(f"region map has unknown codes: {sorted(extra)}")
    sizes = {name: sum(1 for v in region_map.values() if v == name) for name in REGION_NAMES}
    expected = dict(zip(REGION_NAMES, (7, 4, 2, 4)))
    if sizes != expected:
        raise DataError(f"region sizes {sizes} != {expected}")


@dataclass
class EvalReport:
    label_set: tuple[str, ...]
    precision: np.ndarray  # percent, per class
    recall: np.ndarray
    f1: np.ndarray
    macro_f1: float
    accuracy: float
    confusion: np.ndarray  # rows gold, columns predicted
    n_samples: int
    averaged_over: tuple[str, ...] = field(default_factory=tuple)

    def per_class(self) -> dict[str, dict[str, float]]:
        return {
            label: {
                "precision": float(self.precision[i]),
                "recall": float(self.recall[i]),
                "f1": float(self.f1[i]),
                "support": int(self.confusion[i].sum()),
            }
            for i, label in enumerate(self.label_set)
        }

    def to_json(self) -> str:
        row = {
            "label_set": list(self.label_set),
            "averaged_over": list(self.averaged_over),
            "macro_f1": self.macro_f1,
            "accuracy": self.accuracy,
            "n_samples": self.n_samples,
            "per_class": self.per_class(),
            "confusion": self.confusion.tolist(),
        }
        return json.dumps(row, sort_keys=True)


def macro_f1(gold, pred, label_set, average_over=None) -> EvalReport:
    """Score predictions against gold labels.

    average_over restricts the macro average (e.g. to the classes a test
    set actually covers) while the confusion matrix stays over label_set.
    """
    gold = list(gold)
    pred = list(pred)
    if len(gold) != len(pred):
        raise DataError(f"gold has {len(gold)} labels, pred has {len(pred)}")
    label_set = tuple(label_set)
    index = {label: i for i, label in enumerate(label_set)}
    if len(index) != len(label_set):
        raise DataError("label_set contains duplicates")

    confusion = np.zeros((len(label_set), len(label_set)), dtype=np.int64)
    for g, p in zip(gold, pred):
        if g not in index:
            raise DataError(f"gold label {g!r} not in label set")
        if p not in index:
            raise DataError(f"predicted label {p!r} not in label set")
        confusion[index[g], index[p]] += 1

    tp = np.diag(confusion).astype(np.float64)
    support = confusion.sum(axis=1).astype(np.float64)
    predicted = confusion.sum(axis=0).astype(np.float64)

    precision = np.divide(tp, predicted, out=np.zeros_like(tp), where=predicted > 0)
    recall = np.divide(tp, support, out=np.zeros_like(tp), where=support > 0)
    pr = precision + recall
    f1 = np.divide(2 * precision * recall, pr, out=np.zeros_like(tp), where=pr > 0)

    averaged_over = tuple(average_over) if average_over is not None else label_set
    unknown = set(averaged_over) - set(label_set)
    if unknown:
        raise DataError(f"average_over labels not in label set: {sorted(unknown)}")
    # plain sequential mean over the fraction-scale scores, so the result is
    # reproducible by a naive loop to the last bit
    averaged = [float(f1[index[label]]) for label in averaged_over]
    macro = 100.0 * (sum(averaged) / len(averaged))

    n = len(gold)
    return EvalReport(
        label_set=label_set,
        precision=precision * 100.0,
        recall=recall * 100.0,
        f1=f1 * 100.0,
        macro_f1=macro,
        accuracy=float(tp.sum() / n * 100.0) if n else 0.0,
        confusion=confusion,
        n_samples=n,
        averaged_over=averaged_over,
    )


def pool_regions(labels, region_map: dict[str, str] | None = None,
                 msa_passthrough: bool = False) -> list[str]:
    """Replace each country label by its coarse region.

    MSA is rejected unless msa_passthrough is set, in which case it maps
    to itself (giving a 5-class scheme).
    """
    region_map = REGIONS if region_map is None else region_map
    pooled = []
    for label in labels:
        if label == MSA:
            if not msa_passthrough:
                raise DataError("MSA label present; enable msa_passthrough to keep it")
            pooled.append(MSA)
        elif label in region_map:
            pooled.append(region_map[label])
        else:
            raise DataError(f"label {label!r} has no region mapping")
    return pooled


def report_table(reports: dict[str, dict[str, EvalReport]]) -> str:
    """Markdown table: one row per model, one column per dataset.

    Cells show macro-F1 and sample count. Row and column order follow
    insertion order, so output is byte-identical across runs.
    """
    columns: list[str] = []
    for per_model in reports.values():
        for name in per_model:
            if name not in columns:
                columns.append(name)

    header = ["Model"] + columns
    lines = ["| " + " | ".join(header) + " |",
             "| " + " | ".join("---" for _ in header) + " |"]
    for model, per_model in reports.items():
        cells = [model]
        for name in columns:
            report = per_model.get(name)
            cells.append("---" if report is None else f"{report.macro_f1:.2f} (n={report.n_samples})")
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def save_reports(reports: dict[str, dict[str, EvalReport]], path) -> None:
    """Machine-readable companion to report_table: one JSON line per cell."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for model, per_model in reports.items():
        for dataset, report in per_model.items():
            row = json.loads(report.to_json())
            row["model"] = model
            row["dataset"] = dataset
            lines.append(json.dumps(row, sort_keys=True))
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
