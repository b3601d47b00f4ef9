"""Length-normalized unigram bags over cluster-label sequences."""

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .quantizer import LabelSequence


@dataclass
class BagVector:
    """Normalized unigram histogram; values[i] = count(label i) / len(sequence)."""

    utterance_id: str
    values: np.ndarray
    k: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.k,):
            raise DataError(f"{self.utterance_id}: bag shape {self.values.shape} != ({self.k},)")


def bag_of_labels(seq: LabelSequence, k: int) -> BagVector:
    if len(seq) == 0:
        raise DataError(f"{seq.utterance_id}: cannot bag an empty label sequence")
    labels = seq.labels
    if labels.min() < 0 or labels.max() >= k:
        raise DataError(
            f"{seq.utterance_id}: labels outside [0, {k}): "
            f"min {labels.min()}, max {labels.max()}"
        )
    counts = np.bincount(labels, minlength=k)
    return BagVector(seq.utterance_id, counts / len(labels), k)


def bag_matrix(bags: list[BagVector]) -> np.ndarray:
    """Stack bags into an N x K matrix, preserving order."""
    if not bags:
        raise DataError("no bags to stack")
    ks = {b.k for b in bags}
    if len(ks) != 1:
        raise DataError(f"mixed bag dimensions: {sorted(ks)}")
    return np.stack([b.values for b in bags])
