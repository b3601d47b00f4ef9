"""Dialect identification from quantized acoustic features.

Pipeline stages: frame features -> k-means codebook -> per-frame cluster
labels -> length-normalized unigram bags -> linear classifier, plus the
silver-label curation loop (language filter, surrogate labels, confidence
bucketing, self-training assembly) and a macro-F1 evaluation harness.
"""

__version__ = "0.1.0"
