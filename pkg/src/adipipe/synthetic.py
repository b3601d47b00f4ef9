"""Synthetic corpora for pipeline exercises and end-to-end checks.

Each class is a Gaussian over frame space with a well-separated mean, so a
small codebook plus a linear classifier can recover the classes. Labels
reuse real country codes so curation and region pooling work unchanged.
"""

import numpy as np

from .featurestore import DEFAULT_FPS, FeatureMatrix, FeatureStore, Manifest, UtteranceRecord

DEFAULT_CLASSES = ("EGY", "JOR", "KSA", "MOR")


def make_corpus(out_dir, classes: tuple[str, ...] = DEFAULT_CLASSES, per_class: int = 200,
                dim: int = 8, pool_per_class: int = 0, seed: int = 0,
                separation: float = 5.0) -> tuple[Manifest, Manifest]:
    """Write features plus a labeled manifest and an optional unlabeled pool.

    Labeled records alternate into train/test with every third utterance
    held out. Pool records carry a country and a language score but no
    label. Returns (labeled manifest, pool manifest); files land under
    out_dir/features, out_dir/manifest.jsonl, out_dir/pool.jsonl.
    """
    rng = np.random.default_rng(seed)
    store = FeatureStore(f"{out_dir}/features")

    directions = rng.normal(size=(len(classes), dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    means = separation * directions

    labeled: list[UtteranceRecord] = []
    pool: list[UtteranceRecord] = []
    counter = 0

    def emit(class_idx: int, labeled_record: bool, index_in_class: int) -> None:
        nonlocal counter
        uid = f"utt{counter:05d}"
        duration = float(rng.uniform(5.0, 8.0))
        t = int(duration * DEFAULT_FPS)
        frames = rng.normal(size=(t, dim)) + means[class_idx]
        store.write(FeatureMatrix(uid, frames.astype(np.float32)))
        code = classes[class_idx]
        if labeled_record:
            split = "test" if index_in_class % 3 == 2 else "train"
            labeled.append(UtteranceRecord(
                utterance_id=uid, source_video_id=f"vid{counter // 10:04d}",
                duration_s=round(t / DEFAULT_FPS, 3), label=code, split=split,
            ))
        else:
            pool.append(UtteranceRecord(
                utterance_id=uid, source_video_id=f"vid{counter // 10:04d}",
                duration_s=round(t / DEFAULT_FPS, 3), country=code,
                language_score=float(rng.uniform(0.7, 1.0)), split="train",
            ))
        counter += 1

    for class_idx in range(len(classes)):
        for i in range(per_class):
            emit(class_idx, True, i)
    for class_idx in range(len(classes)):
        for i in range(pool_per_class):
            emit(class_idx, False, i)

    manifest = Manifest(labeled, tuple(sorted(classes)))
    manifest.save(f"{out_dir}/manifest.jsonl")
    pool_manifest = Manifest(pool, tuple(sorted(classes)))
    pool_manifest.save(f"{out_dir}/pool.jsonl")
    return manifest, pool_manifest
