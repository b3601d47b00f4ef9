"""K-means codebook training over pooled frame subsamples, and frame labeling.

Training is Lloyd's algorithm with k-means++ seeding, run as a small number
of independent restarts (all derived from one seed); the restart with the
lowest final inertia wins. Assignment uses squared Euclidean distance with
ties broken toward the lowest centroid index.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, NumericError
from .featurestore import FeatureMatrix, FeatureStore, Manifest, read_features, write_features

# codebook sizes swept in the standard experiment grid
STANDARD_K_SWEEP = (200, 400, 600, 800, 1000)

_CHUNK = 16384


@dataclass
class Codebook:
    centroids: np.ndarray
    k: int
    feature_dim: int
    seed: int
    train_inertia: float
    inertia_history: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.centroids = np.asarray(self.centroids, dtype=np.float64)
        if self.centroids.shape != (self.k, self.feature_dim):
            raise DataError(
                f"centroids shape {self.centroids.shape} != ({self.k}, {self.feature_dim})"
            )
        if not np.isfinite(self.centroids).all():
            raise NumericError("codebook contains non-finite centroids")

    def save(self, stem) -> None:
        """Write <stem>.fmx (K x D matrix) and <stem>.json metadata sidecar."""
        stem = Path(stem)
        stem.parent.mkdir(parents=True, exist_ok=True)
        write_features(
            FeatureMatrix(stem.name, self.centroids.astype(np.float32)),
            stem.with_suffix(".fmx"),
        )
        meta = {
            "kind": "codebook",
            "k": self.k,
            "feature_dim": self.feature_dim,
            "seed": self.seed,
            "train_inertia": self.train_inertia,
            "inertia_history": self.inertia_history,
        }
        stem.with_suffix(".json").write_text(json.dumps(meta, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, stem) -> "Codebook":
        stem = Path(stem)
        meta_path = stem.with_suffix(".json")
        if not meta_path.exists():
            raise DataError(f"codebook sidecar not found: {meta_path}")
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        if meta.get("kind") != "codebook":
            raise DataError(f"{meta_path}: not a codebook sidecar")
        matrix = read_features(stem.with_suffix(".fmx"))
        return cls(
            centroids=matrix.frames.astype(np.float64),
            k=meta["k"],
            feature_dim=meta["feature_dim"],
            seed=meta["seed"],
            train_inertia=meta["train_inertia"],
            inertia_history=list(meta.get("inertia_history", [])),
        )


@dataclass
class LabelSequence:
    """Per-frame cluster indices for one utterance."""

    utterance_id: str
    labels: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int32)
        if self.labels.ndim != 1 or len(self.labels) < 1:
            raise DataError(f"{self.utterance_id}: labels must be a nonempty 1-D sequence")

    def __len__(self) -> int:
        return len(self.labels)


def save_label_sequence(seq: LabelSequence, path) -> None:
    # Stored as a T x 1 matrix in the feature format; indices < 2**24 are
    # exact in float32.
    write_features(FeatureMatrix(seq.utterance_id, seq.labels[:, None].astype(np.float32)), path)


def load_label_sequence(path, utterance_id: str | None = None) -> LabelSequence:
    m = read_features(path, utterance_id)
    if m.dim != 1:
        raise DataError(f"{path}: label file must be T x 1, got T x {m.dim}")
    return LabelSequence(m.utterance_id, m.frames[:, 0].astype(np.int32))


def subsample_frames(store: FeatureStore, manifest: Manifest, fraction: float, seed: int) -> np.ndarray:
    """Pool floor(fraction * N_total) frames uniformly across the whole corpus.

    Sampling is global (a long utterance contributes proportionally more
    frames), without replacement, and deterministic for a fixed seed.
    """
    if not 0.0 < fraction <= 1.0:
        raise DataError(f"fraction must be in (0, 1], got {fraction}")
    if len(manifest) == 0:
        raise DataError("cannot subsample an empty corpus")

    shapes = [store.shape(r.utterance_id) for r in manifest]
    dims = {d for _, d in shapes}
    if len(dims) != 1:
        raise DataError(f"inconsistent feature dimensions across corpus: {sorted(dims)}")
    dim = dims.pop()

    counts = np.array([t for t, _ in shapes], dtype=np.int64)
    n_total = int(counts.sum())
    n_sample = n_total if fraction == 1.0 else int(fraction * n_total)
    if n_sample < 1:
        raise DataError(f"fraction {fraction} of {n_total} frames selects nothing")

    rng = np.random.default_rng(seed)
    picked = np.sort(rng.choice(n_total, size=n_sample, replace=False))

    out = np.empty((n_sample, dim), dtype=np.float32)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    write_at = 0
    for record, start, stop in zip(manifest, offsets[:-1], offsets[1:]):
        lo = np.searchsorted(picked, start, side="left")
        hi = np.searchsorted(picked, stop, side="left")
        if lo == hi:
            continue
        local = picked[lo:hi] - start
        frames = store.read(record.utterance_id).frames
        out[write_at:write_at + len(local)] = frames[local]
        write_at += len(local)
    return out


def _nearest(frames: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Labels and squared distances to the nearest centroid, lowest index on ties."""
    labels = np.empty(len(frames), dtype=np.int32)
    d2 = np.empty(len(frames), dtype=np.float64)
    c_sq = np.einsum("kd,kd->k", centroids, centroids)
    for start in range(0, len(frames), _CHUNK):
        chunk = frames[start:start + _CHUNK]
        # ||x - c||^2 = ||x||^2 + ||c||^2 - 2 x.c; the ||x||^2 term is
        # constant per frame, so the argmin can drop it.
        partial = c_sq - 2.0 * chunk @ centroids.T
        idx = np.argmin(partial, axis=1)
        labels[start:start + _CHUNK] = idx
        x_sq = np.einsum("nd,nd->n", chunk, chunk)
        d2[start:start + _CHUNK] = np.maximum(partial[np.arange(len(chunk)), idx] + x_sq, 0.0)
    return labels, d2


def _kmeanspp_init(frames: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(frames)
    centroids = np.empty((k, frames.shape[1]), dtype=np.float64)
    centroids[0] = frames[rng.integers(n)]
    d2 = np.einsum("nd,nd->n", frames - centroids[0], frames - centroids[0])
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            raise NumericError(
                f"fewer than {k} distinct frames; cannot seed {k} clusters"
            )
        centroids[j] = frames[rng.choice(n, p=d2 / total)]
        step = np.einsum("nd,nd->n", frames - centroids[j], frames - centroids[j])
        np.minimum(d2, step, out=d2)
    return centroids


def _random_init(frames: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Distinct random points; explores basins k-means++ seeding avoids."""
    for _ in range(5):
        picked = rng.choice(len(frames), size=k, replace=False)
        centroids = frames[picked].astype(np.float64)
        if k == 1 or len(np.unique(centroids, axis=0)) == k:
            return centroids
    # repeated value collisions: fall back to D^2 sampling, which only ever
    # picks distinct points
    return _kmeanspp_init(frames, k, rng)


def _lloyd(frames: np.ndarray, k: int, rng: np.random.Generator,
           max_iters: int, tol: float, init) -> tuple[np.ndarray, float, list[float]]:
    centroids = init(frames, k, rng)
    history: list[float] = []
    for _ in range(max_iters):
        labels, d2 = _nearest(frames, centroids)
        history.append(float(d2.sum()))

        new_centroids = np.zeros_like(centroids)
        np.add.at(new_centroids, labels, frames)
        counts = np.bincount(labels, minlength=k).astype(np.float64)
        occupied = counts > 0
        new_centroids[occupied] /= counts[occupied, None]

        # Reseed each empty cluster to the point currently farthest from its
        # assigned centroid, so K stays fixed.
        claimed = np.full(len(frames), False)
        for j in np.flatnonzero(~occupied):
            candidates = np.where(claimed, -np.inf, d2)
            far = int(np.argmax(candidates))
            new_centroids[j] = frames[far]
            claimed[far] = True

        shift = float(np.mean(np.linalg.norm(new_centroids - centroids, axis=1)))
        centroids = new_centroids
        if shift < tol:
            break

    _, d2 = _nearest(frames, centroids)
    history.append(float(d2.sum()))
    return centroids, history[-1], history


def train_kmeans(frames: np.ndarray, k: int, seed: int,
                 max_iters: int = 100, tol: float = 1e-4,
                 n_restarts: int | None = None) -> Codebook:
    """Train a K-centroid codebook; the best of n_restarts seeded runs wins.

    Restart r uses the generator seeded by (seed, r), so results are
    bit-exact for a fixed seed regardless of execution order. Restarts
    alternate k-means++ and random-point seeding: D^2 sampling gives good
    starts, the random ones keep basin exploration broad. n_restarts=None
    adapts the count to the instance size under a fixed compute budget:
    tiny inputs take hundreds of near-free restarts (approaching the global
    optimum), corpus-scale inputs keep the floor of 10.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2:
        raise DataError(f"frames must be 2-D, got shape {frames.shape}")
    if not np.isfinite(frames).all():
        raise DataError("frames contain non-finite values")
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    if len(frames) < k:
        raise DataError(f"need at least k={k} frames, got {len(frames)}")
    if k > 1 and bool(np.all(frames == frames[0])):
        raise NumericError(f"all {len(frames)} frames identical; cannot form {k} clusters")
    if n_restarts is None:
        n_restarts = max(10, min(400, 100_000 // (len(frames) * k)))

    best: tuple[np.ndarray, float, list[float]] | None = None
    for restart in range(n_restarts):
        rng = np.random.default_rng([seed, restart])
        init = _kmeanspp_init if restart % 2 == 0 else _random_init
        result = _lloyd(frames, k, rng, max_iters, tol, init)
        if best is None or result[1] < best[1]:
            best = result

    centroids, inertia, history = best
    return Codebook(
        centroids=centroids,
        k=k,
        feature_dim=frames.shape[1],
        seed=seed,
        train_inertia=inertia,
        inertia_history=history,
    )


def assign(codebook: Codebook, m: FeatureMatrix) -> LabelSequence:
    """Label every frame with its nearest centroid."""
    if m.dim != codebook.feature_dim:
        raise DataError(
            f"{m.utterance_id}: feature dim {m.dim} != codebook dim {codebook.feature_dim}"
        )
    labels, _ = _nearest(m.frames.astype(np.float64), codebook.centroids)
    return LabelSequence(m.utterance_id, labels)
