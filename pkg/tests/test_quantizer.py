import numpy as np
import pytest

from adipipe.errors import DataError, NumericError
from adipipe.featurestore import FeatureMatrix, FeatureStore, Manifest, UtteranceRecord
from adipipe.quantizer import (
    Codebook, LabelSequence, assign, load_label_sequence, save_label_sequence,
    subsample_frames, train_kmeans,
)


# --- independent oracle: plain Lloyd's with random init, many restarts ------

def lloyd_reference(frames, k, rng, iters=300):
    centroids = frames[rng.choice(len(frames), size=k, replace=False)].astype(np.float64)
    for _ in range(iters):
        d2 = ((frames[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        labels = d2.argmin(axis=1)
        new = centroids.copy()
        for j in range(k):
            members = frames[labels == j]
            if len(members):
                new[j] = members.mean(axis=0)
        if np.allclose(new, centroids, atol=0, rtol=0):
            break
        centroids = new
    d2 = ((frames[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return float(d2.min(axis=1).sum())


def best_reference_inertia(frames, k, restarts, seed):
    rng = np.random.default_rng(seed)
    return min(lloyd_reference(frames, k, rng) for _ in range(restarts))


def brute_force_nearest(frames, centroids):
    d2 = ((frames[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return d2.argmin(axis=1)


class TestTrainKmeans:
    def test_perfectly_separated(self):
        frames = np.concatenate([np.zeros((10, 2)), np.full((10, 2), 10.0)])
        cb = train_kmeans(frames, k=2, seed=0)
        got = sorted(map(tuple, cb.centroids))
        assert got == [(0.0, 0.0), (10.0, 10.0)]
        assert cb.train_inertia == 0.0

    def test_k1_analytic(self):
        rng = np.random.default_rng(3)
        frames = rng.normal(size=(40, 3))
        cb = train_kmeans(frames, k=1, seed=0)
        assert np.allclose(cb.centroids[0], frames.mean(axis=0))
        expected = ((frames - frames.mean(axis=0)) ** 2).sum()
        assert cb.train_inertia == pytest.approx(expected, rel=1e-12)

    def test_matches_restarted_reference(self):
        rng = np.random.default_rng(11)
        frames = rng.normal(size=(30, 2))
        cb = train_kmeans(frames, k=3, seed=5)
        oracle = best_reference_inertia(frames, k=3, restarts=50, seed=99)
        assert cb.train_inertia <= oracle * (1 + 1e-9)

    def test_fewer_frames_than_k(self):
        with pytest.raises(DataError, match="at least"):
            train_kmeans(np.ones((3, 2)), k=4, seed=0)

    def test_all_identical_frames(self):
        with pytest.raises(NumericError, match="identical"):
            train_kmeans(np.ones((10, 2)), k=2, seed=0)

    def test_inertia_history_non_increasing(self):
        rng = np.random.default_rng(2)
        frames = rng.normal(size=(200, 4))
        cb = train_kmeans(frames, k=8, seed=1, n_restarts=1)
        hist = np.array(cb.inertia_history)
        assert len(hist) >= 2
        assert np.all(np.diff(hist) <= 1e-9)
        assert cb.train_inertia == hist[-1]

    def test_retrain_bit_exact(self):
        rng = np.random.default_rng(8)
        frames = rng.normal(size=(120, 5))
        a = train_kmeans(frames, k=6, seed=42)
        b = train_kmeans(frames, k=6, seed=42)
        assert np.array_equal(a.centroids, b.centroids)
        assert a.train_inertia == b.train_inertia

    def test_no_duplicate_centroids(self):
        rng = np.random.default_rng(4)
        frames = rng.normal(size=(100, 3))
        cb = train_kmeans(frames, k=10, seed=0)
        assert len(np.unique(cb.centroids, axis=0)) == 10

    def test_empty_cluster_reseeded(self):
        # Two far groups and k=3 forces at least one reseed along the way;
        # K stays fixed and every centroid is finite.
        frames = np.concatenate([np.zeros((50, 2)), np.full((50, 2), 100.0)])
        frames += np.random.default_rng(0).normal(scale=0.01, size=frames.shape)
        cb = train_kmeans(frames, k=3, seed=0)
        assert cb.centroids.shape == (3, 2)
        assert np.isfinite(cb.centroids).all()


class TestAssign:
    def centroids(self):
        return np.array([[5.0, 5.0], [1.0, 0.0], [9.0, 9.0], [2.0, 2.0], [-1.0, 0.0]])

    def codebook(self):
        c = self.centroids()
        return Codebook(c, k=len(c), feature_dim=2, seed=0, train_inertia=0.0)

    def test_exact_match(self):
        m = FeatureMatrix("u", self.centroids()[3:4].astype(np.float32))
        assert assign(self.codebook(), m).labels.tolist() == [3]

    def test_tie_breaks_low_index(self):
        # (0, 0) is equidistant from centroids 1 and 4
        m = FeatureMatrix("u", np.array([[0.0, 0.0]], dtype=np.float32))
        assert assign(self.codebook(), m).labels.tolist() == [1]

    def test_matches_brute_force(self):
        rng = np.random.default_rng(17)
        centroids = rng.normal(size=(7, 5))
        cb = Codebook(centroids, k=7, feature_dim=5, seed=0, train_inertia=0.0)
        frames = rng.normal(size=(20, 5)).astype(np.float32)
        seq = assign(cb, FeatureMatrix("u", frames))
        expected = brute_force_nearest(frames.astype(np.float64), centroids)
        assert np.array_equal(seq.labels, expected)

    def test_dimension_mismatch(self):
        m = FeatureMatrix("u", np.ones((2, 3), dtype=np.float32))
        with pytest.raises(DataError, match="dim"):
            assign(self.codebook(), m)

    def test_length_equals_frames(self):
        rng = np.random.default_rng(1)
        m = FeatureMatrix("u", rng.normal(size=(37, 2)).astype(np.float32))
        assert len(assign(self.codebook(), m)) == 37

    def test_permutation_equivariant(self):
        rng = np.random.default_rng(6)
        centroids = rng.normal(size=(6, 4))
        frames = rng.normal(size=(50, 4)).astype(np.float32)
        base = assign(Codebook(centroids, 6, 4, 0, 0.0), FeatureMatrix("u", frames)).labels
        perm = rng.permutation(6)
        permuted = assign(Codebook(centroids[perm], 6, 4, 0, 0.0), FeatureMatrix("u", frames)).labels
        # label j in the permuted codebook points at centroid perm[j]
        assert np.array_equal(perm[permuted], base)


class TestSubsample:
    def corpus(self, tmp_path, counts, dim=3, seed=0):
        rng = np.random.default_rng(seed)
        store = FeatureStore(tmp_path / "feats")
        records = []
        for i, t in enumerate(counts):
            uid = f"u{i}"
            store.write(FeatureMatrix(uid, rng.normal(size=(t, dim)).astype(np.float32)))
            records.append(UtteranceRecord(uid, "v", t / 50))
        return store, Manifest(records)

    def test_exact_count(self, tmp_path):
        store, manifest = self.corpus(tmp_path, [400, 350, 250])
        frames = subsample_frames(store, manifest, 0.10, seed=0)
        assert frames.shape == (100, 3)

    def test_full_fraction(self, tmp_path):
        store, manifest = self.corpus(tmp_path, [40, 35])
        frames = subsample_frames(store, manifest, 1.0, seed=123)
        assert frames.shape == (75, 3)

    def test_seed_determinism(self, tmp_path):
        store, manifest = self.corpus(tmp_path, [300, 300])
        a = subsample_frames(store, manifest, 0.2, seed=7)
        b = subsample_frames(store, manifest, 0.2, seed=7)
        c = subsample_frames(store, manifest, 0.2, seed=8)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_bad_fraction(self, tmp_path):
        store, manifest = self.corpus(tmp_path, [10])
        for fraction in (0.0, -0.1, 1.5):
            with pytest.raises(DataError):
                subsample_frames(store, manifest, fraction, seed=0)

    def test_empty_corpus(self, tmp_path):
        store = FeatureStore(tmp_path / "feats")
        with pytest.raises(DataError, match="empty"):
            subsample_frames(store, Manifest([]), 0.5, seed=0)


class TestSerialization:
    def test_codebook_round_trip(self, tmp_path):
        rng = np.random.default_rng(5)
        frames = rng.normal(size=(60, 4))
        cb = train_kmeans(frames, k=4, seed=9)
        cb.save(tmp_path / "cb")
        back = Codebook.load(tmp_path / "cb")
        assert back.k == 4 and back.feature_dim == 4 and back.seed == 9
        assert back.train_inertia == cb.train_inertia
        assert np.allclose(back.centroids, cb.centroids, atol=1e-6)

    def test_label_sequence_round_trip(self, tmp_path):
        seq = LabelSequence("u", np.array([0, 5, 999, 3]))
        save_label_sequence(seq, tmp_path / "u.fmx")
        back = load_label_sequence(tmp_path / "u.fmx")
        assert np.array_equal(back.labels, seq.labels)
        assert back.labels.dtype == np.int32
