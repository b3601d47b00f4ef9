import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adipipe.errors import DataError
from adipipe.quantizer import LabelSequence
from adipipe.representation import bag_matrix, bag_of_labels


def counting_pass(labels, k):
    # independent oracle: plain dict counting, no numpy
    counts = {}
    for label in labels:
        counts[label] = counts.get(label, 0) + 1
    return [counts.get(i, 0) / len(labels) for i in range(k)]


def seq(labels):
    return LabelSequence("u", np.asarray(labels))


class TestBagOfLabels:
    def test_hand_countable(self):
        bag = bag_of_labels(seq([0, 0, 1]), k=2)
        assert bag.values.tolist() == [2 / 3, 1 / 3]

    @pytest.mark.parametrize("n", [1, 7, 100])
    def test_constant_sequence_one_hot(self, n):
        bag = bag_of_labels(seq([5] * n), k=8)
        expected = np.zeros(8)
        expected[5] = 1.0
        assert np.array_equal(bag.values, expected)

    def test_matches_independent_counter(self):
        rng = np.random.default_rng(0)
        labels = rng.integers(0, 1000, size=1500)
        bag = bag_of_labels(seq(labels), k=1000)
        assert bag.values.tolist() == counting_pass(labels.tolist(), 1000)

    def test_empty_sequence_rejected(self):
        with pytest.raises(DataError):
            LabelSequence("u", np.array([], dtype=np.int32))

    def test_label_out_of_range(self):
        with pytest.raises(DataError, match="outside"):
            bag_of_labels(seq([0, 4]), k=4)
        with pytest.raises(DataError, match="outside"):
            bag_of_labels(seq([-1]), k=4)

    @settings(max_examples=100, deadline=None)
    @given(labels=st.lists(st.integers(0, 19), min_size=1, max_size=200), k=st.integers(20, 40))
    def test_basic_properties(self, labels, k):
        bag = bag_of_labels(seq(labels), k)
        assert bag.values.shape == (k,)
        assert np.all(bag.values >= 0)
        assert abs(bag.values.sum() - 1.0) < 1e-9

    @settings(max_examples=60, deadline=None)
    @given(labels=st.lists(st.integers(0, 9), min_size=1, max_size=100), perm_seed=st.integers(0, 99))
    def test_permutation_invariance(self, labels, perm_seed):
        shuffled = list(labels)
        np.random.default_rng(perm_seed).shuffle(shuffled)
        assert np.array_equal(bag_of_labels(seq(labels), 10).values,
                              bag_of_labels(seq(shuffled), 10).values)

    @settings(max_examples=60, deadline=None)
    @given(
        s1=st.lists(st.integers(0, 9), min_size=1, max_size=80),
        s2=st.lists(st.integers(0, 9), min_size=1, max_size=80),
    )
    def test_concatenation_identity(self, s1, s2):
        combined = bag_of_labels(seq(s1 + s2), 10).values
        weighted = (len(s1) * bag_of_labels(seq(s1), 10).values
                    + len(s2) * bag_of_labels(seq(s2), 10).values) / (len(s1) + len(s2))
        assert np.allclose(combined, weighted, atol=1e-12)


class TestBagMatrix:
    def test_stacks_in_order(self):
        bags = [bag_of_labels(seq([i]), 3) for i in range(3)]
        matrix = bag_matrix(bags)
        assert np.array_equal(matrix, np.eye(3))

    def test_mixed_dims_rejected(self):
        with pytest.raises(DataError, match="mixed"):
            bag_matrix([bag_of_labels(seq([0]), 2), bag_of_labels(seq([0]), 3)])

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            bag_matrix([])
