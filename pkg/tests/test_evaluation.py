import numpy as np
import pytest

from adipipe.errors import DataError
from adipipe.evaluation import (
    REGION_NAMES, REGIONS, EvalReport, macro_f1, pool_regions, report_table,
    save_reports, validate_region_map,
)


def naive_macro_f1(gold, pred, label_set):
    """Independent per-class reference: plain loops, percent scale."""
    scores = []
    for label in label_set:
        tp = sum(1 for g, p in zip(gold, pred) if g == label and p == label)
        fp = sum(1 for g, p in zip(gold, pred) if g != label and p == label)
        fn = sum(1 for g, p in zip(gold, pred) if g == label and p != label)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        scores.append(f1)
    return 100.0 * sum(scores) / len(scores)


class TestMacroF1:
    def test_perfect_predictor(self):
        gold = ["a", "b", "c", "a", "b", "c"]
        report = macro_f1(gold, gold, ("a", "b", "c"))
        assert report.macro_f1 == 100.0
        assert report.accuracy == 100.0
        assert np.array_equal(np.diag(report.confusion), [2, 2, 2])

    def test_majority_class_hand_computation(self):
        gold = ["A"] * 90 + ["B"] * 10
        pred = ["A"] * 100
        report = macro_f1(gold, pred, ("A", "B"))
        # precision_A = 0.9, recall_A = 1.0 -> F1_A = 1.8/1.9; F1_B = 0
        expected = 100.0 * (2 * 0.9 * 1.0 / 1.9) / 2
        assert report.macro_f1 == pytest.approx(expected, abs=1e-9)
        assert report.f1[0] == pytest.approx(100.0 * 1.8 / 1.9, abs=1e-9)
        assert report.f1[1] == 0.0

    def test_matches_naive_reference(self):
        rng = np.random.default_rng(0)
        label_set = ("w", "x", "y", "z")
        for _ in range(100):
            n = int(rng.integers(1, 60))
            gold = [label_set[i] for i in rng.integers(0, 4, size=n)]
            pred = [label_set[i] for i in rng.integers(0, 4, size=n)]
            report = macro_f1(gold, pred, label_set)
            assert report.macro_f1 == naive_macro_f1(gold, pred, label_set)

    def test_absent_class_scores_zero_and_still_averages(self):
        gold = ["a", "a"]
        pred = ["a", "a"]
        report = macro_f1(gold, pred, ("a", "b"))
        assert report.f1.tolist() == [100.0, 0.0]
        assert report.macro_f1 == 50.0

    def test_single_class_constant_predictor_floor(self):
        # 17-way label set, every prediction is the same class: the macro
        # score collapses to (one class F1) / 17
        label_set = tuple(f"c{i:02d}" for i in range(17))
        rng = np.random.default_rng(1)
        gold = [label_set[i] for i in rng.integers(0, 17, size=500)]
        pred = [label_set[0]] * 500
        report = macro_f1(gold, pred, label_set)
        assert report.macro_f1 == pytest.approx(report.f1[0] / 17)
        assert report.macro_f1 < 10.0

    def test_confusion_row_sums_are_support(self):
        rng = np.random.default_rng(2)
        label_set = ("a", "b", "c")
        gold = [label_set[i] for i in rng.integers(0, 3, size=40)]
        pred = [label_set[i] for i in rng.integers(0, 3, size=40)]
        report = macro_f1(gold, pred, label_set)
        for i, label in enumerate(label_set):
            assert report.confusion[i].sum() == gold.count(label)
        assert report.confusion.sum() == report.n_samples == 40

    def test_hundred_iff_diagonal(self):
        report = macro_f1(["a", "b"], ["a", "b"], ("a", "b"))
        assert report.macro_f1 == 100.0
        off = macro_f1(["a", "b", "a"], ["a", "b", "b"], ("a", "b"))
        assert off.macro_f1 < 100.0

    def test_average_over_restriction(self):
        gold = ["a", "b", "a", "b"]
        pred = ["a", "b", "a", "a"]
        full = macro_f1(gold, pred, ("a", "b", "c"))
        target = macro_f1(gold, pred, ("a", "b", "c"), average_over=("a", "b"))
        assert target.macro_f1 > full.macro_f1
        assert target.averaged_over == ("a", "b")

    def test_length_mismatch(self):
        with pytest.raises(DataError):
            macro_f1(["a"], ["a", "b"], ("a", "b"))

    def test_unknown_label(self):
        with pytest.raises(DataError):
            macro_f1(["zzz"], ["a"], ("a", "b"))


class TestRegionPooling:
    def test_map_is_total_with_expected_sizes(self):
        validate_region_map(REGIONS)

    def test_named_examples(self):
        assert pool_regions(["KSA"]) == ["Gulf"]
        assert pool_regions(["SYR"]) == ["Levantine"]
        assert pool_regions(["SUD"]) == ["Egypt"]
        assert pool_regions(["MAU"]) == ["NorthAfrica"]

    def test_pooling_preserves_correctness(self):
        rng = np.random.default_rng(3)
        codes = list(REGIONS)
        gold = [codes[i] for i in rng.integers(0, 17, size=200)]
        pred = [codes[i] for i in rng.integers(0, 17, size=200)]
        pooled_gold = pool_regions(gold)
        pooled_pred = pool_regions(pred)
        for g, p, pg, pp in zip(gold, pred, pooled_gold, pooled_pred):
            if g == p:
                assert pg == pp

    def test_pooling_never_decreases_accuracy(self):
        rng = np.random.default_rng(4)
        codes = list(REGIONS)
        for _ in range(100):
            n = int(rng.integers(1, 50))
            gold = [codes[i] for i in rng.integers(0, 17, size=n)]
            pred = [codes[i] for i in rng.integers(0, 17, size=n)]
            fine = macro_f1(gold, pred, tuple(sorted(set(codes)))).accuracy
            coarse = macro_f1(pool_regions(gold), pool_regions(pred), REGION_NAMES).accuracy
            assert coarse >= fine - 1e-12

    def test_msa_rejected_without_passthrough(self):
        with pytest.raises(DataError, match="MSA"):
            pool_regions(["MSA"])
        assert pool_regions(["MSA", "KSA"], msa_passthrough=True) == ["MSA", "Gulf"]

    def test_unmapped_label(self):
        with pytest.raises(DataError, match="region"):
            pool_regions(["XYZ"])


class TestReportTable:
    def small_report(self, score_pairs, n):
        gold, pred = zip(*score_pairs)
        return macro_f1(list(gold), list(pred), ("a", "b"))

    def test_single_row(self):
        report = self.small_report([("a", "a"), ("b", "b")], 2)
        table = report_table({"baseline": {"dev": report}})
        lines = table.strip().splitlines()
        assert lines[0] == "| Model | dev |"
        assert len(lines) == 3
        assert "100.00 (n=2)" in lines[2]

    def test_two_reports_show_both_n(self):
        r1 = self.small_report([("a", "a")] * 3, 3)
        r2 = self.small_report([("a", "a"), ("b", "a")], 2)
        table = report_table({"m": {"d1": r1, "d2": r2}})
        assert "(n=3)" in table and "(n=2)" in table

    def test_insertion_order_and_determinism(self):
        r = self.small_report([("a", "a"), ("b", "b")], 2)
        reports = {"zeta": {"later": r, "earlier": r}, "alpha": {"earlier": r}}
        first = report_table(reports)
        second = report_table(reports)
        assert first == second
        lines = first.strip().splitlines()
        assert lines[0] == "| Model | later | earlier |"
        assert lines[2].startswith("| zeta")
        assert lines[3].startswith("| alpha")

    def test_missing_cell_dashed(self):
        r = self.small_report([("a", "a")], 1)
        table = report_table({"m1": {"d1": r}, "m2": {}})
        assert "| m2 | --- |" in table

    def test_save_reports_jsonl(self, tmp_path):
        r = self.small_report([("a", "a"), ("b", "b")], 2)
        path = tmp_path / "reports.jsonl"
        save_reports({"m": {"d": r}}, path)
        import json
        row = json.loads(path.read_text().splitlines()[0])
        assert row["model"] == "m" and row["dataset"] == "d"
        assert row["macro_f1"] == 100.0
        assert row["per_class"]["a"]["support"] == 1
