import json

import numpy as np
import pytest

from crowdpool.core import Dataset, ValidationError
from crowdpool.evaluation import (
    EvalReport,
    entropy_report,
    evaluate,
    surface_examples,
    write_histogram_data,
)

from conftest import make_item, random_dataset


class StubModel:
    """Fixed-output stand-in exposing the predict_proba contract."""

    def __init__(self, table):
        self.table = np.asarray(table, dtype=float)

    def predict_proba(self, X):
        return self.table[: X.shape[0]]


class UniformModel:
    def predict_proba(self, X):
        d = 2
        return np.full((X.shape[0], d), 1.0 / d)


def featured_dataset(counts_list, d=None):
    d = d or len(counts_list[0])
    items = [make_item(i, c, features=[float(i), 0.0])
             for i, c in enumerate(counts_list)]
    return Dataset(items, [f"l{j}" for j in range(d)], split="test")


class TestEvaluate:
    def test_exact_predictions_score_near_zero(self):
        ds = featured_dataset([[3, 1], [1, 3], [2, 2]])
        model = StubModel(ds.label_matrix())
        report = evaluate(model, ds)
        assert report.mean_kl < 1e-3
        assert report.accuracy == 1.0
        assert report.split == "test"

    def test_uniform_predictions_on_point_masses(self):
        ds = featured_dataset([[4, 0]] * 6)
        report = evaluate(UniformModel(), ds)
        assert report.mean_kl == pytest.approx(np.log(2), abs=1e-3)
        # uniform argmax ties to index 0, matching the true argmax
        assert report.accuracy == 1.0

    def test_per_item_recounts_reproduce_the_scalars(self):
        ds = featured_dataset([[3, 1], [0, 4], [2, 2], [1, 2, 1][:2]])
        model = StubModel([[0.6, 0.4], [0.5, 0.5], [0.1, 0.9], [0.9, 0.1]])
        report = evaluate(model, ds)
        assert len(report.per_item) == len(ds)
        assert report.mean_kl == pytest.approx(
            np.mean([row[1] for row in report.per_item]), abs=1e-9)
        assert report.accuracy == pytest.approx(
            np.mean([row[2] == row[3] for row in report.per_item]), abs=1e-9)

    def test_repeated_evaluation_is_identical(self):
        ds = featured_dataset([[3, 1], [1, 3]])
        model = StubModel([[0.6, 0.4], [0.45, 0.55]])
        a = evaluate(model, ds)
        b = evaluate(model, ds)
        assert a.per_item == b.per_item and a.mean_kl == b.mean_kl

    def test_scores_against_empirical_not_pooled(self):
        # replacing the reference labels with pooled ones must change the
        # score; guards against silently evaluating on training targets
        ds = featured_dataset([[4, 0], [0, 4]])
        pooled = featured_dataset([[2, 2], [2, 2]])
        model = StubModel([[0.5, 0.5], [0.5, 0.5]])
        raw_score = evaluate(model, ds).mean_kl
        pooled_score = evaluate(model, pooled).mean_kl
        assert abs(raw_score - pooled_score) > 0.1

    def test_empty_split_errors(self):
        ds = Dataset([], ["a", "b"], split="test")
        with pytest.raises(ValidationError):
            evaluate(UniformModel(), ds)

    def test_json_and_csv_outputs(self, tmp_path):
        ds = featured_dataset([[3, 1], [1, 3]])
        report = evaluate(StubModel(ds.label_matrix()), ds,
                          fingerprint={"seed": 7})
        doc = json.loads(report.to_json())
        assert doc["fingerprint"] == {"seed": 7}
        assert len(doc["per_item"]) == 2
        path = tmp_path / "eval.csv"
        report.write_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "id,kl,true_argmax,pred_argmax"
        assert len(lines) == 3


class TestEntropyReport:
    def test_point_masses_land_in_the_bottom_bin(self):
        ds = featured_dataset([[4, 0]] * 5)
        rep = entropy_report(ds)
        assert rep["histogram"][0] == 5
        assert sum(rep["histogram"]) == 5

    def test_uniform_items_land_in_the_top_bin(self):
        ds = featured_dataset([[2, 2]] * 5)
        rep = entropy_report(ds)
        assert rep["histogram"][-1] == 5

    def test_bin_counts_match_direct_recount(self):
        ds = random_dataset(n=60, d=4, seed=11)
        rep = entropy_report(ds)
        from crowdpool.core import empirical_distribution, item_entropy
        ent = [item_entropy(empirical_distribution(it)) for it in ds.items]
        counts, _ = np.histogram(ent, bins=20, range=(0.0, np.log(4)))
        assert rep["histogram"] == counts.tolist()
        assert rep["range"] == [0.0, pytest.approx(np.log(4))]

    def test_extreme_lists_are_ordered_and_clamped(self):
        ds = random_dataset(n=12, d=4, seed=12)
        rep = entropy_report(ds, k=100)
        assert len(rep["lowest"]) == 12 and len(rep["highest"]) == 12
        low_h = [e[1] for e in rep["lowest"]]
        high_h = [e[1] for e in rep["highest"]]
        assert low_h == sorted(low_h)
        assert high_h == sorted(high_h, reverse=True)

    def test_empty_dataset_errors(self):
        with pytest.raises(ValidationError):
            entropy_report(Dataset([], ["a", "b"]))

    def test_histogram_data_file(self, tmp_path):
        ds = featured_dataset([[4, 0], [2, 2]])
        rep = entropy_report(ds)
        path = tmp_path / "entropy.dat"
        write_histogram_data(rep, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0].startswith("#")
        assert len(lines) == 21  # header + 20 bins


class TestSurfaceExamples:
    def _report(self):
        per_item = [("a", 0.5, 0, 1), ("b", 0.1, 1, 1), ("c", 0.3, 0, 0)]
        return EvalReport(split="test", mean_kl=0.3, accuracy=2 / 3,
                          per_item=per_item, entropy_histogram=[])

    def test_zero_k_returns_empty(self):
        assert surface_examples(self._report(), 0, "lowest_kl") == []

    def test_lowest_kl_sorts_ascending(self):
        rows = surface_examples(self._report(), 3, "lowest_kl")
        assert [r[0] for r in rows] == ["b", "c", "a"]

    def test_disagreeing_fixture_is_found(self):
        rows = surface_examples(self._report(), 1, "disagree_argmax")
        assert rows == [("a", 0.5, 0, 1)]

    def test_oversized_k_clamps_with_warning(self):
        with pytest.warns(UserWarning, match="clamping"):
            rows = surface_examples(self._report(), 99, "lowest_kl")
        assert len(rows) == 3

    def test_unknown_mode_errors(self):
        with pytest.raises(ValidationError):
            surface_examples(self._report(), 1, "highest_entropy")

    def test_disagree_sample_is_seeded(self):
        per_item = [(f"i{j}", 0.2, 0, 1) for j in range(10)]
        report = EvalReport(split=None, mean_kl=0.2, accuracy=0.0,
                            per_item=per_item, entropy_histogram=[])
        a = surface_examples(report, 4, "disagree_argmax", seed=3)
        b = surface_examples(report, 4, "disagree_argmax", seed=3)
        assert a == b
