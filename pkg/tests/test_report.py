import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rfcontrast.pipeline import EvalResult
from rfcontrast.report import (accuracy_csv, confusion_csv, normalize_confusion,
                               render_accuracy_table, results_from_json,
                               results_to_json, set_name, write_bundle)

GOLDEN_TEXT = """\
                    Day 1 -> 2              Day 2 -> 1
Source -> Target        CNN     AB    CTL       CNN     AB    CTL
DayA_S1 -> DayB_S1     50.4   57.8   71.9      67.5   46.0   78.8
DayA_S1 -> DayB_S2     49.4   56.8   70.9      66.5   45.0   77.8
"""

GOLDEN_CSV = """\
pair,day1_to_day2_CNN,day1_to_day2_AB,day1_to_day2_CTL,day2_to_day1_CNN,day2_to_day1_AB,day2_to_day1_CTL
DayA_S1 -> DayB_S1,50.4,57.8,71.9,67.5,46.0,78.8
DayA_S1 -> DayB_S2,49.4,56.8,70.9,66.5,45.0,77.8
"""

GOLDEN_CONFUSION = """\
true_device,pred_device,count,fraction
0,0,8,0.800000
0,1,2,0.200000
1,0,1,0.100000
1,1,9,0.900000
"""


def res(src, tgt, model, seed, acc):
    return EvalResult(accuracy=acc, confusion=np.array([[8, 2], [1, 9]]),
                      source_id=src, target_id=tgt, model_kind=model, seed=seed)


def table_one_like_results():
    results = []
    fwd = {"CNN": 0.504, "AB": 0.578, "CTL": 0.719}
    rev = {"CNN": 0.675, "AB": 0.460, "CTL": 0.788}
    for model in ("CNN", "AB", "CTL"):
        for seed in (0, 1):
            results.append(res((0, 0), (1, 0), model, seed, fwd[model]))
            results.append(res((1, 0), (0, 0), model, seed, rev[model]))
            results.append(res((0, 0), (1, 1), model, seed, fwd[model] - 0.01))
            results.append(res((1, 0), (0, 1), model, seed, rev[model] - 0.01))
    return results


class TestNormalizeConfusion:
    def test_definition(self):
        out = normalize_confusion(np.array([[8, 2, 0], [0, 5, 5], [1, 1, 2]]))
        assert out[0].tolist() == [0.8, 0.2, 0.0]

    def test_identity(self):
        assert np.array_equal(normalize_confusion(np.eye(4, dtype=int)), np.eye(4))

    def test_eighty_percent_cell(self):
        # a device whose frames are predicted 80% as another renders as 0.8
        confusion = np.zeros((15, 15), dtype=int)
        confusion[14, 1] = 80
        confusion[14, 14] = 20
        for d in range(14):
            confusion[d, d] = 100
        out = normalize_confusion(confusion)
        assert out[14, 1] == pytest.approx(0.8)

    def test_zero_row_names_device(self):
        confusion = np.eye(3, dtype=int)
        confusion[1] = 0
        with pytest.raises(ValueError, match="device 1"):
            normalize_confusion(confusion)

    @given(seed=st.integers(0, 2**32 - 1), k=st.integers(2, 12))
    @settings(max_examples=40, deadline=None)
    def test_rows_sum_to_one(self, seed, k):
        rng = np.random.default_rng(seed)
        confusion = rng.integers(0, 50, (k, k)) + np.eye(k, dtype=np.int64)
        out = normalize_confusion(confusion)
        np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-9)


class TestAccuracyTable:
    def test_golden_text(self):
        table = render_accuracy_table(table_one_like_results(), (0, 1))
        assert table.to_text() == GOLDEN_TEXT

    def test_golden_csv(self):
        table = render_accuracy_table(table_one_like_results(), (0, 1))
        assert table.to_csv() == GOLDEN_CSV

    def test_structure_rows_by_target_set(self):
        table = render_accuracy_table(table_one_like_results(), (0, 1))
        assert len(table.rows) == 2
        assert all(len(fwd) == 3 and len(rev) == 3 for _, fwd, rev in table.rows)

    def test_percent_formatting(self):
        table = render_accuracy_table(table_one_like_results(), (0, 1))
        assert "71.9" in table.to_csv()

    def test_mean_over_seeds(self):
        results = [res((0, 0), (1, 0), "CNN", 0, 0.5),
                   res((0, 0), (1, 0), "CNN", 1, 0.7),
                   res((1, 0), (0, 0), "CNN", 0, 0.4),
                   res((1, 0), (0, 0), "CNN", 1, 0.4)]
        table = render_accuracy_table(results, (0, 1), models=("CNN",))
        assert table.rows[0][1] == [pytest.approx(60.0)]

    def test_missing_cell_listed(self):
        results = [res((0, 0), (1, 0), "CNN", 0, 0.5),
                   res((1, 0), (0, 0), "AB", 0, 0.4)]
        with pytest.raises(ValueError, match="D2S1 -> D1S1 CNN"):
            render_accuracy_table(results, (0, 1), models=("CNN",))

    def test_empty_results(self):
        with pytest.raises(ValueError):
            render_accuracy_table([], (0, 1))


class TestCsv:
    def test_confusion_golden(self):
        assert confusion_csv(np.array([[8, 2], [1, 9]])) == GOLDEN_CONFUSION

    def test_accuracy_csv_schema(self):
        lines = accuracy_csv(table_one_like_results()).splitlines()
        assert lines[0] == "source,target,model,seed,accuracy"
        assert lines[1] == "D1S1,D2S1,CNN,0,0.504000"

    def test_set_name(self):
        assert set_name((0, 0)) == "D1S1"
        assert set_name((1, 3)) == "D2S4"

    def test_results_json_round_trip(self):
        results = table_one_like_results()
        back = results_from_json(results_to_json(results))
        assert len(back) == len(results)
        for a, b in zip(results, back):
            assert a.accuracy == b.accuracy
            assert np.array_equal(a.confusion, b.confusion)
            assert (a.source_id, a.target_id, a.model_kind, a.seed) == \
                   (b.source_id, b.target_id, b.model_kind, b.seed)


class TestBundle:
    def test_emits_expected_files(self, tmp_path):
        bundle = write_bundle(table_one_like_results(), tmp_path)
        names = {p.name for p in bundle.emitted}
        assert "accuracy.csv" in names
        assert "accuracy_day1_day2.csv" in names
        assert "accuracy_day1_day2.txt" in names
        assert "confusion_D1S1_to_D2S1_CTL.csv" in names
        assert bundle.seeds == (0, 1)

    def test_deterministic_bytes(self, tmp_path):
        write_bundle(table_one_like_results(), tmp_path / "a")
        write_bundle(table_one_like_results(), tmp_path / "b")
        for name in ("accuracy.csv", "accuracy_day1_day2.txt"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_confusion_counts_summed_over_seeds(self, tmp_path):
        bundle = write_bundle(table_one_like_results(), tmp_path)
        text = (tmp_path / "confusion_D1S1_to_D2S1_CNN.csv").read_text()
        assert "0,0,16,0.800000" in text  # two seeds of [[8,2],[1,9]]

    def test_empty_results_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            write_bundle([], tmp_path)


class TestPlots:
    def test_plots_emitted_when_requested(self, tmp_path):
        pytest.importorskip("matplotlib")
        bundle = write_bundle(table_one_like_results(), tmp_path, plots=True)
        names = {p.name for p in bundle.emitted}
        assert "accuracy_bars.png" in names
        assert "confusion_D1S1_to_D2S1_CTL.png" in names

    def test_no_plots_by_default(self, tmp_path):
        bundle = write_bundle(table_one_like_results(), tmp_path)
        assert not any(p.suffix == ".png" for p in bundle.emitted)
