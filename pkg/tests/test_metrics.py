"""Metrics, curve CSVs, and the grouped report table."""

import os
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forgegate.curves import LossCurve
from forgegate.errors import ContractError
from forgegate.metrics import (
    ConfusionCounts,
    MetricsReport,
    compute_metrics,
    emit_curves,
    emit_table,
    load_curve,
    load_report,
    save_report,
)

GOLDEN = os.path.join(os.path.dirname(__file__), "data", "golden_table.txt")

# (tp, fp, tn, fn) with accuracy and precision worked out by hand
CONFUSION_FIXTURES = [
    ((50, 10, 20, 20), Fraction(70, 100), Fraction(50, 60)),
    ((10, 0, 10, 0), Fraction(1, 1), Fraction(1, 1)),
    ((0, 0, 10, 10), Fraction(1, 2), None),
    ((1, 1, 1, 1), Fraction(1, 2), Fraction(1, 2)),
    ((3, 2, 4, 1), Fraction(7, 10), Fraction(3, 5)),
    ((0, 5, 5, 0), Fraction(1, 2), Fraction(0, 1)),
    ((7, 3, 0, 0), Fraction(7, 10), Fraction(7, 10)),
    ((0, 0, 1, 0), Fraction(1, 1), None),
    ((2, 8, 85, 5), Fraction(87, 100), Fraction(1, 5)),
    ((33, 11, 44, 12), Fraction(77, 100), Fraction(3, 4)),
]


def predictions_for(tp, fp, tn, fn):
    preds = [1] * tp + [1] * fp + [0] * tn + [0] * fn
    labels = [1] * tp + [0] * fp + [0] * tn + [1] * fn
    return preds, labels


class TestComputeMetrics:
    def test_all_correct(self):
        report = compute_metrics([1, 0, 1, 0], [1, 0, 1, 0])
        assert report.accuracy == 1.0
        assert report.precision == 1.0

    @pytest.mark.parametrize("counts,accuracy,precision", CONFUSION_FIXTURES)
    def test_fixed_confusion_fixtures(self, counts, accuracy, precision):
        tp, fp, tn, fn = counts
        report = compute_metrics(*predictions_for(tp, fp, tn, fn))
        assert (report.counts.tp, report.counts.fp, report.counts.tn, report.counts.fn) == counts
        assert report.accuracy == float(accuracy)
        if precision is None:
            assert report.precision is None
        else:
            assert report.precision == float(precision)

    def test_metric_identities_hold_in_integer_arithmetic(self):
        for (tp, fp, tn, fn), _, _ in CONFUSION_FIXTURES:
            report = compute_metrics(*predictions_for(tp, fp, tn, fn))
            c = report.counts
            assert Fraction(report.accuracy).limit_denominator(10**9) == Fraction(
                c.tp + c.tn, c.total
            )
            if report.precision is not None and c.tp + c.fp:
                assert Fraction(report.precision).limit_denominator(10**9) == Fraction(
                    c.tp, c.tp + c.fp
                )

    def test_positive_class_swap_symmetry(self):
        # relabeling the positive class maps precision to tn/(tn+fn)
        preds, labels = predictions_for(50, 10, 20, 20)
        original = compute_metrics(preds, labels)
        swapped = compute_metrics([1 - p for p in preds], [1 - y for y in labels])
        c = original.counts
        assert swapped.precision == pytest.approx(c.tn / (c.tn + c.fn))
        assert swapped.accuracy == original.accuracy

    def test_empty_positive_set_is_absent_not_zero(self):
        report = compute_metrics([0, 0], [1, 0])
        assert report.precision is None

    def test_length_mismatch(self):
        with pytest.raises(ContractError):
            compute_metrics([1, 0], [1])

    def test_empty_inputs(self):
        with pytest.raises(ContractError):
            compute_metrics([], [])

    @given(
        st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=60)
    )
    @settings(max_examples=60, deadline=None)
    def test_identities_property(self, pairs):
        preds = [p for p, _ in pairs]
        labels = [y for _, y in pairs]
        report = compute_metrics(preds, labels)
        c = report.counts
        assert c.total == len(pairs)
        assert report.accuracy * c.total == pytest.approx(c.tp + c.tn)
        if report.precision is None:
            assert c.tp + c.fp == 0
        else:
            assert report.precision * (c.tp + c.fp) == pytest.approx(c.tp)

    def test_negative_counts_rejected(self):
        with pytest.raises(ContractError):
            ConfusionCounts(tp=-1, fp=0, tn=0, fn=0)

    def test_report_json_roundtrip(self, tmp_path):
        report = compute_metrics(*predictions_for(3, 2, 4, 1), model_name="m", dataset_name="d")
        path = str(tmp_path / "r.json")
        save_report(report, path)
        loaded = load_report(path)
        assert loaded == report


class TestCurves:
    def test_one_epoch_curve_two_lines(self, tmp_path):
        curve = LossCurve.gan()
        curve.append(1, 0.5, 0.25)
        path = str(tmp_path / "c.csv")
        emit_curves(curve, path)
        lines = open(path).read().splitlines()
        assert lines[0] == "epoch,g_loss,d_loss"
        assert len(lines) == 2

    def test_roundtrip_with_nine_significant_digits(self, tmp_path):
        curve = LossCurve.gan()
        values = [(1, 0.6931471805599453, 1.234567891), (2, 0.1, 3.0), (3, 12345.6789, 2e-7)]
        for row in values:
            curve.append(*row)
        path = str(tmp_path / "c.csv")
        emit_curves(curve, path)
        loaded = load_curve(path)
        assert loaded.columns == curve.columns
        for (e1, g1, d1), (e2, g2, d2) in zip(loaded.rows, curve.rows):
            assert e1 == e2
            assert format(g1, ".9g") == format(g2, ".9g")
            assert format(d1, ".9g") == format(d2, ".9g")
        # re-emission is byte-identical (formatting fixed point)
        path2 = str(tmp_path / "c2.csv")
        emit_curves(loaded, path2)
        assert open(path).read() == open(path2).read()

    def test_700_epoch_run_gives_701_lines(self, tmp_path):
        curve = LossCurve.gan()
        for epoch in range(1, 701):
            curve.append(epoch, 1.0 + epoch * 1e-3, 0.5)
        path = str(tmp_path / "long.csv")
        emit_curves(curve, path)
        assert len(open(path).read().splitlines()) == 701

    def test_validation_curve_header(self, tmp_path):
        curve = LossCurve.validation()
        curve.append(1, 0.9)
        path = str(tmp_path / "v.csv")
        emit_curves(curve, path)
        assert open(path).read().splitlines()[0] == "epoch,val_loss"

    def test_empty_curve_rejected(self, tmp_path):
        with pytest.raises(ContractError):
            emit_curves(LossCurve.gan(), str(tmp_path / "x.csv"))

    def test_curve_invariants(self):
        curve = LossCurve.gan()
        curve.append(1, 1.0, 1.0)
        with pytest.raises(ContractError):
            curve.append(1, 1.0, 1.0)
        with pytest.raises(ContractError):
            curve.append(2, float("nan"), 1.0)
        fresh = LossCurve.gan()
        with pytest.raises(ContractError):
            fresh.append(5, 1.0, 1.0)


class TestTable:
    def test_single_report_row_format(self, tmp_path):
        report = MetricsReport("ResNeXt", "gan-synth", 0.7, 50 / 60, ConfusionCounts(50, 10, 20, 20))
        text = emit_table([report])
        assert "0.7000  0.8333" in text

    def test_two_datasets_two_group_headers(self):
        reports = [
            MetricsReport("a", "set-one", 0.5, 0.5, ConfusionCounts(1, 1, 1, 1)),
            MetricsReport("b", "set-two", 0.5, 0.5, ConfusionCounts(1, 1, 1, 1)),
        ]
        text = emit_table(reports)
        assert "[set-one]" in text and "[set-two]" in text
        assert text.index("[set-one]") < text.index("[set-two]")

    def test_matches_golden_file_byte_for_byte(self, tmp_path):
        reports = [
            MetricsReport("ResNeXt-desk", "gan-synth", 0.7, 50 / 60, ConfusionCounts(50, 10, 20, 20)),
            MetricsReport("baseline-mean", "gan-synth", 0.5, None, ConfusionCounts(0, 0, 50, 50)),
            MetricsReport("ResNeXt-desk", "real-holdout", 0.6188, 0.7653, ConfusionCounts(1, 1, 1, 1)),
        ]
        out = str(tmp_path / "table.txt")
        emit_table(reports, out)
        assert open(out, "rb").read() == open(GOLDEN, "rb").read()

    def test_absent_precision_renders_na(self):
        report = MetricsReport("m", "d", 1.0, None, ConfusionCounts(0, 0, 2, 0))
        assert "n/a" in emit_table([report])

    def test_empty_reports_rejected(self):
        with pytest.raises(ContractError):
            emit_table([])
