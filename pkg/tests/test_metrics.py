from fractions import Fraction

import pytest

from kpidnn import metrics
from kpidnn.core import ConfusionMatrix, Label
from kpidnn.exceptions import ReportConsistencyError

A, N = Label.ANOMALY, Label.NORMAL


def test_accumulate_maps_pairs_to_cells():
    pairs = [(N, N), (N, A), (A, N), (A, A), (A, A)]
    assert metrics.accumulate(pairs) == ConfusionMatrix(tp=1, fn=1, fp=1, tn=2)
    with pytest.raises(ValueError):
        metrics.accumulate([])


def test_scores_use_the_anomaly_class():
    recall, precision, f1 = metrics.scores(ConfusionMatrix(10524, 702, 1331, 3178))
    r, p = Fraction(3178, 3178 + 1331), Fraction(3178, 3178 + 702)
    assert recall == pytest.approx(float(r), abs=1e-15)
    assert precision == pytest.approx(float(p), abs=1e-15)
    assert f1 == pytest.approx(float(2 * p * r / (p + r)), abs=1e-15)


@pytest.mark.parametrize("counts, printed", [
    ((10524, 702, 1331, 3178), (70.5, 81.9, 75.8)),
    ((11100, 126, 852, 3657), (81.1, 96.7, 88.2)),
])
def test_fully_consistent_reference_rows(counts, printed):
    got = metrics.scores(ConfusionMatrix(*counts))
    for value, expected in zip(got, printed):
        assert abs(100 * value - expected) <= 0.05


def test_empty_denominators():
    # no anomalies at all, nothing flagged
    assert metrics.scores(ConfusionMatrix(5, 0, 0, 0)) == (1.0, 1.0, 1.0)
    # anomalies present but none caught, nothing flagged
    assert metrics.scores(ConfusionMatrix(5, 0, 3, 0)) == (0.0, 1.0, 0.0)
    # everything flagged wrongly
    assert metrics.scores(ConfusionMatrix(0, 4, 0, 0)) == (1.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        metrics.scores(ConfusionMatrix())


def test_report_round_trip_and_text():
    report = metrics.report([("DNN", ConfusionMatrix(11100, 126, 852, 3657)),
                             ("3-Sigma", ConfusionMatrix(10524, 702, 1331, 3178))])
    text = report.to_text()
    assert text.splitlines()[0].split() == ["Algorithms", "TP", "FN", "FP", "TN", "Recall",
                                            "Precision", "F1-Score"]
    assert "81.1%" in text and "96.7%" in text and "88.2%" in text
    again = metrics.read_report_csv(report.to_csv())
    assert [r.name for r in again.rows] == ["DNN", "3-Sigma"]
    assert again.rows[0].matrix == report.rows[0].matrix
    assert again.rows[0].f1 == pytest.approx(report.rows[0].f1, abs=1e-6)


def test_inconsistent_row_is_rejected():
    row = metrics.EvalRow("bad", ConfusionMatrix(1, 1, 1, 1), 0.5, 0.5, 0.9)
    with pytest.raises(ReportConsistencyError):
        row.check()
    with pytest.raises(ReportConsistencyError):
        metrics.EvalReport((row,))


def test_percent_rounds_to_one_decimal():
    assert metrics.percent(0.70481) == "70.5%"
    assert metrics.percent(1.0) == "100.0%"
