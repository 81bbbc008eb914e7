"""Confusion matrices and anomaly-oriented recall / precision / F1.

Anomaly is the Negative class, so the detection metrics are built from TN:
recall = TN / (TN + FP), precision = TN / (TN + FN).
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable

from .core import ConfusionMatrix, Label
from .exceptions import ReportConsistencyError

CSV_COLUMNS = ("name", "tp", "fn", "fp", "tn", "recall", "precision", "f1")
# allowed gap between stored F1 and F1 recomputed from the rendered percentages
CONSISTENCY_PP = 0.1


def accumulate(pairs: Iterable) -> ConfusionMatrix:
    """Count ``(true, predicted)`` label pairs into a matrix."""
    tp = fn = fp = tn = 0
    seen = 0
    for true, pred in pairs:
        true, pred = Label(int(true)), Label(int(pred))
        seen += 1
        if true == Label.NORMAL:
            if pred == Label.NORMAL:
                tp += 1
            else:
                fn += 1
        elif pred == Label.NORMAL:
            fp += 1
        else:
            tn += 1
    if not seen:
        raise ValueError("accumulate needs at least one pair")
    return ConfusionMatrix(tp, fn, fp, tn)


def scores(m: ConfusionMatrix) -> tuple[float, float, float]:
    """``(recall, precision, f1)``.

    Empty denominators: recall is 1 when there were no anomalies, precision
    is 1 when nothing was flagged, F1 is 0 when precision + recall is 0.
    """
    if m.total < 1:
        raise ValueError("confusion matrix is empty")
    recall = m.tn / (m.tn + m.fp) if m.tn + m.fp else 1.0
    precision = m.tn / (m.tn + m.fn) if m.tn + m.fn else 1.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return recall, precision, f1


@dataclass(frozen=True)
class EvalRow:
    name: str
    matrix: ConfusionMatrix
    recall: float
    precision: float
    f1: float

    @classmethod
    def from_matrix(cls, name: str, matrix: ConfusionMatrix) -> "EvalRow":
        return cls(name, matrix, *scores(matrix))

    def check(self) -> None:
        """Raise if F1 recomputed from the one-decimal percentages drifts from the stored F1."""
        p = round(100 * self.precision, 1)
        r = round(100 * self.recall, 1)
        f1 = 2 * p * r / (p + r) if p + r else 0.0
        if abs(f1 - 100 * self.f1) > CONSISTENCY_PP:
            raise ReportConsistencyError(
                f"{self.name}: F1 {100 * self.f1:.2f}% disagrees with P={p}% R={r}% (-> {f1:.2f}%)"
            )


@dataclass(frozen=True)
class EvalReport:
    rows: tuple

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))
        for row in self.rows:
            row.check()

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.rows:
            m = r.matrix
            writer.writerow([r.name, m.tp, m.fn, m.fp, m.tn,
                             f"{r.recall:.6f}", f"{r.precision:.6f}", f"{r.f1:.6f}"])
        return buf.getvalue()

    def to_text(self) -> str:
        header = ("Algorithms", "TP", "FN", "FP", "TN", "Recall", "Precision", "F1-Score")
        body = [
            (r.name, str(r.matrix.tp), str(r.matrix.fn), str(r.matrix.fp), str(r.matrix.tn),
             percent(r.recall), percent(r.precision), percent(r.f1))
            for r in self.rows
        ]
        widths = [max(len(row[i]) for row in [header, *body]) for i in range(len(header))]
        lines = []
        for row in [header, *body]:
            cells = [row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
            lines.append("  ".join(cells))
        lines.insert(1, "  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"


def percent(value: float) -> str:
    return f"{100 * value:.1f}%"


def report(rows: Iterable) -> EvalReport:
    """Build a report from ``(name, ConfusionMatrix)`` pairs."""
    rows = [EvalRow.from_matrix(name, m) for name, m in rows]
    if not rows:
        raise ValueError("report needs at least one row")
    return EvalReport(tuple(rows))


def read_report_csv(text: str) -> EvalReport:
    reader = csv.DictReader(io.StringIO(text))
    rows = []
    for rec in reader:
        m = ConfusionMatrix(int(rec["tp"]), int(rec["fn"]), int(rec["fp"]), int(rec["tn"]))
        rows.append(EvalRow(rec["name"], m, float(rec["recall"]), float(rec["precision"]),
                            float(rec["f1"])))
    return EvalReport(tuple(rows))
