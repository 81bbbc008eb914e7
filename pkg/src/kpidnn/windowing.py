"""Three-subsequence window extraction and min-max normalization.

For a pending timestamp ``t`` the joint sequence is

    [X(t-k-W) .. X(t+k-W), X(t-k-D) .. X(t+k-D), X(t-k) .. X(t)]

with ``W = 10080`` (one week) and ``D = 1440`` (one day), giving ``5k + 3``
values. The pending point is the last element.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_rows
from .core import MINUTES_PER_DAY, MINUTES_PER_WEEK, Label, TimeSeries, WindowSample
from .exceptions import DataError, LengthError, MissingData, OutOfRange, ParamError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WindowSpec:
    k: int = 180
    day_offset: int = MINUTES_PER_DAY
    week_offset: int = MINUTES_PER_WEEK

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ParamError(f"k must be a positive integer, got {self.k!r}")
        if self.day_offset != MINUTES_PER_DAY or self.week_offset != MINUTES_PER_WEEK:
            raise ParamError("day/week offsets are fixed at 1440 and 10080 minutes")

    @property
    def width(self) -> int:
        return 5 * self.k + 3

    def first_valid(self, series: TimeSeries) -> int:
        """Earliest pending timestamp whose window fits inside ``series``."""
        return series.start + self.week_offset + self.k

    def last_valid(self, series: TimeSeries) -> int:
        return min(series.end, series.end - self.k + self.day_offset)


def normalize(raw_joint):
    """Min-max scale a joint vector.

    Returns ``(normalized, a, b, degenerate)`` where ``a``/``b`` are the raw
    minimum and maximum. A constant input maps to all zeros with
    ``degenerate=True``.
    """
    raw = np.asarray(raw_joint, dtype=float)
    if raw.ndim != 1 or raw.size == 0:
        raise LengthError("normalize needs a non-empty 1-D vector")
    a = float(raw.min())
    b = float(raw.max())
    if b > a:
        return (raw - a) / (b - a), a, b, False
    return np.zeros_like(raw), a, b, True


def _index_ranges(t: int, spec: WindowSpec):
    k = spec.k
    return (
        (t - spec.week_offset - k, t - spec.week_offset + k),
        (t - spec.day_offset - k, t - spec.day_offset + k),
        (t - k, t),
    )


def raw_joint(series: TimeSeries, t: int, spec: WindowSpec) -> np.ndarray:
    """Unnormalized joint sequence for pending timestamp ``t``."""
    t = int(t)
    blocks = []
    for lo, hi in _index_ranges(t, spec):
        if lo < series.start or hi > series.end:
            raise OutOfRange(
                f"{series.id}: window for t={t} needs [{lo}, {hi}] but series covers "
                f"[{series.start}, {series.end}]"
            )
        blocks.append(series.values[lo - series.start: hi - series.start + 1])
    joint = np.concatenate(blocks)
    if np.isnan(joint).any():
        raise MissingData(f"{series.id}: window for t={t} overlaps a missing point")
    return joint


def extract(series: TimeSeries, t: int, spec: WindowSpec | None = None,
            label=None) -> WindowSample:
    spec = spec or WindowSpec()
    joint, a, b, degenerate = normalize(raw_joint(series, t, spec))
    return WindowSample(
        k=spec.k, joint=joint, raw_min=a, raw_max=b, degenerate=degenerate,
        source_id=series.id, pending_timestamp=int(t),
        label=None if label is None else Label(int(label)),
    )


@dataclass(frozen=True)
class ExtractionSummary:
    samples: tuple
    skipped: int
    skipped_timestamps: tuple = ()


def sliding_extract(series: TimeSeries, t_start: int, t_end: int, stride: int = 1,
                    spec: WindowSpec | None = None) -> ExtractionSummary:
    """Extract every ``stride``-th window in ``[t_start, t_end]``, skipping invalid ones."""
    spec = spec or WindowSpec()
    if stride < 1:
        raise ParamError(f"stride must be >= 1, got {stride}")
    if t_start > t_end:
        raise ParamError(f"t_start ({t_start}) > t_end ({t_end})")
    samples, skipped = [], []
    for t in range(int(t_start), int(t_end) + 1, int(stride)):
        try:
            samples.append(extract(series, t, spec))
        except DataError:
            skipped.append(t)
    if skipped:
        logger.debug("%s: skipped %d of %d timestamps", series.id, len(skipped),
                     len(samples) + len(skipped))
    return ExtractionSummary(tuple(samples), len(skipped), tuple(skipped))


class MinMaxWindowScaler(TransformerMixin, BaseEstimator):
    """Row-wise min-max scaling of raw joint windows; stateless.

    Constant rows become zeros. Useful inside a pipeline whose input rows are
    raw ``5k+3`` windows.
    """

    def __init__(self, k=None):
        self.k = k

    def fit(self, X, y=None):
        X = check_rows(X, k=self.k)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        X = check_rows(X, k=self.k)
        lo = X.min(axis=1, keepdims=True)
        span = X.max(axis=1, keepdims=True) - lo
        safe = np.where(span > 0, span, 1.0)
        return np.where(span > 0, (X - lo) / safe, 0.0)
