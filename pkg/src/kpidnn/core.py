"""Domain types: raw series, labels, normalized windows, datasets and confusion matrices.

All containers are frozen; array fields are copied and marked read-only on
construction so instances can be shared between workers.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Optional, Sequence

import numpy as np

from .exceptions import DataError, LengthError

MINUTES_PER_DAY = 1440
MINUTES_PER_WEEK = 10080

MISSING = np.nan
"""Marker for an absent raw point. Windows touching one are rejected."""


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


class Label(IntEnum):
    ANOMALY = 0
    NORMAL = 1

    @classmethod
    def parse(cls, value) -> "Label":
        """Accept the codes 0/1 (int or string) or the member names."""
        text = str(value).strip()
        if text.upper() in cls.__members__:
            return cls[text.upper()]
        if text in ("0", "1"):
            return cls(int(text))
        raise ValueError(f"not a label: {value!r}")


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Minute-resolution series; point ``i`` sits at timestamp ``start + i``."""

    id: str
    start: int
    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values)
        if values.ndim != 1 or values.size < 1:
            raise LengthError("a time series needs at least one point")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "start", int(self.start))

    def __len__(self):
        return self.values.size

    @property
    def end(self) -> int:
        """Timestamp of the last point (inclusive)."""
        return self.start + self.values.size - 1

    @property
    def timestamps(self) -> np.ndarray:
        return np.arange(self.start, self.end + 1, dtype=np.int64)

    def __eq__(self, other):
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return (
            self.id == other.id
            and self.start == other.start
            and np.array_equal(self.values, other.values, equal_nan=True)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class WindowSample:
    """A normalized joint window ``[last week, yesterday, today]`` for one pending point."""

    k: int
    joint: np.ndarray
    raw_min: float
    raw_max: float
    degenerate: bool
    source_id: str = ""
    pending_timestamp: int = -1
    label: Optional[Label] = None

    def __post_init__(self):
        object.__setattr__(self, "joint", _frozen(self.joint))
        if self.label is not None:
            object.__setattr__(self, "label", Label(int(self.label)))

    @property
    def pending_value(self) -> float:
        return float(self.joint[-1])

    def with_label(self, label) -> "WindowSample":
        return WindowSample(
            self.k, self.joint, self.raw_min, self.raw_max, self.degenerate,
            self.source_id, self.pending_timestamp, Label(int(label)),
        )

    def denormalize(self) -> np.ndarray:
        return self.joint * (self.raw_max - self.raw_min) + self.raw_min


def validate_window(sample: WindowSample) -> bool:
    """True iff every WindowSample invariant holds. Never raises."""
    try:
        k = int(sample.k)
        joint = np.asarray(sample.joint, dtype=float)
    except (TypeError, ValueError):
        return False
    if k < 1 or joint.ndim != 1 or joint.size != 5 * k + 3:
        return False
    if not np.all(np.isfinite(joint)):
        return False
    if sample.degenerate:
        return sample.raw_max == sample.raw_min and not np.any(joint)
    return bool(
        sample.raw_max > sample.raw_min
        and joint.min() == 0.0
        and joint.max() == 1.0
    )


@dataclass(frozen=True)
class Dataset:
    k: int
    samples: tuple = field(default_factory=tuple)

    def __post_init__(self):
        samples = tuple(self.samples)
        width = 5 * self.k + 3
        for i, s in enumerate(samples):
            if s.label is None:
                raise DataError(f"sample {i} carries no label")
            if s.k != self.k or s.joint.size != width:
                raise DataError(f"sample {i} has k={s.k}, expected {self.k}")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return len(self.samples)

    @property
    def X(self) -> np.ndarray:
        if not self.samples:
            return np.empty((0, 5 * self.k + 3))
        return np.stack([s.joint for s in self.samples])

    @property
    def y(self) -> np.ndarray:
        return np.array([int(s.label) for s in self.samples], dtype=np.int64)

    @property
    def degenerate(self) -> np.ndarray:
        return np.array([s.degenerate for s in self.samples], dtype=bool)

    def counts(self) -> tuple[int, int]:
        """(anomaly count, normal count)."""
        y = self.y
        return int(np.sum(y == Label.ANOMALY)), int(np.sum(y == Label.NORMAL))

    @classmethod
    def from_arrays(cls, X, y, k: int, ids: Sequence[str] | None = None,
                    timestamps: Iterable[int] | None = None) -> "Dataset":
        """Wrap already-normalized rows. Degeneracy is inferred from all-equal rows."""
        X = np.asarray(X, dtype=float)
        n = X.shape[0]
        ids = list(ids) if ids is not None else [""] * n
        ts = list(timestamps) if timestamps is not None else list(range(n))
        samples = []
        for row, label, sid, t in zip(X, y, ids, ts):
            degenerate = bool(row.max() == row.min())
            samples.append(WindowSample(
                k, row, 0.0, 0.0 if degenerate else 1.0, degenerate, sid, int(t), Label(int(label))
            ))
        return cls(k, tuple(samples))


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with Positive = Normal and Negative = Anomaly.

    ``tp``: normal predicted normal, ``fn``: normal predicted anomaly,
    ``fp``: anomaly predicted normal, ``tn``: anomaly predicted anomaly.
    """

    tp: int = 0
    fn: int = 0
    fp: int = 0
    tn: int = 0

    def __post_init__(self):
        for name in ("tp", "fn", "fp", "tn"):
            value = getattr(self, name)
            if int(value) != value or value < 0:
                raise ValueError(f"{name} must be a non-negative integer, got {value!r}")
            object.__setattr__(self, name, int(value))

    @property
    def total(self) -> int:
        return self.tp + self.fn + self.fp + self.tn

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.tp + other.tp, self.fn + other.fn,
                               self.fp + other.fp, self.tn + other.tn)
