"""Synthetic labeled KPI series and the CSV formats for series and datasets."""
from __future__ import annotations

import csv
import logging
import os
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import seeds
from .core import MINUTES_PER_DAY, MINUTES_PER_WEEK, Dataset, Label, TimeSeries, WindowSample
from .exceptions import (
    GapError, LabelError, ParseError, RangeError, RowLengthError, SpecError,
)
from .windowing import WindowSpec, extract

logger = logging.getLogger(__name__)

PATTERNS = ("sine-daily", "sine-weekly-modulated", "square", "trend")
ANOMALY_KINDS = ("spike", "dip", "level_shift")
VALUE_FORMAT = "%.9g"
RANGE_SLACK = 1e-9


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of the synthetic generator.

    ``rates`` are per-minute probabilities of starting an anomaly of each
    kind; ``magnitude`` is a ``(low, high)`` range in multiples of
    ``noise_sigma``.
    """

    n_series: int = 1
    days: int = 15
    pattern: str = "sine-daily"
    level: float = 100.0
    amplitude: float = 20.0
    noise_sigma: float = 1.0
    rates: dict = field(default_factory=lambda: {"spike": 0.002, "dip": 0.002, "level_shift": 0.0002})
    magnitude: tuple = (6.0, 10.0)
    shift_duration: tuple = (10, 60)
    start: int = 0
    seed: int = 0
    id_prefix: str = "s"

    def __post_init__(self):
        if self.n_series < 1:
            raise SpecError("n_series must be >= 1")
        if self.days < 15:
            raise SpecError("days must be >= 15 so that windows exist")
        if self.pattern not in PATTERNS:
            raise SpecError(f"pattern must be one of {PATTERNS}")
        if self.noise_sigma <= 0:
            raise SpecError("noise_sigma must be positive")
        for kind, rate in self.rates.items():
            if kind not in ANOMALY_KINDS:
                raise SpecError(f"unknown anomaly kind {kind!r}")
            if not 0.0 <= rate <= 0.05:
                raise SpecError(f"{kind} rate must lie in [0, 0.05]")
        lo, hi = self.magnitude
        if lo < 3 or hi < lo:
            raise SpecError("magnitude range must satisfy 3 <= low <= high")
        if self.shift_duration[0] < 1 or self.shift_duration[1] < self.shift_duration[0]:
            raise SpecError("invalid level-shift duration range")

    @property
    def length(self) -> int:
        return self.days * MINUTES_PER_DAY


@dataclass(frozen=True)
class AnomalyEvent:
    series_id: str
    timestamp: int
    kind: str


@dataclass
class Generated:
    series: list
    anomalies: list
    clean: list  # pattern + noise before injection, one array per series

    def anomaly_set(self, series_id: str) -> set:
        return {a.timestamp for a in self.anomalies if a.series_id == series_id}


def _pattern(spec: SynthSpec, t: np.ndarray, rng) -> np.ndarray:
    phase = rng.uniform(0, 2 * np.pi)
    day = np.sin(2 * np.pi * t / MINUTES_PER_DAY + phase)
    if spec.pattern == "sine-daily":
        shape = day
    elif spec.pattern == "sine-weekly-modulated":
        shape = day * (1.0 + 0.3 * np.sin(2 * np.pi * t / MINUTES_PER_WEEK))
    elif spec.pattern == "square":
        shape = np.where(day >= 0, 1.0, -1.0)
    else:
        shape = day + t / spec.length
    return spec.level + spec.amplitude * shape


def _one(spec: SynthSpec, index: int):
    rng = seeds.generator(spec.seed, "generator", index)
    sid = f"{spec.id_prefix}{index:04d}"
    t = np.arange(spec.length, dtype=float)
    clean = _pattern(spec, t, rng) + rng.normal(0.0, spec.noise_sigma, size=t.size)
    values = clean.copy()
    events = {}
    lo, hi = spec.magnitude
    for kind in ANOMALY_KINDS:
        rate = spec.rates.get(kind, 0.0)
        if rate <= 0:
            continue
        starts = np.flatnonzero(rng.random(t.size) < rate)
        for s in starts:
            mag = rng.uniform(lo, hi) * spec.noise_sigma
            if kind == "spike":
                span = [s]
                values[s] += mag
            elif kind == "dip":
                span = [s]
                values[s] -= mag
            else:
                dur = int(rng.integers(spec.shift_duration[0], spec.shift_duration[1] + 1))
                sign = 1.0 if rng.random() < 0.5 else -1.0
                span = range(s, min(s + dur, t.size))
                values[list(span)] += sign * mag
            for p in span:
                events.setdefault(int(p), kind)
    series = TimeSeries(sid, spec.start, values)
    anomalies = [AnomalyEvent(sid, spec.start + p, kind) for p, kind in sorted(events.items())]
    return series, anomalies, clean


def generate(spec: SynthSpec) -> Generated:
    """Seeded series with daily/weekly structure plus injected, recorded anomalies."""
    out = Generated([], [], [])
    for i in range(spec.n_series):
        series, anomalies, clean = _one(spec, i)
        out.series.append(series)
        out.anomalies.extend(anomalies)
        out.clean.append(clean)
    return out


# ---------------------------------------------------------------- benchmark

@dataclass(frozen=True)
class BenchmarkSpec:
    """Synthetic stand-in for the train/test split, sized at a tenth of the original.

    Counts are (anomaly, normal) windows. Training and test windows come
    from disjoint series.
    """

    k: int = 180
    train_counts: tuple = (4899, 2913)
    test_counts: tuple = (451, 1123)
    synth: SynthSpec = field(default_factory=lambda: SynthSpec(n_series=48))
    test_series: int = 6
    seed: int = 0


def _labelled_windows(gen: Generated, n_anomaly: int, n_normal: int, spec: WindowSpec, rng):
    """Sample anomaly and normal windows from the valid region of each series."""
    anomalous, normal = [], []
    for series in gen.series:
        lo, hi = spec.first_valid(series), spec.last_valid(series)
        bad = gen.anomaly_set(series.id)
        ts = np.arange(lo, hi + 1)
        mask = np.isin(ts, list(bad))
        anomalous += [(series, int(t)) for t in ts[mask]]
        normal += [(series, int(t)) for t in ts[~mask]]
    if len(anomalous) < n_anomaly:
        logger.warning("only %d anomalous windows available (wanted %d)", len(anomalous), n_anomaly)
        n_anomaly = len(anomalous)
    pick_a = np.sort(rng.choice(len(anomalous), size=n_anomaly, replace=False))
    pick_n = np.sort(rng.choice(len(normal), size=min(n_normal, len(normal)), replace=False))
    samples = [extract(*anomalous[i], spec, Label.ANOMALY) for i in pick_a]
    samples += [extract(*normal[i], spec, Label.NORMAL) for i in pick_n]
    return samples


def build_benchmark(bench: BenchmarkSpec = BenchmarkSpec()):
    """``(train, test, generated_train, generated_test)`` datasets and their source series."""
    spec = WindowSpec(bench.k)
    synth = replace(bench.synth, seed=bench.seed)
    train_gen = generate(synth)
    test_gen = generate(replace(synth, n_series=bench.test_series, seed=bench.seed + 1, id_prefix="t"))
    rng = seeds.generator(bench.seed, "benchmark-sampling")
    train = Dataset(spec.k, tuple(_labelled_windows(train_gen, *bench.train_counts, spec, rng)))
    test = Dataset(spec.k, tuple(_labelled_windows(test_gen, *bench.test_counts, spec, rng)))
    return train, test, train_gen, test_gen


# ---------------------------------------------------------------- file formats

@contextmanager
def atomic_write(path):
    """Write to a temporary file next to ``path`` and rename on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def write_series(series: TimeSeries, path) -> None:
    with atomic_write(path) as fh:
        fh.write("timestamp,value\n")
        for t, v in zip(series.timestamps, series.values):
            fh.write(f"{t},{'' if np.isnan(v) else VALUE_FORMAT % v}\n")


def read_series(path, series_id: str | None = None) -> TimeSeries:
    """Read ``timestamp,value`` rows; an empty value marks a missing point.

    Skipped minutes are filled with missing markers; timestamps that do not
    strictly increase raise :class:`GapError`.
    """
    path = Path(path)
    stamps, values = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["timestamp", "value"]:
            raise ParseError("expected header 'timestamp,value'", 1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ParseError(f"expected 2 fields, found {len(row)}", lineno)
            try:
                t = int(row[0])
            except ValueError:
                raise ParseError(f"timestamp {row[0]!r} is not an integer", lineno) from None
            text = row[1].strip()
            try:
                v = float(text) if text else np.nan
            except ValueError:
                raise ParseError(f"value {row[1]!r} is not a number", lineno) from None
            if stamps and t <= stamps[-1]:
                raise GapError(f"timestamp {t} does not increase (previous {stamps[-1]})", lineno)
            stamps.append(t)
            values.append(v)
    if not stamps:
        raise ParseError("series has no rows", 2)
    start = stamps[0]
    full = np.full(stamps[-1] - start + 1, np.nan)
    full[np.asarray(stamps) - start] = values
    return TimeSeries(series_id or path.stem, start, full)


def write_dataset(dataset: Dataset, path) -> None:
    width = 5 * dataset.k + 3
    with atomic_write(path) as fh:
        fh.write("label," + ",".join(f"v{i}" for i in range(1, width + 1)) + "\n")
        for s in dataset.samples:
            fh.write(f"{int(s.label)}," + ",".join(VALUE_FORMAT % v for v in s.joint) + "\n")


def read_dataset(path, k: int | None = None) -> Dataset:
    """Read ``label,v1..v{5k+3}`` rows; ``k`` is inferred from the width when omitted."""
    rows, labels = [], []
    width = None if k is None else 5 * k + 3
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if lineno == 1 and fields[0] == "label":
                continue
            n_values = len(fields) - 1
            if width is None:
                if n_values < 8 or (n_values - 3) % 5:
                    raise RowLengthError(f"{n_values} values is not 5k+3 for any k >= 1", lineno)
                width = n_values
            if n_values != width:
                raise RowLengthError(f"expected {width} values, found {n_values}", lineno)
            try:
                label = Label.parse(fields[0])
            except ValueError:
                raise LabelError(f"label must be 0 or 1, found {fields[0]!r}", lineno) from None
            try:
                values = np.array([float(v) for v in fields[1:]])
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
            if not np.all(np.isfinite(values)):
                raise RangeError("non-finite value", lineno)
            if values.min() < -RANGE_SLACK or values.max() > 1 + RANGE_SLACK:
                raise RangeError(f"values must lie in [0, 1], found [{values.min()}, {values.max()}]",
                                 lineno)
            rows.append((lineno, np.clip(values, 0.0, 1.0)))
            labels.append(label)
    if width is None:
        raise ParseError("dataset has no rows", 1)
    k = (width - 3) // 5
    samples = []
    for (lineno, values), label in zip(rows, labels):
        degenerate = not np.any(values)
        if not degenerate and (values.min() != 0.0 or values.max() != 1.0):
            raise RangeError("a normalized window must span exactly [0, 1]", lineno)
        samples.append(WindowSample(k, values, 0.0, 0.0 if degenerate else 1.0, degenerate,
                                    str(Path(path).stem), lineno, label))
    return Dataset(k, tuple(samples))


def write_anomalies(anomalies, path) -> None:
    with atomic_write(path) as fh:
        fh.write("id,timestamp,kind\n")
        for a in anomalies:
            fh.write(f"{a.series_id},{a.timestamp},{a.kind}\n")


def read_anomalies(path) -> list[AnomalyEvent]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["id", "timestamp"]:
            raise ParseError("expected header 'id,timestamp[,kind]'", 1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                out.append(AnomalyEvent(row[0], int(row[1]), row[2] if len(row) > 2 else ""))
            except (IndexError, ValueError):
                raise ParseError(f"malformed anomaly row {row!r}", lineno) from None
    return out
