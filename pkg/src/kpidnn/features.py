"""Direct computation of the classical KPI features.

This is the reference that the compiled feature networks in
:mod:`kpidnn.netfab` are checked against, so everything here is written in
the most literal form: loops and sums rather than clever vectorization where
that keeps the definition visible.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .core import MINUTES_PER_DAY
from .exceptions import LengthError, ParamError

SMA_WINDOWS = (10, 20, 30, 40, 50)
WMA_WINDOWS = (10, 20, 30, 40, 50)
EWMA_ALPHAS = (0.2, 0.4, 0.6, 0.8)
HORIZON_DAYS = (1, 7)


class FeatureKind(str, Enum):
    SIMPLE_THRESHOLD_GE = "simple_threshold_ge"
    SIMPLE_THRESHOLD_LT = "simple_threshold_lt"
    MAX = "max"
    MIN = "min"
    AVERAGE = "average"
    DIFFERENCE = "difference"
    INTEGRATION = "integration"
    ABS_SUM_CHANGES = "abs_sum_changes"
    MEAN_CHANGE = "mean_change"
    MEAN_SECOND_DERIVATIVE_CENTRAL = "mean_second_derivative_central"
    COUNT_ABOVE_MEAN = "count_above_mean"
    COUNT_BELOW_MEAN = "count_below_mean"
    HISTORICAL_CHANGE = "historical_change"
    SMA_FIT = "sma_fit"
    WMA_FIT = "wma_fit"
    EWMA_FIT = "ewma_fit"


K = FeatureKind

THRESHOLD_KINDS = frozenset({K.SIMPLE_THRESHOLD_GE, K.SIMPLE_THRESHOLD_LT})
COUNT_KINDS = frozenset({K.COUNT_ABOVE_MEAN, K.COUNT_BELOW_MEAN})
# features realized through sigmoid indicators; only approximately computed by a network
INDICATOR_KINDS = THRESHOLD_KINDS | COUNT_KINDS

_MIN_LENGTH = {
    K.DIFFERENCE: 2,
    K.ABS_SUM_CHANGES: 2,
    K.MEAN_CHANGE: 2,
    K.EWMA_FIT: 2,
    K.MEAN_SECOND_DERIVATIVE_CENTRAL: 3,
}


@dataclass(frozen=True)
class FeatureSpec:
    """One feature and its parameters.

    ``window`` is used by SMA/WMA fits, ``alpha`` by the EWMA fit,
    ``horizon_days`` by historical change and ``threshold`` by the simple
    thresholds. Window sizes and smoothing factors are limited to the
    standard table values unless ``custom=True``.
    """

    kind: FeatureKind
    window: Optional[int] = None
    alpha: Optional[float] = None
    horizon_days: Optional[int] = None
    threshold: Optional[float] = None
    points_per_day: int = MINUTES_PER_DAY
    custom: bool = field(default=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", FeatureKind(self.kind))
        kind = self.kind
        needs = {
            "window": kind in (K.SMA_FIT, K.WMA_FIT),
            "alpha": kind == K.EWMA_FIT,
            "horizon_days": kind == K.HISTORICAL_CHANGE,
            "threshold": kind in THRESHOLD_KINDS,
        }
        for name, required in needs.items():
            present = getattr(self, name) is not None
            if required and not present:
                raise ParamError(f"{kind.value} requires '{name}'")
            if present and not required:
                raise ParamError(f"{kind.value} takes no '{name}'")
        if self.window is not None:
            if int(self.window) != self.window or self.window < 1:
                raise ParamError(f"window must be a positive integer, got {self.window!r}")
            if not self.custom and self.window not in SMA_WINDOWS:
                raise ParamError(f"window {self.window} not in {SMA_WINDOWS}")
        if self.alpha is not None:
            if not 0.0 <= self.alpha <= 1.0:
                raise ParamError(f"alpha must lie in [0, 1], got {self.alpha}")
            if not self.custom and self.alpha not in EWMA_ALPHAS:
                raise ParamError(f"alpha {self.alpha} not in {EWMA_ALPHAS}")
        if self.horizon_days is not None:
            if int(self.horizon_days) != self.horizon_days or self.horizon_days < 1:
                raise ParamError(f"horizon must be a positive number of days, got {self.horizon_days!r}")
            if not self.custom and self.horizon_days not in HORIZON_DAYS:
                raise ParamError(f"horizon {self.horizon_days} days not in {HORIZON_DAYS}")
        if self.points_per_day < 1:
            raise ParamError("points_per_day must be positive")
        if self.threshold is not None and not np.isfinite(self.threshold):
            raise ParamError("threshold must be finite")

    @property
    def horizon(self) -> int:
        """Historical-change lag in points."""
        return int(self.horizon_days) * self.points_per_day

    @property
    def min_length(self) -> int:
        if self.kind in (K.SMA_FIT, K.WMA_FIT):
            return int(self.window)
        if self.kind == K.HISTORICAL_CHANGE:
            return self.horizon + 1
        return _MIN_LENGTH.get(self.kind, 1)

    @property
    def name(self) -> str:
        kind = self.kind
        if kind in (K.SMA_FIT, K.WMA_FIT):
            return f"{kind.value}(w={self.window})"
        if kind == K.EWMA_FIT:
            return f"{kind.value}(alpha={self.alpha:g})"
        if kind == K.HISTORICAL_CHANGE:
            return f"{kind.value}({self.horizon_days}d)"
        if kind in THRESHOLD_KINDS:
            return f"{kind.value}(a={self.threshold:g})"
        return kind.value

    def output_names(self, n: int) -> list[str]:
        if self.kind == K.DIFFERENCE:
            return [f"difference[{i}]" for i in range(1, n)]
        return [self.name]


def _as_series(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise LengthError("features are defined on 1-D series")
    return x


def sma(x, w: int) -> float:
    """Mean of the last ``w`` points."""
    return float(np.sum(x[len(x) - w:]) / w)


def wma(x, w: int) -> float:
    """Linearly weighted mean of the last ``w`` points, newest weighted ``w``."""
    n = len(x)
    total = 0.0
    for k in range(1, w + 1):
        total += k * x[n - w + k - 1]
    return 2.0 * total / (w * (w + 1))


def ewma(x, alpha: float) -> float:
    """Forecast-form EWMA: ``E1 = x1``, ``Ej = alpha*x(j-1) + (1-alpha)*E(j-1)``."""
    value = float(x[0])
    for j in range(1, len(x)):
        value = alpha * x[j - 1] + (1.0 - alpha) * value
    return value


def ewma_weights(n: int, alpha: float) -> np.ndarray:
    """Coefficients ``c`` with ``ewma(x, alpha) == c @ x`` (unrolled recursion)."""
    c = np.zeros(n)
    for j in range(1, n):
        c[j - 1] = alpha * (1.0 - alpha) ** (n - 1 - j)
    c[0] += (1.0 - alpha) ** (n - 1)
    return c


def wma_weights(w: int) -> np.ndarray:
    return 2.0 * np.arange(1, w + 1) / (w * (w + 1))


def compute(spec: FeatureSpec, x):
    """Value of one feature on series ``x``; a vector for ``DIFFERENCE``."""
    x = _as_series(x)
    n = x.size
    if n < spec.min_length:
        raise LengthError(f"{spec.name} needs at least {spec.min_length} points, got {n}")
    kind = spec.kind
    if kind == K.SIMPLE_THRESHOLD_GE:
        return 1.0 if x[-1] >= spec.threshold else 0.0
    if kind == K.SIMPLE_THRESHOLD_LT:
        return 1.0 if x[-1] < spec.threshold else 0.0
    if kind == K.MAX:
        return float(np.max(x))
    if kind == K.MIN:
        return float(np.min(x))
    if kind == K.AVERAGE:
        return float(np.sum(x) / n)
    if kind == K.DIFFERENCE:
        return x[1:] - x[:-1]
    if kind == K.INTEGRATION:
        return float(np.sum(x))
    if kind == K.ABS_SUM_CHANGES:
        return float(np.sum(np.abs(x[1:] - x[:-1])))
    if kind == K.MEAN_CHANGE:
        return float((x[-1] - x[0]) / n)
    if kind == K.MEAN_SECOND_DERIVATIVE_CENTRAL:
        return float(np.sum(x[2:] - 2.0 * x[1:-1] + x[:-2]) / (2.0 * n))
    if kind == K.COUNT_ABOVE_MEAN:
        return float(np.count_nonzero(x > np.mean(x)))
    if kind == K.COUNT_BELOW_MEAN:
        return float(np.count_nonzero(x < np.mean(x)))
    if kind == K.HISTORICAL_CHANGE:
        return float(x[-1] - x[-1 - spec.horizon])
    if kind == K.SMA_FIT:
        return sma(x, spec.window) - x[-1]
    if kind == K.WMA_FIT:
        return wma(x, spec.window) - x[-1]
    if kind == K.EWMA_FIT:
        return ewma(x, spec.alpha) - x[-1]
    raise ParamError(f"unknown feature kind {kind!r}")


@dataclass(frozen=True)
class FeatureProfile:
    """The standard feature table with configurable threshold and horizon units."""

    threshold: float = 0.0
    sma_windows: tuple = SMA_WINDOWS
    wma_windows: tuple = WMA_WINDOWS
    ewma_alphas: tuple = EWMA_ALPHAS
    horizon_days: tuple = HORIZON_DAYS
    points_per_day: int = MINUTES_PER_DAY

    def specs(self, n: Optional[int] = None) -> list[FeatureSpec]:
        """All features in canonical order.

        With ``n`` given, parameterizations that need more than ``n`` points
        are left out (e.g. a 50-point SMA on a 10-point series).
        """
        custom = (
            self.sma_windows != SMA_WINDOWS or self.wma_windows != WMA_WINDOWS
            or self.ewma_alphas != EWMA_ALPHAS or self.horizon_days != HORIZON_DAYS
        )
        out = [
            FeatureSpec(K.SIMPLE_THRESHOLD_GE, threshold=self.threshold),
            FeatureSpec(K.SIMPLE_THRESHOLD_LT, threshold=self.threshold),
            FeatureSpec(K.MAX),
            FeatureSpec(K.MIN),
            FeatureSpec(K.AVERAGE),
            FeatureSpec(K.DIFFERENCE),
            FeatureSpec(K.INTEGRATION),
            FeatureSpec(K.ABS_SUM_CHANGES),
            FeatureSpec(K.MEAN_CHANGE),
            FeatureSpec(K.MEAN_SECOND_DERIVATIVE_CENTRAL),
            FeatureSpec(K.COUNT_ABOVE_MEAN),
            FeatureSpec(K.COUNT_BELOW_MEAN),
        ]
        out += [FeatureSpec(K.HISTORICAL_CHANGE, horizon_days=d, points_per_day=self.points_per_day,
                            custom=custom) for d in self.horizon_days]
        out += [FeatureSpec(K.SMA_FIT, window=w, custom=custom) for w in self.sma_windows]
        out += [FeatureSpec(K.WMA_FIT, window=w, custom=custom) for w in self.wma_windows]
        out += [FeatureSpec(K.EWMA_FIT, alpha=a, custom=custom) for a in self.ewma_alphas]
        if n is not None:
            out = [s for s in out if s.min_length <= n]
        return out


def compute_all(specs, x):
    """Evaluate ``specs`` (a list or a :class:`FeatureProfile`) on ``x``.

    Returns ``(names, values)`` with vector-valued features flattened in place.
    """
    x = _as_series(x)
    if isinstance(specs, FeatureProfile):
        specs = specs.specs(x.size)
    names, values = [], []
    for spec in specs:
        try:
            value = compute(spec, x)
        except LengthError as exc:
            raise LengthError(f"feature {spec.name}: {exc}") from exc
        names.extend(spec.output_names(x.size))
        values.extend(np.atleast_1d(value).tolist())
    return names, np.asarray(values, dtype=float)
