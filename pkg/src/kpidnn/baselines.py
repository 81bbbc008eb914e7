"""Classical detectors run on the same normalized windows as the network.

Each detector looks at the history ``H`` (every joint element but the last)
and decides whether the pending point (the last element) is an anomaly.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.ensemble import IsolationForest

from . import seeds
from ._validation import check_rows
from .core import Label, WindowSample
from .exceptions import BatchTooSmall, ConfigError, LengthError, SingularFitWarning

ANOMALY = int(Label.ANOMALY)
NORMAL = int(Label.NORMAL)


@dataclass(frozen=True)
class ThreeSigmaConfig:
    multiplier: float = 3.0


@dataclass(frozen=True)
class EwmaChartConfig:
    coefficient: float = 3.0
    alpha: float = 0.3

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError(f"EWMA alpha must lie in (0, 1], got {self.alpha}")


@dataclass(frozen=True)
class PolyConfig:
    degree: int = 4
    threshold: float = 0.3

    def __post_init__(self):
        if self.degree < 1:
            raise ConfigError("polynomial degree must be >= 1")


@dataclass(frozen=True)
class IForestConfig:
    n_estimators: int = 3
    max_samples: str | int = "auto"
    contamination: float = 0.15
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.contamination < 0.5:
            raise ConfigError("contamination must lie in (0, 0.5)")
        if self.n_estimators < 1:
            raise ConfigError("n_estimators must be >= 1")


@dataclass(frozen=True)
class BaselineConfig:
    three_sigma: ThreeSigmaConfig = field(default_factory=ThreeSigmaConfig)
    ewma_chart: EwmaChartConfig = field(default_factory=EwmaChartConfig)
    poly: PolyConfig = field(default_factory=PolyConfig)
    iforest: IForestConfig = field(default_factory=IForestConfig)


def _joint(sample) -> np.ndarray:
    joint = sample.joint if isinstance(sample, WindowSample) else np.asarray(sample, dtype=float)
    if joint.ndim != 1 or joint.size < 2:
        raise LengthError("a window needs a history and a pending point")
    return joint


# ---------------------------------------------------------------- 3-sigma

def three_sigma(sample, config: ThreeSigmaConfig = ThreeSigmaConfig()) -> Label:
    """Anomaly iff the pending point is more than ``multiplier`` population std from the history mean."""
    joint = _joint(sample)
    history, pending = joint[:-1], joint[-1]
    mean = history.mean()
    std = history.std()
    if std == 0.0:
        return Label.ANOMALY if pending != mean else Label.NORMAL
    return Label.ANOMALY if abs(pending - mean) > config.multiplier * std else Label.NORMAL


# ---------------------------------------------------------------- EWMA chart

def ewma_limit_halfwidth(step: int, sigma: float, config: EwmaChartConfig = EwmaChartConfig()) -> float:
    """``L * sigma * sqrt(alpha/(2-alpha) * (1 - (1-alpha)^(2*step)))``."""
    a = config.alpha
    return config.coefficient * sigma * np.sqrt(a / (2.0 - a) * (1.0 - (1.0 - a) ** (2 * step)))


def ewma_chart_statistics(sample, config: EwmaChartConfig = EwmaChartConfig()):
    """EWMA statistic path ``z_0..z_N`` over the joint window and the history std.

    ``z_0`` is the history mean; ``z_i = alpha*v_i + (1-alpha)*z_{i-1}``.
    """
    joint = _joint(sample)
    history = joint[:-1]
    z = np.empty(joint.size + 1)
    z[0] = history.mean()
    a = config.alpha
    for i, v in enumerate(joint, start=1):
        z[i] = a * v + (1.0 - a) * z[i - 1]
    return z, float(history.std())


def ewma_chart(sample, config: EwmaChartConfig = EwmaChartConfig()) -> Label:
    """Anomaly iff the pending point falls outside ``z_{N-1} +/- halfwidth(N)``."""
    joint = _joint(sample)
    if joint.size < 4:
        raise LengthError("EWMA chart needs at least 3 history points")
    z, sigma = ewma_chart_statistics(joint, config)
    step = joint.size
    centre = z[step - 1]
    return Label.ANOMALY if abs(joint[-1] - centre) > ewma_limit_halfwidth(step, sigma, config) \
        else Label.NORMAL


# ---------------------------------------------------------------- polynomial

def poly_residual(sample, config: PolyConfig = PolyConfig()):
    """Fit the history by least squares; returns ``(|fit(pending) - pending|, degree_used)``.

    Indices are rescaled to [0, 1]. When the design matrix is rank deficient
    the degree is lowered until it is not, with a :class:`SingularFitWarning`.
    """
    joint = _joint(sample)
    n = joint.size
    t = np.arange(n) / (n - 1)
    history_t, history = t[:-1], joint[:-1]
    degree = config.degree
    while True:
        design = np.vander(history_t, degree + 1, increasing=True)
        coef, _, rank, _ = np.linalg.lstsq(design, history, rcond=None)
        if rank == degree + 1 or degree == 0:
            break
        warnings.warn(f"degree {degree} fit is rank deficient (rank {rank}); lowering",
                      SingularFitWarning, stacklevel=2)
        degree -= 1
    fitted = np.polynomial.polynomial.polyval(t[-1], coef)
    return float(abs(fitted - joint[-1])), degree


def poly_regression(sample, config: PolyConfig = PolyConfig()) -> Label:
    if isinstance(sample, WindowSample) and sample.degenerate:
        return Label.NORMAL
    residual, _ = poly_residual(sample, config)
    return Label.ANOMALY if residual > config.threshold else Label.NORMAL


# ---------------------------------------------------------------- isolation forest

def iforest_points(X) -> np.ndarray:
    """2-D summary per window: ``(pending, pending - mean of the last 10 history points)``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    pending = X[:, -1]
    sma10 = X[:, -11:-1].mean(axis=1)
    return np.column_stack([pending, pending - sma10])


def fit_iforest(points, config: IForestConfig = IForestConfig()) -> IsolationForest:
    points = np.asarray(points, dtype=float)
    if points.shape[0] < 2:
        raise BatchTooSmall("isolation forest needs at least two windows")
    forest = IsolationForest(
        n_estimators=config.n_estimators, max_samples=config.max_samples,
        contamination="auto", random_state=seeds.int_seed(config.seed, "iforest"),
    )
    return forest.fit(points)


def flag_top(scores, contamination: float) -> np.ndarray:
    """Labels with the ``round(contamination * m)`` highest scores set to Anomaly.

    Ties keep the earlier index first.
    """
    scores = np.asarray(scores, dtype=float)
    n_flag = int(round(contamination * scores.size))
    order = np.argsort(-scores, kind="stable")
    labels = np.full(scores.size, NORMAL)
    labels[order[:n_flag]] = ANOMALY
    return labels


def isolation_forest(samples, config: IForestConfig = IForestConfig()) -> np.ndarray:
    """Fit on the batch and flag the ``contamination`` share with the highest anomaly score."""
    if isinstance(samples, np.ndarray):
        X = np.atleast_2d(samples)
    else:
        samples = list(samples)
        if len(samples) < 2:
            raise BatchTooSmall("isolation forest needs at least two windows")
        X = np.stack([_joint(s) for s in samples])
    points = iforest_points(X)
    forest = fit_iforest(points, config)
    # score_samples is the negated anomaly score s(x) = 2^(-E[h(x)]/c(m))
    return flag_top(-forest.score_samples(points), config.contamination)


# ---------------------------------------------------------------- estimators

class _RowDetector(ClassifierMixin, BaseEstimator):
    """Stateless per-window rule; ``fit`` only records the input width."""

    def fit(self, X, y=None):
        X = check_rows(X)
        self.n_features_in_ = X.shape[1]
        self.classes_ = np.array([ANOMALY, NORMAL])
        return self

    def predict(self, X):
        X = check_rows(X)
        return np.array([int(self._rule(row)) for row in X])


class ThreeSigmaDetector(_RowDetector):
    def __init__(self, multiplier=3.0):
        self.multiplier = multiplier

    def _rule(self, row):
        return three_sigma(row, ThreeSigmaConfig(self.multiplier))


class EwmaChartDetector(_RowDetector):
    def __init__(self, coefficient=3.0, alpha=0.3):
        self.coefficient = coefficient
        self.alpha = alpha

    def _rule(self, row):
        return ewma_chart(row, EwmaChartConfig(self.coefficient, self.alpha))


class PolynomialDetector(_RowDetector):
    def __init__(self, degree=4, threshold=0.3):
        self.degree = degree
        self.threshold = threshold

    def _rule(self, row):
        if row.max() == row.min():
            return Label.NORMAL
        return poly_regression(row, PolyConfig(self.degree, self.threshold))


class IsolationForestDetector(ClassifierMixin, BaseEstimator):
    """Transductive: ``fit_predict`` fits on a batch and labels that batch.

    ``predict`` on new data scores it with the fitted forest and flags the
    same contamination share within the new batch.
    """

    def __init__(self, n_estimators=3, max_samples="auto", contamination=0.15, random_state=0):
        self.n_estimators = n_estimators
        self.max_samples = max_samples
        self.contamination = contamination
        self.random_state = random_state

    def _config(self):
        return IForestConfig(self.n_estimators, self.max_samples, self.contamination,
                             int(self.random_state or 0))

    def fit(self, X, y=None):
        X = check_rows(X)
        self.forest_ = fit_iforest(iforest_points(X), self._config())
        self.classes_ = np.array([ANOMALY, NORMAL])
        self.n_features_in_ = X.shape[1]
        return self

    def score_samples(self, X):
        X = check_rows(X, n_features=self.n_features_in_)
        return -self.forest_.score_samples(iforest_points(X))

    def predict(self, X):
        return flag_top(self.score_samples(X), self.contamination)

    def fit_predict(self, X, y=None):
        return self.fit(X).predict(X)



def baseline_detectors(config: BaselineConfig = BaselineConfig()):
    """Name -> unfitted estimator, in report order."""
    return {
        "3-Sigma": ThreeSigmaDetector(config.three_sigma.multiplier),
        "EWMA Control Chart": EwmaChartDetector(config.ewma_chart.coefficient, config.ewma_chart.alpha),
        "Polynomial Regression": PolynomialDetector(config.poly.degree, config.poly.threshold),
        "Isolation Forest": IsolationForestDetector(
            config.iforest.n_estimators, config.iforest.max_samples,
            config.iforest.contamination, config.iforest.seed),
    }
