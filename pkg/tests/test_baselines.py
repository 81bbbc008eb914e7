import warnings

import numpy as np
import pytest
from sklearn.base import clone

from kpidnn import baselines as bl
from kpidnn.core import Label
from kpidnn.exceptions import BatchTooSmall, ConfigError, SingularFitWarning


def window(history, pending):
    return np.append(np.asarray(history, dtype=float), pending)


def test_three_sigma_hand_example():
    history = [0.0, 1.0] * 50          # mean 0.5, population std 0.5
    assert bl.three_sigma(window(history, 1.9)) is Label.NORMAL
    assert bl.three_sigma(window(history, 2.01)) is Label.ANOMALY
    assert bl.three_sigma(window(history, -1.01)) is Label.ANOMALY
    assert bl.three_sigma(window(history, 2.01), bl.ThreeSigmaConfig(4.0)) is Label.NORMAL


def test_three_sigma_flat_history():
    assert bl.three_sigma(window([2.0] * 10, 2.0)) is Label.NORMAL
    assert bl.three_sigma(window([2.0] * 10, 2.1)) is Label.ANOMALY


def test_ewma_statistic_recursion():
    x = np.array([1.0, 3.0, 2.0, 6.0])
    z, sigma = bl.ewma_chart_statistics(x, bl.EwmaChartConfig(alpha=0.5))
    assert z[0] == 2.0                               # history mean
    assert np.allclose(z[1:], [1.5, 2.25, 2.125, 4.0625])
    assert sigma == pytest.approx(np.std([1.0, 3.0, 2.0]))


@pytest.mark.parametrize("alpha", [0.1, 0.3, 0.9])
def test_ewma_limits_match_variance_recursion(alpha):
    # Var(z_i) = alpha^2 s^2 + (1 - alpha)^2 Var(z_{i-1}), Var(z_0) = 0
    config = bl.EwmaChartConfig(coefficient=3.0, alpha=alpha)
    s, var = 1.7, 0.0
    for step in range(1, 60):
        var = alpha ** 2 * s ** 2 + (1 - alpha) ** 2 * var
        assert bl.ewma_limit_halfwidth(step, s, config) == pytest.approx(3.0 * np.sqrt(var), rel=1e-12)


def test_ewma_chart_flags_jump():
    rng = np.random.default_rng(0)
    history = 0.5 + 0.01 * rng.normal(size=200)
    assert bl.ewma_chart(window(history, 0.5)) is Label.NORMAL
    assert bl.ewma_chart(window(history, 0.9)) is Label.ANOMALY
    with pytest.raises(ConfigError):
        bl.EwmaChartConfig(alpha=0.0)


def test_polynomial_exact_fit_has_zero_residual():
    t = np.arange(40) / 39
    values = 0.2 + 0.5 * t - 0.3 * t ** 2 + 0.1 * t ** 4
    residual, degree = bl.poly_residual(values)
    assert degree == 4 and residual < 1e-9
    assert bl.poly_regression(values) is Label.NORMAL
    bumped = values.copy()
    bumped[-1] += 0.31
    assert bl.poly_regression(bumped) is Label.ANOMALY


def test_polynomial_lowers_degree_on_short_history():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        _, degree = bl.poly_residual(np.array([0.0, 1.0, 0.0, 0.5]))
    assert degree == 2
    assert any(issubclass(w.category, SingularFitWarning) for w in caught)


def test_flag_top_exact_share_and_stable_ties():
    scores = np.array([0.1, 0.9, 0.5, 0.9, 0.2, 0.3, 0.3, 0.0, 0.4, 0.6])
    labels = bl.flag_top(scores, 0.2)
    assert labels.tolist() == [1, 0, 1, 0, 1, 1, 1, 1, 1, 1]
    assert (bl.flag_top(scores, 0.15) == 0).sum() == 2   # round(1.5) = 2
    tied = bl.flag_top(np.zeros(4), 0.25)
    assert tied.tolist() == [0, 1, 1, 1]


def _c(n):
    if n <= 1:
        return 0.0
    if n == 2:
        return 1.0
    return 2.0 * (np.log(n - 1) + np.euler_gamma) - 2.0 * (n - 1) / n


def _path_length(tree, x):
    node, depth = 0, 0
    while tree.children_left[node] != -1:
        go_left = x[tree.feature[node]] <= tree.threshold[node]
        node = tree.children_left[node] if go_left else tree.children_right[node]
        depth += 1
    return depth + _c(tree.n_node_samples[node])


def test_isolation_scores_match_path_length_oracle():
    rng = np.random.default_rng(3)
    X = np.vstack([rng.uniform(size=(120, 15)), np.linspace(0, 1, 15)])
    X[-1, -1] = 5.0
    points = bl.iforest_points(X)
    forest = bl.fit_iforest(points, bl.IForestConfig(n_estimators=3))
    depths = np.zeros(len(points))
    for est, cols in zip(forest.estimators_, forest.estimators_features_):
        depths += [_path_length(est.tree_, p[cols]) for p in points]
    oracle = 2.0 ** (-(depths / len(forest.estimators_)) / _c(forest.max_samples_))
    assert np.allclose(-forest.score_samples(points), oracle, rtol=1e-12)


def test_isolation_forest_flags_share_and_outlier():
    rng = np.random.default_rng(5)
    X = 0.5 + 0.05 * rng.normal(size=(100, 23))
    X[7, -1] = 3.0
    labels = bl.isolation_forest(X, bl.IForestConfig(seed=2))
    assert (labels == 0).sum() == 15 and labels[7] == 0
    with pytest.raises(BatchTooSmall):
        bl.isolation_forest([X[0]])


def test_iforest_points_use_last_ten_history_values():
    row = np.arange(30, dtype=float)
    (pending, delta), = bl.iforest_points(row)
    assert pending == 29 and delta == 29 - np.mean(np.arange(19, 29))


def test_detector_estimators():
    rng = np.random.default_rng(0)
    X = rng.uniform(size=(40, 13))
    detectors = bl.baseline_detectors()
    assert list(detectors) == ["3-Sigma", "EWMA Control Chart", "Polynomial Regression",
                               "Isolation Forest"]
    for name, det in detectors.items():
        pred = clone(det).fit(X).predict(X)
        assert pred.shape == (40,) and set(pred) <= {0, 1}, name
    forest = bl.IsolationForestDetector(random_state=4)
    assert (forest.fit_predict(X) == 0).sum() == 6
    assert bl.PolynomialDetector().fit(X).predict(np.zeros((2, 13))).tolist() == [1, 1]
    assert bl.ThreeSigmaDetector(multiplier=2.0).get_params() == {"multiplier": 2.0}


def test_ewma_limit_width_grows_to_asymptote():
    config = bl.EwmaChartConfig()
    widths = [bl.ewma_limit_halfwidth(i, 1.0, config) for i in range(1, 201)]
    assert all(b >= a for a, b in zip(widths, widths[1:]))
    assert widths[-1] == pytest.approx(3.0 * np.sqrt(0.3 / (2 - 0.3)), rel=1e-12)


def test_detectors_ignore_affine_rescaling_of_raw_series():
    from kpidnn.core import TimeSeries
    from kpidnn.windowing import WindowSpec, sliding_extract

    rng = np.random.default_rng(8)
    values = np.sin(np.arange(12000) / 200.0) + 0.05 * rng.normal(size=12000)
    values[11800] += 1.5
    spec = WindowSpec(5)
    a = sliding_extract(TimeSeries("v", 0, values), 11700, 11999, 3, spec).samples
    b = sliding_extract(TimeSeries("v", 0, 3 * values + 7), 11700, 11999, 3, spec).samples
    a = np.stack([w.joint for w in a])
    b = np.stack([w.joint for w in b])
    for name, det in bl.baseline_detectors().items():
        assert np.array_equal(det.fit(a).predict(a), det.fit(b).predict(b)), name
