import numpy as np
import pytest

from kpidnn import features as fo
from kpidnn.exceptions import LengthError, ParamError
from kpidnn.features import FeatureKind as K
from kpidnn.features import FeatureSpec, FeatureProfile

X = np.array([3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0])


@pytest.mark.parametrize("spec, expected", [
    (FeatureSpec(K.MAX), 9.0),
    (FeatureSpec(K.MIN), 1.0),
    (FeatureSpec(K.AVERAGE), 31 / 8),
    (FeatureSpec(K.INTEGRATION), 31.0),
    (FeatureSpec(K.ABS_SUM_CHANGES), 2 + 3 + 3 + 4 + 4 + 7 + 4),
    (FeatureSpec(K.MEAN_CHANGE), (6.0 - 3.0) / 8),
    (FeatureSpec(K.COUNT_ABOVE_MEAN), 4.0),
    (FeatureSpec(K.COUNT_BELOW_MEAN), 4.0),
    (FeatureSpec(K.SIMPLE_THRESHOLD_GE, threshold=6.0), 1.0),
    (FeatureSpec(K.SIMPLE_THRESHOLD_LT, threshold=6.0), 0.0),
])
def test_hand_computed_values(spec, expected):
    assert fo.compute(spec, X) == pytest.approx(expected, abs=1e-12)


def test_second_derivative_telescopes():
    # sum of central second differences = (x_n - x_{n-1}) - (x_2 - x_1)
    expected = ((X[-1] - X[-2]) - (X[1] - X[0])) / (2 * X.size)
    got = fo.compute(FeatureSpec(K.MEAN_SECOND_DERIVATIVE_CENTRAL), X)
    assert got == pytest.approx(expected, abs=1e-12)


def test_difference_is_a_vector():
    spec = FeatureSpec(K.DIFFERENCE)
    assert np.array_equal(fo.compute(spec, X), np.diff(X))
    assert spec.output_names(4) == ["difference[1]", "difference[2]", "difference[3]"]


def test_smoothers_on_small_inputs():
    x = np.arange(1.0, 11.0)
    assert fo.sma(x, 10) == 5.5
    # weights 1..10 over 1..10: sum k^2 / sum k
    assert fo.wma(x, 10) == pytest.approx(385 / 55)
    # recursion by hand for alpha 0.5 on [2, 4, 8]: E1=2, E2=0.5*2+0.5*2=2, E3=0.5*4+0.5*2=3
    assert fo.ewma(np.array([2.0, 4.0, 8.0]), 0.5) == 3.0


@pytest.mark.parametrize("alpha", [0.2, 0.4, 0.6, 0.8, 0.05, 1.0])
@pytest.mark.parametrize("n", [1, 2, 3, 17, 200])
def test_ewma_weights_reproduce_recursion(alpha, n):
    rng = np.random.default_rng(n)
    x = rng.uniform(-10, 10, size=n)
    w = fo.ewma_weights(n, alpha)
    assert w @ x == pytest.approx(fo.ewma(x, alpha), rel=1e-12, abs=1e-12)
    assert w.sum() == pytest.approx(1.0)
    assert w[-1] == 0.0 or n == 1


def test_wma_weights_sum_to_one():
    for w in fo.WMA_WINDOWS:
        assert fo.wma_weights(w).sum() == pytest.approx(1.0)


def test_fits_are_smoother_minus_last_point():
    x = np.linspace(0, 1, 60)
    assert fo.compute(FeatureSpec(K.SMA_FIT, window=10), x) == pytest.approx(fo.sma(x, 10) - 1.0)
    assert fo.compute(FeatureSpec(K.WMA_FIT, window=20), x) == pytest.approx(fo.wma(x, 20) - 1.0)
    assert fo.compute(FeatureSpec(K.EWMA_FIT, alpha=0.4), x) == pytest.approx(fo.ewma(x, 0.4) - 1.0)


def test_historical_change_horizon_in_points():
    spec = FeatureSpec(K.HISTORICAL_CHANGE, horizon_days=1, points_per_day=5)
    x = np.arange(10.0)
    assert spec.horizon == 5 and spec.min_length == 6
    assert fo.compute(spec, x) == 5.0


def test_parameter_validation():
    with pytest.raises(ParamError):
        FeatureSpec(K.SMA_FIT)
    with pytest.raises(ParamError):
        FeatureSpec(K.MAX, window=10)
    with pytest.raises(ParamError):
        FeatureSpec(K.SMA_FIT, window=7)
    assert FeatureSpec(K.SMA_FIT, window=7, custom=True).window == 7
    with pytest.raises(ParamError):
        FeatureSpec(K.EWMA_FIT, alpha=0.3)
    with pytest.raises(ParamError):
        FeatureSpec(K.SIMPLE_THRESHOLD_GE, threshold=float("inf"))


def test_short_inputs_raise():
    with pytest.raises(LengthError):
        fo.compute(FeatureSpec(K.SMA_FIT, window=50), np.zeros(10))
    with pytest.raises(LengthError):
        fo.compute(FeatureSpec(K.MEAN_SECOND_DERIVATIVE_CENTRAL), np.zeros(2))


def test_profile_filters_by_length_and_flattens():
    profile = FeatureProfile()
    assert len(profile.specs()) == 12 + 2 + 5 + 5 + 4
    short = profile.specs(10)
    assert all(s.min_length <= 10 for s in short)
    assert FeatureSpec(K.SMA_FIT, window=10) in short
    assert FeatureSpec(K.SMA_FIT, window=20) not in short
    names, values = fo.compute_all(profile, np.linspace(-1, 1, 10))
    assert len(names) == values.size
    assert names.count("max") == 1 and sum(n.startswith("difference[") for n in names) == 9
