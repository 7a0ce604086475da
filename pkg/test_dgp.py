"""Tests for the simulation studies and the balanced carving protocol."""
import numpy as np
import pytest

from models.errors import CapacityError
from models.simulation import ClassifSimConfig, RegressSimConfig
from services.simulation_service import DECISION_WEIGHTS, REGRESSION_BETA, SimulationService
from conftest import make_dataset


def test_classification_feature_formulas():
    x = SimulationService.classification_features(np.array([1.0]), np.array([2.0]), np.array([3.0]))[0]
    assert x[6] == 6.0
    assert x[3] == 1.0
    assert x[9] == 27.0


def test_decision_weights_are_linearly_spaced():
    np.testing.assert_allclose(DECISION_WEIGHTS, [-1.0, -0.5, 0.0, 0.5, 1.0])


def test_decision_score_values():
    assert SimulationService.decision_score(np.zeros(10)) == pytest.approx(-1.0)
    rng = np.random.default_rng(0)
    s = SimulationService.decision_score(rng.normal(scale=50.0, size=(1000, 10)))
    assert np.all(s >= -1.0) and np.all(s <= 1.0)
    big = np.zeros(10)
    big[4] = 1e6
    assert -1.0 <= SimulationService.decision_score(big) <= 0.0


def test_gen_classification_counts_and_labels():
    data, th = SimulationService.gen_classification_with_thresholds(ClassifSimConfig(n1=140, n2=380, seed=3))
    assert data.n == 520
    assert int(np.sum(data.target == 0)) == 140
    assert int(np.sum(data.target == 1)) == 380
    np.testing.assert_array_equal(data.region, data.target.astype(int) + 1)
    for row, y in zip(data.features, data.target):
        s = SimulationService.decision_score(row)
        assert y == float(abs(s - th['tau']) < th['delta'])
    assert th['tau'] == pytest.approx((th['tau_lo'] + th['tau_hi']) / 2)
    assert th['delta'] > 0


def test_gen_classification_is_deterministic():
    a = SimulationService.gen_classification(ClassifSimConfig(n1=50, n2=100, seed=9))
    b = SimulationService.gen_classification(ClassifSimConfig(n1=50, n2=100, seed=9))
    c = SimulationService.gen_classification(ClassifSimConfig(n1=50, n2=100, seed=10))
    assert a.equals(b)
    assert not a.equals(c)


def test_regression_function_piecewise():
    x = np.array([[1.0 / 3.0, 0.0, 0.0, 0.0, 0.0]])
    assert REGRESSION_BETA.tolist() == [3.0, 2.0, -1.0, 0.5, 1.0]
    assert SimulationService.regression_function(x, np.array([1]))[0] == pytest.approx(3.0)
    assert SimulationService.regression_function(x, np.array([2]))[0] == pytest.approx(1.0)


def test_gen_regression_regions_and_noise():
    cfg = RegressSimConfig(n1=2000, n2=3000, sigma=0.2, seed=4)
    data = SimulationService.gen_regression(cfg)
    assert data.n == 5000 and data.d == 5
    np.testing.assert_array_equal(data.region == 1, data.features[:, 0] < 0.5)
    resid = data.target - SimulationService.regression_function(data.features, data.region)
    first = resid[data.region == 1]
    assert abs(first.mean()) < 4 * 0.2 / np.sqrt(len(first))
    assert first.std() == pytest.approx(0.2, rel=0.1)


def test_gen_regression_without_noise_is_exact():
    data = SimulationService.gen_regression(RegressSimConfig(n1=20, n2=30, sigma=0.0, seed=1))
    np.testing.assert_allclose(data.target, SimulationService.regression_function(data.features, data.region))


def test_sim_config_validation():
    with pytest.raises(ValueError):
        ClassifSimConfig(n1=0, n2=10)
    with pytest.raises(ValueError):
        RegressSimConfig(sigma=-1.0)


def test_gen_source_is_balanced():
    source = SimulationService.gen_source('regression', 101, seed=5)
    assert np.bincount(source.region).tolist() == [0, 50, 51]
    with pytest.raises(ValueError):
        SimulationService.gen_source('ranking', 10, seed=5)


def test_carve_counts_at_full_scale():
    data = SimulationService.gen_classification(ClassifSimConfig(n1=1400, n2=3800, seed=0))
    train, val, test = SimulationService.carve_balanced_eval(data, 200, 400, seed=1)
    assert train.n == 4000
    assert np.bincount(val.region).tolist() == [0, 200, 200]
    assert np.bincount(test.region).tolist() == [0, 400, 400]


def test_carve_is_disjoint_and_deterministic():
    data = make_dataset((25, 25), d=1, kind='continuous', seed=3)
    # Unique feature values identify rows
    data = type(data)(features=np.arange(50.0).reshape(-1, 1), region=data.region, target=data.target,
                      target_kind='continuous', n_regions=2)
    train, val, test = SimulationService.carve_balanced_eval(data, 5, 10, seed=2)
    ids = [set(part.features[:, 0].tolist()) for part in (train, val, test)]
    assert ids[0].isdisjoint(ids[1]) and ids[0].isdisjoint(ids[2]) and ids[1].isdisjoint(ids[2])
    assert set().union(*ids) == set(range(50))
    assert np.bincount(val.region).tolist() == [0, 5, 5]
    again = SimulationService.carve_balanced_eval(data, 5, 10, seed=2)
    assert all(a.equals(b) for a, b in zip((train, val, test), again))


def test_carve_nothing_returns_input():
    data = make_dataset((5, 7), seed=0)
    train, val, test = SimulationService.carve_balanced_eval(data, 0, 0, seed=0)
    assert train.equals(data)
    assert val.n == 0 and test.n == 0


def test_carve_rejects_small_regions():
    with pytest.raises(CapacityError):
        SimulationService.carve_balanced_eval(make_dataset((5, 50)), 3, 3, seed=0)
