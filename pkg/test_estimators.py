"""Tests for the MLP classifier/regressor and the CART random forest."""
import logging

import numpy as np
import pytest

from models.dataset import Dataset
from models.errors import DimensionError, SchemaMismatchError
from models.estimator import ClassifierModel, CrossFitModel, ForestModel, RegressionTree
from models.network import MlpSpec
from services.csv_service import CSVService
from services.estimator_service import EstimatorService
from services.nn_service import NNService
from conftest import make_dataset


def _separable(n, seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, (n, 2))
    x[:, 0] += np.where(x[:, 0] >= 0, 0.5, -0.5)
    y = (x[:, 0] > 0).astype(np.float64)
    return Dataset(features=x, region=y.astype(int) + 1, target=y, target_kind='class', n_regions=2)


def _brute_force_split(x, y):
    best = None
    for j in range(x.shape[1]):
        values = np.unique(x[:, j])
        for lo, hi in zip(values[:-1], values[1:]):
            thr = (lo + hi) / 2.0
            left = x[:, j] <= thr
            sse = ((y[left] - y[left].mean()) ** 2).sum() + ((y[~left] - y[~left].mean()) ** 2).sum()
            if best is None or sse < best[2] - 1e-12:
                best = (j, thr, sse)
    return best


# Classifier

def test_classifier_separates_toy_data():
    train, val = _separable(200, 0), _separable(200, 1)
    model = EstimatorService.train_classifier(train, val, epochs_max=200, patience=200, lr=1e-2, seed=0,
                                              hidden=16, batch_size=32)
    probs = EstimatorService.predict_proba(model, val.features)
    loss, _ = NNService.loss_logistic(probs, val.target)
    assert loss < 0.1
    assert np.all((probs > 0) & (probs < 1))


def test_patience_zero_keeps_first_epoch():
    train, val = _separable(60, 2), _separable(60, 3)
    model = EstimatorService.train_classifier(train, val, epochs_max=50, patience=0, lr=1e-2, seed=0, hidden=8)
    assert model.best_epoch == 0
    assert len(model.val_history) == 1


def test_early_stopping_returns_minimum_validation_epoch():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((80, 2))
    y = (x[:, 0] + rng.standard_normal(80) > 0).astype(np.float64)
    train = Dataset(features=x[:40], region=y[:40].astype(int) + 1, target=y[:40], target_kind='class',
                    n_regions=2)
    val = Dataset(features=x[40:], region=y[40:].astype(int) + 1, target=y[40:], target_kind='class',
                  n_regions=2)
    model = EstimatorService.train_classifier(train, val, epochs_max=300, patience=10, lr=5e-2, seed=0,
                                              hidden=32, batch_size=8)
    history = np.asarray(model.val_history)
    assert model.best_epoch == int(np.argmin(history))
    assert len(history) <= model.best_epoch + 10 + 1
    best_loss = EstimatorService.empirical_loss(model, val)
    assert best_loss == pytest.approx(history.min(), rel=1e-6)


def test_single_class_fits_constant(caplog):
    data = make_dataset((0, 20), kind='class')
    with caplog.at_level(logging.WARNING):
        model = EstimatorService.train_classifier(data, None, epochs_max=5, seed=0, hidden=4)
    assert model.constant == 1.0
    assert 'Single-class' in caplog.text
    np.testing.assert_allclose(EstimatorService.predict_proba(model, data.features), 1.0 - 1e-7)


def test_classifier_rejects_non_binary_labels(reg_data):
    with pytest.raises(SchemaMismatchError):
        EstimatorService.train_classifier(reg_data, None, epochs_max=1)


def test_zero_network_predicts_one_half(rng):
    net = NNService.zeros_like(NNService.init_params(MlpSpec((3, 4, 4, 1), head='sigmoid'), rng))
    model = ClassifierModel(net=net, shift=np.zeros(3), scale=np.ones(3))
    np.testing.assert_allclose(EstimatorService.predict_proba(model, rng.standard_normal((5, 3))), 0.5)


def test_raising_final_bias_raises_probabilities(rng):
    net = NNService.init_params(MlpSpec((3, 4, 4, 1), head='sigmoid'), rng)
    model = ClassifierModel(net=net, shift=np.zeros(3), scale=np.ones(3))
    rows = rng.standard_normal((20, 3))
    before = EstimatorService.predict_proba(model, rows)
    net.biases[-1] = net.biases[-1] + 1.0
    after = EstimatorService.predict_proba(model, rows)
    assert np.all(after > before)
    np.testing.assert_allclose(EstimatorService.predict_proba(model, rows[::-1]), after[::-1])
    with pytest.raises(DimensionError):
        EstimatorService.predict_proba(model, rows[:, :2])


def test_regressor_mlp_learns_linear_target():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((300, 2))
    y = 3.0 * x[:, 0] - x[:, 1]
    train = Dataset(features=x[:200], region=np.ones(200, int), target=y[:200], target_kind='continuous')
    val = Dataset(features=x[200:], region=np.ones(100, int), target=y[200:], target_kind='continuous')
    model = EstimatorService.train_regressor_mlp(train, val, epochs_max=150, patience=20, lr=1e-2, seed=0,
                                                 hidden=16, batch_size=32)
    rmse = np.sqrt(np.mean((EstimatorService.predict(model, val.features) - val.target) ** 2))
    assert rmse < 0.2 * val.target.std()


# Trees and forests

def test_best_split_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = rng.standard_normal((5, 3))
        y = rng.standard_normal(5)
        feature, threshold, sse = EstimatorService.best_split(x, y)
        oracle = _brute_force_split(x, y)
        assert (feature, threshold) == (oracle[0], oracle[1])
        assert sse == pytest.approx(oracle[2], abs=1e-9)
        tree = EstimatorService.grow_tree(x, y)
        assert (tree.feature[0], tree.threshold[0]) == (oracle[0], oracle[1])


def test_best_split_ties_go_to_first_feature():
    x = np.array([[0.0, 0.0], [1.0, 1.0]])
    assert EstimatorService.best_split(x, np.array([0.0, 1.0]))[:2] == (0, 0.5)
    assert EstimatorService.best_split(np.ones((3, 2)), np.arange(3.0)) is None


def test_constant_target_gives_single_leaf():
    data = make_dataset((10, 10), kind='continuous')
    data = Dataset(features=data.features, region=data.region, target=np.full(20, 2.5),
                   target_kind='continuous', n_regions=2)
    forest = EstimatorService.train_forest(data, n_trees=3, seed=0)
    assert all(t.n_nodes == 1 for t in forest.trees)
    np.testing.assert_allclose(EstimatorService.predict(forest, data.features), 2.5)


def test_unbootstrapped_tree_interpolates_training_data():
    rng = np.random.default_rng(1)
    x = rng.uniform(-1, 1, (300, 2))
    y = np.sin(3 * x[:, 0]) + x[:, 1] ** 2
    data = Dataset(features=x, region=np.ones(300, int), target=y, target_kind='continuous')
    single = EstimatorService.train_forest(data, n_trees=1, seed=0, bootstrap=False)
    np.testing.assert_allclose(EstimatorService.predict(single, x), y)
    forest = EstimatorService.train_forest(data, n_trees=20, seed=0)
    rmse = np.sqrt(np.mean((EstimatorService.predict(forest, x) - y) ** 2))
    assert rmse <= 0.3 * y.std()
    assert all(np.all(np.isfinite(t.value)) for t in forest.trees)


def test_hand_built_forest_averages_leaves():
    split = RegressionTree(feature=np.array([0, -1, -1]), threshold=np.array([0.5, 0.0, 0.0]),
                           left=np.array([1, -1, -1]), right=np.array([2, -1, -1]),
                           value=np.array([2.0, 1.0, 3.0]))
    leaf = RegressionTree(feature=np.array([-1]), threshold=np.array([0.0]), left=np.array([-1]),
                          right=np.array([-1]), value=np.array([5.0]))
    rows = np.array([[0.0], [1.0]])
    forest = ForestModel(trees=[split, leaf], n_features=1)
    np.testing.assert_allclose(EstimatorService.forest_predict(forest, rows), [3.0, 4.0])
    swapped = ForestModel(trees=[leaf, split], n_features=1)
    np.testing.assert_allclose(EstimatorService.forest_predict(swapped, rows), [3.0, 4.0])


def test_forest_does_not_depend_on_workers(reg_data, tmp_path):
    one = EstimatorService.train_forest(reg_data, n_trees=4, seed=3, workers=1)
    two = EstimatorService.train_forest(reg_data, n_trees=4, seed=3, workers=2)
    np.testing.assert_array_equal(EstimatorService.predict(one, reg_data.features),
                                  EstimatorService.predict(two, reg_data.features))
    path = str(tmp_path / 'forest.json')
    EstimatorService.save_forest(one, path)
    loaded = EstimatorService.load_forest(path)
    np.testing.assert_array_equal(EstimatorService.predict(loaded, reg_data.features),
                                  EstimatorService.predict(one, reg_data.features))


def test_forest_requires_continuous_target(class_data):
    with pytest.raises(SchemaMismatchError):
        EstimatorService.train_forest(class_data, n_trees=1)


def test_fit_dispatch_and_crossfit_mean(class_data, tiny_est_cfg):
    first = EstimatorService.fit('classification', class_data, class_data, tiny_est_cfg, seed=0)
    second = EstimatorService.fit('classification', class_data, class_data, tiny_est_cfg, seed=1)
    assert isinstance(first, ClassifierModel)
    combined = CrossFitModel(members=[first, second])
    expected = (EstimatorService.predict(first, class_data.features)
                + EstimatorService.predict(second, class_data.features)) / 2
    np.testing.assert_allclose(EstimatorService.predict(combined, class_data.features), expected)
    loss = EstimatorService.empirical_loss(first, class_data)
    assert np.isfinite(loss) and loss > 0


def test_empirical_loss_ignores_row_duplication(class_data, reg_data, tiny_est_cfg):
    classifier = EstimatorService.fit('classification', class_data, class_data, tiny_est_cfg, seed=0)
    doubled = CSVService.concat([class_data, class_data])
    assert EstimatorService.empirical_loss(classifier, doubled) == pytest.approx(
        EstimatorService.empirical_loss(classifier, class_data), rel=1e-12)
    forest = EstimatorService.train_forest(reg_data, n_trees=3, seed=0)
    assert EstimatorService.empirical_loss(forest, CSVService.concat([reg_data, reg_data])) == pytest.approx(
        EstimatorService.empirical_loss(forest, reg_data), rel=1e-12)


def test_forest_predictions_stay_within_training_range(reg_data):
    forest = EstimatorService.train_forest(reg_data, n_trees=5, seed=1)
    far = EstimatorService.predict(forest, 10.0 * reg_data.features)
    assert far.min() >= reg_data.target.min()
    assert far.max() <= reg_data.target.max()
