"""Tests for the SMOTE, ADASYN and SMOGN oversamplers."""
import logging

import numpy as np
import pytest

from models.dataset import Dataset
from models.errors import CapacityError
from services.oversampling_service import OversamplingService
from conftest import make_dataset


def _two_point_minority():
    features = np.array([[0.0, 0.0], [1.0, 1.0], [5.0, 5.0], [6.0, 5.0], [5.0, 6.0]])
    region = np.array([1, 1, 2, 2, 2])
    return Dataset(features=features, region=region, target=(region - 1).astype(float), target_kind='class',
                   n_regions=2)


def _cross(s, a, b):
    u, v = s - a, b - a
    return u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]


def test_smote_two_points_lie_on_segment():
    out = OversamplingService.smote(_two_point_minority(), 1, 50, k_neighbors=1, seed=0)
    assert out.n == 50
    np.testing.assert_allclose(out.features[:, 0], out.features[:, 1])
    assert np.all((out.features >= 0) & (out.features <= 1))
    assert out.synthetic.all() and np.all(out.region == 1) and np.all(out.target == 0)


def test_smote_zero_rows():
    assert OversamplingService.smote(_two_point_minority(), 1, 0, k_neighbors=1, seed=0).n == 0


@pytest.mark.parametrize('method', ['smote', 'adasyn'])
def test_synthetic_points_are_collinear_with_parents(method):
    data = make_dataset((40, 60), d=2, seed=3, shift=1.0)
    sampler = getattr(OversamplingService, method)
    out, parents = sampler(data, 1, 200, k_neighbors=5, seed=1, return_parents=True)
    a, b = data.features[parents[:, 0]], data.features[parents[:, 1]]
    assert np.all(np.abs(_cross(out.features, a, b)) < 1e-9)
    assert np.all(data.region[parents] == 1)


def test_adasyn_quotas_follow_density_ratio():
    features = np.array([[0.0, 0.0], [10.0, 10.0], [-0.1, -0.1]])
    region = np.array([1, 1, 2])
    data = Dataset(features=features, region=region, target=(region - 1).astype(float), target_kind='class',
                   n_regions=2)
    assert OversamplingService.adasyn_quotas(data, 1, 10, k_neighbors=1).tolist() == [10, 0]
    out = OversamplingService.adasyn(data, 1, 10, k_neighbors=1, seed=0)
    np.testing.assert_allclose(out.features[:, 0], out.features[:, 1])


def test_adasyn_falls_back_to_uniform(caplog):
    data = make_dataset((10, 10), d=2, seed=0, shift=100.0)
    with caplog.at_level(logging.WARNING):
        quotas = OversamplingService.adasyn_quotas(data, 1, 20, k_neighbors=3)
    assert quotas.tolist() == [2] * 10
    assert 'uniform' in caplog.text


def test_adasyn_quotas_sum_to_request():
    data = make_dataset((30, 30), d=2, seed=5, shift=1.0)
    for n_new in (0, 1, 17, 100):
        assert OversamplingService.adasyn_quotas(data, 1, n_new, k_neighbors=5).sum() == n_new


def test_interpolation_needs_more_rows_than_neighbours():
    with pytest.raises(CapacityError):
        OversamplingService.smote(make_dataset((3, 10)), 1, 5, k_neighbors=5, seed=0)


def test_smogn_without_noise_replicates_parents(reg_data):
    out, parents = OversamplingService.smogn(reg_data, 1, 30, perturb_sigma=0.0, seed=0, return_parents=True)
    np.testing.assert_array_equal(out.features, reg_data.features[parents])
    np.testing.assert_array_equal(out.target, reg_data.target[parents])
    assert np.all(reg_data.region[parents] == 1)


def test_smogn_noise_scale():
    data = make_dataset((200, 50), d=3, kind='continuous', seed=4)
    sigma = 0.04
    out, parents = OversamplingService.smogn(data, 1, 10000, perturb_sigma=sigma, seed=2, return_parents=True)
    scale = data.features[data.region == 1].std(axis=0, ddof=1)
    observed = (out.features - data.features[parents]).std(axis=0)
    np.testing.assert_allclose(observed, sigma * scale, rtol=0.1)
    assert np.any(out.target != data.target[parents])
    with pytest.raises(ValueError):
        OversamplingService.smogn(data, 1, 5, perturb_sigma=-0.1)


def test_augment_allocates_by_largest_remainder(class_data):
    out = OversamplingService.augment('smote', class_data, (0.6, 0.4), 10, seed=0)
    assert np.bincount(out.region, minlength=3)[1:].tolist() == [6, 4]
    assert out.synthetic.all()
    assert OversamplingService.augment('adasyn', class_data, (0.6, 0.4), 0, seed=0).n == 0
    with pytest.raises(ValueError):
        OversamplingService.augment('mixup', class_data, (0.5, 0.5), 10, seed=0)


def test_augment_is_deterministic(reg_data):
    a = OversamplingService.augment('smogn', reg_data, (0.7, 0.3), 20, seed=4, sigma=0.02)
    b = OversamplingService.augment('smogn', reg_data, (0.7, 0.3), 20, seed=4, sigma=0.02)
    assert a.equals(b)
