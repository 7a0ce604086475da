"""Shared pytest configuration and fixtures."""
import sys
import os

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from config import Config  # noqa: E402
from models.dataset import Dataset  # noqa: E402
from models.experiment import EstimatorConfig, GeneratorConfig  # noqa: E402

Config.PROGRESS = False


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False, help='run slow statistical tests')


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: statistical end-to-end check, needs --runslow')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_dataset(counts, d=2, kind='class', seed=0, shift=3.0):
    """Regions as shifted Gaussian blobs; class targets equal region - 1."""
    r = np.random.default_rng(seed)
    region = np.concatenate([np.full(c, k, dtype=np.int64) for k, c in enumerate(counts, start=1)])
    x = r.standard_normal((len(region), d)) + shift * (region[:, None] - 1)
    if kind == 'class':
        target = (region - 1).astype(np.float64)
    elif kind == 'continuous':
        target = x.sum(axis=1) + 0.1 * r.standard_normal(len(region))
    else:
        target = None
    return Dataset(features=x, region=region, target=target, target_kind=kind if target is not None else 'none',
                   n_regions=len(counts))


@pytest.fixture
def class_data():
    return make_dataset((30, 70), kind='class', seed=1)


@pytest.fixture
def reg_data():
    return make_dataset((30, 70), kind='continuous', seed=2)


@pytest.fixture
def tiny_gen_cfg():
    """Small enough that a generator trains in well under a second."""
    return GeneratorConfig(ae_hidden=(8,), latent_dim=2, ae_epochs=3, ae_lr=1e-2, score_depth=2,
                           score_width=16, embed_dim=4, timesteps=20, epochs=3, lr=1e-3, batch_size=64)


@pytest.fixture
def tiny_est_cfg():
    return EstimatorConfig(kind='mlp', hidden=8, epochs_max=20, patience=5, lr=1e-2, batch_size=64)


@pytest.fixture
def tiny_forest_cfg():
    return EstimatorConfig(kind='forest', n_trees=5, min_samples_split=4)
