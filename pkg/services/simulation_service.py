"""Data-generating processes of the two simulation studies."""
import logging
from typing import Dict, Tuple

import numpy as np

from models.dataset import Dataset
from models.errors import CapacityError, GenerationError
from models.simulation import ClassifSimConfig, RegressSimConfig

logger = logging.getLogger(__name__)

DECISION_WEIGHTS = np.linspace(-1.0, 1.0, 5)
REGRESSION_BETA = np.array([3.0, 2.0, -1.0, 0.5, 1.0])
MAX_DRAW_ROUNDS = 1000


class SimulationService:
    """Deterministic-given-seed simulators and the balanced carving protocol."""

    @staticmethod
    def draw_latents(rng: np.random.Generator, size: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """u1 ~ .5N(-2,1)+.5N(2,1), u2 ~ .5U(0,1)+.5U(2,3), u3 ~ Exp(1)-1."""
        u1 = np.where(rng.random(size) < 0.5, -2.0, 2.0) + rng.standard_normal(size)
        u2 = np.where(rng.random(size) < 0.5, 0.0, 2.0) + rng.random(size)
        u3 = rng.exponential(1.0, size) - 1.0
        return u1, u2, u3

    @staticmethod
    def classification_features(u1: np.ndarray, u2: np.ndarray, u3: np.ndarray) -> np.ndarray:
        return np.column_stack([
            u1 * u2, u1 * u3, u2 * u3, u1 ** 2, u2 ** 2,
            u3 ** 2, u1 * u2 * u3, u1 ** 3, u2 ** 3, u3 ** 3,
        ])

    @staticmethod
    def decision_score(x: np.ndarray, w: np.ndarray = DECISION_WEIGHTS):
        """s(x) = sin^2(2*pi*a/(1+|a|)) - cos^2(3*pi*b/(1+|b|)).

        a and b are the projections of the first and last five features on w.
        Accepts one 10-vector (returns a float) or an (n x 10) matrix.
        """
        x = np.asarray(x, dtype=np.float64)
        w = np.asarray(w, dtype=np.float64)
        if x.shape[-1] != 10 or w.shape != (5,):
            raise ValueError(f"expected 10 features and 5 weights, got {x.shape[-1]} and {w.shape}")
        a = x[..., :5] @ w
        b = x[..., 5:] @ w
        s = np.sin(2.0 * np.pi * a / (1.0 + np.abs(a))) ** 2 - np.cos(3.0 * np.pi * b / (1.0 + np.abs(b))) ** 2
        return float(s) if np.ndim(s) == 0 else s

    @staticmethod
    def gen_classification_with_thresholds(cfg: ClassifSimConfig) -> Tuple[Dataset, Dict[str, float]]:
        """Generate the classification sample and report tau_lo, tau_hi, tau, delta.

        Thresholds are linear-interpolation quantiles of s over the first pool
        of n1 + n2 draws and stay frozen while further pools fill the quotas.
        """
        rng = np.random.default_rng(cfg.seed)
        n = cfg.n1 + cfg.n2

        pools, labels = [], []
        u1, u2, u3 = SimulationService.draw_latents(rng, n)
        x = SimulationService.classification_features(u1, u2, u3)
        s = SimulationService.decision_score(x)
        if np.ptp(s) == 0:
            raise GenerationError("decision scores are all equal; cannot set quantile thresholds")

        frac = cfg.n1 / (2.0 * n)
        tau_lo = float(np.quantile(s, frac))
        tau_hi = float(np.quantile(s, 1.0 - frac))
        tau = (tau_lo + tau_hi) / 2.0
        delta = (tau_hi - tau_lo) / 2.0
        if delta <= 0:
            raise GenerationError("degenerate decision-score distribution (zero half-range)")

        pools.append(x)
        labels.append((np.abs(s - tau) < delta).astype(np.int64))
        counts = np.bincount(labels[0], minlength=2)
        rounds = 1
        while counts[0] < cfg.n1 or counts[1] < cfg.n2:
            if rounds >= MAX_DRAW_ROUNDS:
                raise GenerationError(f"could not fill class quotas after {rounds} draws")
            x = SimulationService.classification_features(*SimulationService.draw_latents(rng, n))
            y = (np.abs(SimulationService.decision_score(x) - tau) < delta).astype(np.int64)
            pools.append(x)
            labels.append(y)
            counts += np.bincount(y, minlength=2)
            rounds += 1

        x_all = np.vstack(pools)
        y_all = np.concatenate(labels)
        keep = np.zeros(len(y_all), dtype=bool)
        keep[np.flatnonzero(y_all == 0)[:cfg.n1]] = True
        keep[np.flatnonzero(y_all == 1)[:cfg.n2]] = True

        y = y_all[keep]
        logger.debug("Classification sample drawn in %d round(s), tau=%.4f delta=%.4f", rounds, tau, delta)
        dataset = Dataset(features=x_all[keep], region=y + 1, target=y.astype(np.float64),
                          target_kind='class', n_regions=2)
        thresholds = {'tau_lo': tau_lo, 'tau_hi': tau_hi, 'tau': tau, 'delta': delta}
        return dataset, thresholds

    @staticmethod
    def gen_classification(cfg: ClassifSimConfig) -> Dataset:
        """Imbalanced classification sample; region 1 = {Y=0}, region 2 = {Y=1}."""
        return SimulationService.gen_classification_with_thresholds(cfg)[0]

    @staticmethod
    def regression_features(u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
        above = (u1 > 0.5).astype(np.float64)
        return np.column_stack([
            u1,
            above * u1 + u2,
            above * u2 + np.log1p(np.abs(u2)),
            np.abs(u2),
            u1 - u2,
        ])

    @staticmethod
    def regression_function(x: np.ndarray, region: np.ndarray) -> np.ndarray:
        """2(x.beta)^2 + x.beta on region 1, 2(x.beta)^2 - x.beta on region 2."""
        xb = np.asarray(x, dtype=np.float64) @ REGRESSION_BETA
        return 2.0 * xb ** 2 + np.where(np.asarray(region) == 1, xb, -xb)

    @staticmethod
    def gen_regression(cfg: RegressSimConfig) -> Dataset:
        rng = np.random.default_rng(cfg.seed)
        u1 = np.concatenate([rng.uniform(0.0, 0.5, cfg.n1), rng.uniform(0.5, 1.0, cfg.n2)])
        region = np.concatenate([np.ones(cfg.n1, dtype=np.int64), np.full(cfg.n2, 2, dtype=np.int64)])
        u2 = u1 ** 2 + rng.standard_normal(len(u1))
        x = SimulationService.regression_features(u1, u2)
        y = SimulationService.regression_function(x, region) + cfg.sigma * rng.standard_normal(len(u1))
        return Dataset(features=x, region=region, target=y, target_kind='continuous', n_regions=2)

    @staticmethod
    def gen_source(task: str, size: int, seed: int, sigma: float = 0.2) -> Dataset:
        """Independent region-balanced sample from the same process, for pretraining."""
        half = size // 2
        if task == 'classification':
            return SimulationService.gen_classification(ClassifSimConfig(n1=half, n2=size - half, seed=seed))
        if task == 'regression':
            return SimulationService.gen_regression(RegressSimConfig(n1=half, n2=size - half, sigma=sigma, seed=seed))
        raise ValueError(f"unknown task '{task}'")

    @staticmethod
    def carve_balanced_eval(dataset: Dataset, val_per_region: int, test_per_region: int,
                            seed: int) -> Tuple[Dataset, Dataset, Dataset]:
        """Carve balanced validation and test sets; the remainder is the training set.

        Returns:
            Tuple of (train, validation, test), pairwise disjoint
        """
        rng = np.random.default_rng(seed)
        need = val_per_region + test_per_region
        train_rows, val_rows, test_rows = [], [], []
        for k in range(1, dataset.n_regions + 1):
            members = dataset.region_index(k)
            if len(members) < need:
                raise CapacityError(
                    f"region {k} has {len(members)} rows, needs {need} for validation and test")
            members = rng.permutation(members)
            val_rows.append(members[:val_per_region])
            test_rows.append(members[val_per_region:need])
            train_rows.append(members[need:])

        def pick(rows):
            return dataset.subset(np.sort(np.concatenate(rows)))

        return pick(train_rows), pick(val_rows), pick(test_rows)
