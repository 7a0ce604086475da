"""Conditional data synthesis augmentation: allocation, indices and the end-to-end fit."""
import logging
import math
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.stats import wasserstein_distance

from config import Config
from models.dataset import Dataset
from models.errors import (CapacityError, ConfigError, DimensionError, FeasibilityError, ProvenanceError,
                           SimplexError, UnboundedAllocationError, UndefinedIndexError)
from models.estimator import CrossFitModel
from models.experiment import IndexReport, LambdaConfig
from models.generator import AutoencoderModel, GeneratorModel
from services.csv_service import CSVService
from services.estimator_service import EstimatorService
from services.generator_service import GeneratorService
from services.metrics_service import MetricsService
from services.seeding import derive_seed

logger = logging.getLogger(__name__)

TOL = 1e-9


def reserved_size(n: int, r: float) -> int:
    """n_r = n - floor(r n)."""
    return int(n) - int(math.floor(r * n + TOL))


def _distribution(v, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64).reshape(-1)
    if arr.size == 0 or np.any(arr < -TOL) or abs(arr.sum() - 1.0) > TOL:
        raise SimplexError(f"{name} = {arr.tolist()} is not a probability vector")
    return arr


def r_key(r: float) -> str:
    return f"{r:.6g}"


class SynthesisCache:
    """Synthetic rows of one generator, grown in fixed chunks per region.

    Region k's rows come from the same per-chunk streams as
    GeneratorService.synthesize, so every prefix matches an uncached draw.
    """

    def __init__(self, generator: GeneratorModel, seed: int):
        self.generator = generator
        self.seed = seed
        self.tau: Optional[List[float]] = None
        self._rows: Dict[int, np.ndarray] = {}

    def rows(self, k: int, count: int) -> np.ndarray:
        have = self._rows.get(k)
        have_chunks = 0 if have is None else len(have) // Config.SYNTHESIS_CHUNK
        need_chunks = math.ceil(count / Config.SYNTHESIS_CHUNK)
        if need_chunks > have_chunks:
            more = GeneratorService.sample_region_rows(self.generator, k, have_chunks, need_chunks - have_chunks,
                                                       self.seed)
            self._rows[k] = more if have is None else np.vstack([have, more])
        return self._rows[k][:count]

    def synthesize(self, alpha, m: int) -> Dataset:
        counts = GeneratorService.allocate_counts(alpha, m)
        rows = {k: self.rows(k, int(c)) for k, c in enumerate(counts, start=1) if c > 0}
        return GeneratorService.rows_to_dataset(self.generator, rows)


class GeneratorCache:
    """Trained generators keyed by their training split, built on first use."""

    def __init__(self):
        self._entries: Dict[str, SynthesisCache] = {}

    def get(self, key: str, build: Callable[[], GeneratorModel], synthesis_seed: int) -> SynthesisCache:
        if key not in self._entries:
            self._entries[key] = SynthesisCache(build(), synthesis_seed)
        return self._entries[key]

    def __len__(self):
        return len(self._entries)


class CodsaService:
    """Optimal allocation, the D and G indices and end-to-end augmentation runs."""

    @staticmethod
    def min_feasible_m(q, p, n: int, r: float) -> int:
        """Smallest m placing every optimal allocation entry inside [0, 1]."""
        q = _distribution(q, 'q')
        p = _distribution(p, 'p')
        if q.shape != p.shape:
            raise DimensionError("q and p have different lengths")
        n_r = reserved_size(n, r)
        bound = 0.0
        for k, (qk, pk) in enumerate(zip(q, p), start=1):
            shift = qk - pk
            if abs(shift) <= TOL or n_r == 0:
                continue
            room = (1.0 - qk) if shift > 0 else qk
            if room <= TOL:
                raise UnboundedAllocationError(
                    f"region {k}: q_k = {qk} leaves no room to correct the shift {shift:+.4g}")
            bound = max(bound, n_r * abs(shift) / room)
        return int(math.ceil(bound - TOL))

    @staticmethod
    def allocate_optimal(q, p, n: int, m: int, r: float) -> np.ndarray:
        """alpha_k = q_k + (n_r / m)(q_k - p_k), the allocation making D zero.

        Raises:
            FeasibilityError: when m is below CodsaService.min_feasible_m
        """
        q = _distribution(q, 'q')
        p = _distribution(p, 'p')
        n_r = reserved_size(n, r)
        bound = CodsaService.min_feasible_m(q, p, n, r)
        if m < bound:
            raise FeasibilityError(f"m = {m} cannot rebalance the reserved data", bound)
        if m == 0 or n_r == 0:
            return q.copy()
        alpha = q + (n_r / m) * (q - p)
        return np.clip(alpha, 0.0, 1.0)

    @staticmethod
    def effective_proportions(alpha, m: int, p, n: int, r: float) -> np.ndarray:
        n_r = reserved_size(n, r)
        if m + n_r == 0:
            raise UndefinedIndexError("m + n_r = 0: the augmented sample is empty")
        return (np.asarray(alpha, dtype=np.float64) * m + np.asarray(p, dtype=np.float64) * n_r) / (m + n_r)

    @staticmethod
    def domain_index(alpha, m: int, p, n: int, r: float, q) -> float:
        """D = sum_k |alpha_tilde_k - q_k|."""
        alpha = _distribution(alpha, 'alpha')
        q = _distribution(q, 'q')
        tilde = CodsaService.effective_proportions(alpha, m, _distribution(p, 'p'), n, r)
        return float(np.abs(tilde - q).sum())

    @staticmethod
    def generation_index(alpha, m: int, n_r: int, tau) -> float:
        """G = m / (m + n_r) * sum_k alpha_k tau_k; zero without synthetic rows."""
        alpha = _distribution(alpha, 'alpha')
        tau = np.asarray(tau, dtype=np.float64).reshape(-1)
        if m == 0:
            return 0.0
        if np.any(np.isnan(tau)):
            return float('nan')
        if np.any(tau < 0):
            raise ValueError(f"generation errors must be >= 0, got {tau.tolist()}")
        return float(m / (m + n_r) * np.dot(alpha, tau))

    @staticmethod
    def sliced_w1(a: np.ndarray, b: np.ndarray, n_projections: int, rng: np.random.Generator) -> float:
        """Mean 1-D Wasserstein-1 distance over random unit projections."""
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
            raise DimensionError(f"samples of shapes {a.shape} and {b.shape} are not comparable")
        directions = rng.standard_normal((n_projections, a.shape[1]))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        return float(np.mean([wasserstein_distance(a @ theta, b @ theta) for theta in directions]))

    @staticmethod
    def estimate_tau(generator: GeneratorModel, holdout: Dataset, per_region: int, seed: int) -> List[float]:
        """Sliced-W1 distance between real holdout rows and generated rows, per region.

        Both sides are compared in the generator's standardized row space.
        Regions missing from the holdout get NaN.
        """
        if np.any(holdout.synthetic):
            raise ProvenanceError("the real side of the generation error contains synthetic rows")
        ae = generator.autoencoder
        real = GeneratorService.joint_matrix(holdout, ae.with_target)
        if real.shape[1] != ae.input_dim:
            raise DimensionError(f"holdout rows have {real.shape[1]} columns, generator expects {ae.input_dim}")
        n_chunks = math.ceil(per_region / Config.SYNTHESIS_CHUNK)
        tau = []
        for k in range(1, generator.n_regions + 1):
            mask = holdout.region == k
            if not mask.any():
                tau.append(float('nan'))
                continue
            synthetic = GeneratorService.sample_region_rows(generator, k, 0, n_chunks, derive_seed(seed, 'tau'))
            tau.append(CodsaService.sliced_w1((real[mask] - ae.shift) / ae.scale,
                                              (synthetic[:per_region] - ae.shift) / ae.scale,
                                              Config.TAU_PROJECTIONS, np.random.default_rng(derive_seed(seed, k))))
        return tau

    @staticmethod
    def _task(dataset: Dataset) -> str:
        return 'classification' if dataset.target_kind == 'class' else 'regression'

    @staticmethod
    def run_codsa(train: Dataset, val: Dataset, lam: LambdaConfig, gen_cfg, est_cfg,
                  transfer: Optional[AutoencoderModel] = None, seed: int = 0, q=None,
                  cache: Optional[GeneratorCache] = None, tau_samples: int = 0,
                  workers: int = 1) -> Tuple[object, IndexReport, Dict[str, float]]:
        """Split, train the conditional generator, synthesize, mix and fit.

        The generator is consulted only when m > 0. With ``cache`` the
        generator for this (seed, r) is trained once and synthetic rows are
        shared across allocations and sizes.

        Args:
            train: Real training rows
            val: Rows from the evaluation distribution
            lam: Tuning tuple (alpha, m, r)
            gen_cfg: GeneratorConfig
            est_cfg: EstimatorConfig
            transfer: Frozen pretrained autoencoder for the transfer variant
            seed: Replicate seed
            q: Evaluation weights (balanced by default)
            cache: Optional GeneratorCache shared across lambdas of one seed
            tau_samples: Rows per region for the generation-error estimate; 0 skips it

        Returns:
            Tuple of (fitted estimator, IndexReport on realized sizes, validation metrics)
        """
        if lam.n_regions != train.n_regions:
            raise DimensionError(f"allocation has {lam.n_regions} entries for {train.n_regions} regions")
        split = CSVService.stratified_split(train, lam.r, derive_seed(seed, 'split'))
        reserved, gen_part = split.reserved_part, split.generator_part

        generator, entry = None, None
        synthetic = Dataset.empty(train.d, train.target_kind, train.n_regions)
        if lam.m > 0:
            if gen_part.n == 0:
                raise ConfigError(f"r = {lam.r} leaves no rows to train the generator for m = {lam.m}", 'lambda.r')
            key = r_key(lam.r)

            def build():
                return GeneratorService.train_generator(gen_part, gen_cfg, derive_seed(seed, 'generator', key),
                                                        transfer)

            synthesis_seed = derive_seed(seed, 'synthesis', key)
            if cache is not None:
                entry = cache.get(key, build, synthesis_seed)
                generator = entry.generator
                synthetic = entry.synthesize(lam.alpha, lam.m)
            else:
                generator = build()
                synthetic = GeneratorService.synthesize(generator, lam.alpha, lam.m, synthesis_seed)

        augmented = CSVService.mix(reserved, synthetic)
        if augmented.n == 0:
            raise ConfigError(f"r = {lam.r} with m = 0 leaves no training rows", 'lambda.m')
        task = CodsaService._task(train)
        model = EstimatorService.fit(task, augmented, val, est_cfg, derive_seed(seed, 'estimator'), workers)
        metrics = MetricsService.evaluate(task, EstimatorService.predict(model, val.features), val)

        q = np.full(train.n_regions, 1.0 / train.n_regions) if q is None else np.asarray(q, dtype=np.float64)
        counts = np.bincount(augmented.region, minlength=train.n_regions + 1)[1:]
        alpha_tilde = counts / augmented.n
        tau = [float('nan')] * train.n_regions
        if generator is not None and tau_samples > 0:
            if entry is not None and entry.tau is not None:
                tau = entry.tau
            else:
                tau = CodsaService.estimate_tau(generator, val.real_rows(), tau_samples,
                                                derive_seed(seed, 'tau', r_key(lam.r)))
                if entry is not None:
                    entry.tau = tau
        report = IndexReport(
            D=float(np.abs(alpha_tilde - q).sum()),
            G=CodsaService.generation_index(lam.alpha, lam.m, reserved.n, tau),
            alpha_tilde=alpha_tilde.tolist(),
            tau_hat=tau,
            lam=lam,
            n_r=reserved.n,
            seed=seed,
        )
        logger.debug("lambda %s: n_r=%d, D=%.4f, validation %s", lam.to_dict(), reserved.n, report.D, metrics)
        return model, report, metrics

    @staticmethod
    def crossfit_folds(dataset: Dataset, folds: int, seed: int) -> np.ndarray:
        """Stratified fold id per row: region members are shuffled and dealt round-robin."""
        if folds < 2:
            raise ValueError(f"cross-fitting needs at least 2 folds, got {folds}")
        rng = np.random.default_rng(derive_seed(seed, 'folds'))
        fold_of = np.empty(dataset.n, dtype=np.int64)
        for k in range(1, dataset.n_regions + 1):
            members = dataset.region_index(k)
            if 0 < len(members) < folds:
                raise CapacityError(f"region {k} has {len(members)} rows, fewer than {folds} folds")
            fold_of[rng.permutation(members)] = np.arange(len(members)) % folds
        return fold_of

    @staticmethod
    def cross_fit_codsa(train: Dataset, val: Dataset, lam: LambdaConfig, folds: int, gen_cfg, est_cfg,
                        seed: int = 0, transfer: Optional[AutoencoderModel] = None,
                        cache: Optional[GeneratorCache] = None,
                        workers: int = 1) -> Tuple[CrossFitModel, Dict[str, float], np.ndarray]:
        """Rotate generator-training and estimation roles over K stratified folds.

        Each fold's estimator sees that fold plus m synthetic rows from a
        generator trained on the other folds; predictions are averaged.
        ``lam.r`` is implied by the fold count, (K - 1) / K.

        Returns:
            Tuple of (averaged model, validation metrics, fold id per training row)
        """
        implied = (folds - 1) / folds
        if abs(lam.r - implied) > 1e-6:
            logger.warning("Cross-fitting with %d folds uses r = %.3f; ignoring r = %.3f", folds, implied, lam.r)
        fold_of = CodsaService.crossfit_folds(train, folds, seed)
        task = CodsaService._task(train)
        members = []
        for j in range(folds):
            held = train.subset(np.flatnonzero(fold_of == j))
            rest = train.subset(np.flatnonzero(fold_of != j))
            synthetic = Dataset.empty(train.d, train.target_kind, train.n_regions)
            if lam.m > 0:
                key = f"fold-{j}"

                def build(rest=rest, key=key):
                    return GeneratorService.train_generator(rest, gen_cfg, derive_seed(seed, 'generator', key),
                                                            transfer)

                synthesis_seed = derive_seed(seed, 'synthesis', key)
                if cache is not None:
                    synthetic = cache.get(key, build, synthesis_seed).synthesize(lam.alpha, lam.m)
                else:
                    synthetic = GeneratorService.synthesize(build(), lam.alpha, lam.m, synthesis_seed)
            augmented = CSVService.mix(held, synthetic)
            members.append(EstimatorService.fit(task, augmented, val, est_cfg,
                                                derive_seed(seed, 'estimator', 'fold', j), workers))
        model = CrossFitModel(members)
        metrics = MetricsService.evaluate(task, EstimatorService.predict(model, val.features), val)
        return model, metrics, fold_of
