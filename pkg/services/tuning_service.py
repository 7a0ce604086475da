"""Grid search over lambda with generator caching and replicate seeds."""
import logging
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from tqdm import tqdm

from config import Config
from models.dataset import Dataset
from models.errors import CapacityError, ConfigError, EmptyInputError
from models.experiment import (SWEEP_PARAMS, TASKS, CrossfitConfig, GridPoint, GridSpec, LambdaConfig,
                               OversamplingConfig, TuneResult)
from models.generator import AutoencoderModel
from services.codsa_service import CodsaService, GeneratorCache
from services.csv_service import CSVService
from services.estimator_service import EstimatorService
from services.metrics_service import MetricsService
from services.oversampling_service import OVERSAMPLERS, OversamplingService
from services.seeding import derive_seed

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = {'m_over_n': 'm_over_n', 'alpha1': 'alpha_1', 'r': 'r'}


def synthetic_count(m_over_n: float, n: int) -> int:
    """m = round(m/n * n), halves rounded up."""
    return int(np.floor(m_over_n * n + 0.5))


def _metric_columns(prefix: str, metrics: Dict[str, float]) -> Dict[str, float]:
    return {f"{prefix}_{name}": value for name, value in metrics.items()}


def _nan_metrics(n_regions: int) -> Dict[str, float]:
    names = [f"region_{k}" for k in range(1, n_regions + 1)] + ['overall']
    return {name: float('nan') for name in names}


def _evaluate_block(seed: int, points: List[Tuple[int, GridPoint]], ctx: Dict[str, Any]) -> List[Dict[str, Any]]:
    """Evaluate grid points sharing one (seed, r) on validation and test."""
    train, val, test = ctx['train'], ctx['val'], ctx['test']
    method, task = ctx['method'], ctx['task']
    cache = GeneratorCache() if ctx['use_cache'] else None
    k_regions = train.n_regions
    rows = []
    for index, point in points:
        m = synthetic_count(point.m_over_n, train.n)
        row = {'seed': seed, 'point': index, 'method': method, 'baseline': point.baseline,
               'r': point.r, 'm_over_n': point.m_over_n, 'm': m,
               'sigma': float('nan') if point.sigma is None else point.sigma}
        row.update({f"alpha_{k}": a for k, a in enumerate(point.alpha, start=1)})
        report = None
        try:
            lam = LambdaConfig(point.alpha, m, point.r)
            if point.baseline or method in ('codsa', 'codsa-transfer'):
                model, report, val_metrics = CodsaService.run_codsa(
                    train, val, lam, ctx['gen_cfg'], ctx['est_cfg'], ctx['transfer'], seed, ctx['q'],
                    cache, ctx['tau_samples'])
            elif method == 'codsa-crossfit':
                model, val_metrics, _ = CodsaService.cross_fit_codsa(
                    train, val, lam, ctx['crossfit'].folds, ctx['gen_cfg'], ctx['est_cfg'], seed,
                    ctx['transfer'], cache)
            else:
                synthetic = OversamplingService.augment(
                    method, train, lam.alpha, m, derive_seed(seed, 'synthesis'),
                    ctx['oversampling'].k_neighbors, point.sigma or 0.0)
                augmented = CSVService.mix(train, synthetic)
                model = EstimatorService.fit(task, augmented, val, ctx['est_cfg'], derive_seed(seed, 'estimator'))
                val_metrics = MetricsService.evaluate(task, EstimatorService.predict(model, val.features), val)
            test_metrics = MetricsService.evaluate(task, EstimatorService.predict(model, test.features), test)
        except (ConfigError, CapacityError) as e:
            logger.warning("seed %d, point %d skipped: %s", seed, index, e)
            val_metrics = test_metrics = _nan_metrics(k_regions)
        row.update(_metric_columns('val', val_metrics))
        row.update(_metric_columns('test', test_metrics))
        row['D'] = report.D if report else float('nan')
        row['G'] = report.G if report else float('nan')
        for k in range(1, k_regions + 1):
            row[f"tau_{k}"] = report.tau_hat[k - 1] if report else float('nan')
        rows.append(row)
    logger.info("seed %d: evaluated %d grid point(s) at r=%s", seed, len(points), points[0][1].r)
    return rows


class TuningService:
    """Grid search on validation performance, parallel over (seed, r) blocks."""

    @staticmethod
    def default_grid(task: str, coarse: bool = False) -> GridSpec:
        """r in {0.1..1}, alpha1 in {0.1..0.9}, m/n in {0.1..2} plus the baseline point."""
        if task not in TASKS:
            raise ValueError(f"unknown task '{task}'")
        return GridSpec(coarse=coarse)

    @staticmethod
    def expand(grid: GridSpec, method: str, p: np.ndarray, oversampling: Optional[OversamplingConfig] = None,
               crossfit: Optional[CrossfitConfig] = None) -> List[GridPoint]:
        """Grid points a method is tuned over, in a fixed order."""
        baseline = GridPoint(tuple(float(v) for v in p), 0.0, 0.0, baseline=True)
        if method == 'baseline':
            return [baseline]
        points = [baseline] if grid.include_baseline and method != 'codsa-crossfit' else []
        allocations = grid.allocations()
        ratios = grid.axis(grid.m_over_n_values)
        if method in ('codsa', 'codsa-transfer'):
            r_values = grid.axis(grid.r_values)
        elif method == 'codsa-crossfit':
            crossfit = crossfit or CrossfitConfig()
            r_values = (crossfit.r,)
        else:
            r_values = (0.0,)
        sigmas = (None,)
        if method == 'smogn':
            sigmas = tuple((oversampling or OversamplingConfig()).sigma_values)
        for r in r_values:
            for alpha in allocations:
                for ratio in ratios:
                    for sigma in sigmas:
                        points.append(GridPoint(tuple(alpha), ratio, r, sigma))
        return points

    @staticmethod
    def tune(train: Dataset, val: Dataset, test: Dataset, grid: GridSpec, gen_cfg, est_cfg,
             transfer: Optional[AutoencoderModel] = None, seeds: Optional[Sequence[int]] = None,
             method: str = 'codsa', q=None, oversampling: Optional[OversamplingConfig] = None,
             crossfit: Optional[CrossfitConfig] = None, workers: int = 1, use_cache: bool = True,
             tau_samples: int = 0) -> TuneResult:
        """Evaluate every grid point per seed, pick the validation argmin, report its test metric.

        Every (seed, r) block draws from streams derived from the seed alone,
        so the table does not depend on ``workers`` or on caching.

        Returns:
            TuneResult with the full table, per-seed winners and mean/SE summary
        """
        seeds = list(grid.seeds if seeds is None else seeds)
        task = 'classification' if train.target_kind == 'class' else 'regression'
        if method in OVERSAMPLERS and method != 'smogn' and task != 'classification':
            raise ConfigError(f"{method} applies to classification only", 'method')
        p = CSVService.region_stats(train).proportions
        q = np.full(train.n_regions, 1.0 / train.n_regions) if q is None else np.asarray(q, dtype=np.float64)
        points = TuningService.expand(grid, method, p, oversampling, crossfit)
        if not points or not seeds:
            raise EmptyInputError("the tuning grid is empty")

        ctx = {'train': train, 'val': val, 'test': test, 'method': method, 'task': task,
               'gen_cfg': gen_cfg, 'est_cfg': est_cfg, 'transfer': transfer, 'q': q,
               'oversampling': oversampling or OversamplingConfig(), 'crossfit': crossfit or CrossfitConfig(),
               'use_cache': use_cache, 'tau_samples': tau_samples}
        blocks = []
        for seed in seeds:
            by_r: Dict[float, List[Tuple[int, GridPoint]]] = {}
            for index, point in enumerate(points):
                by_r.setdefault(point.r, []).append((index, point))
            blocks.extend((seed, block) for block in by_r.values())

        logger.info("Tuning %s over %d point(s) x %d seed(s) in %d block(s)", method, len(points), len(seeds),
                    len(blocks))
        results = Parallel(n_jobs=workers)(
            delayed(_evaluate_block)(seed, block, ctx)
            for seed, block in tqdm(blocks, desc=f"tuning {method}", disable=not Config.PROGRESS)
        )
        table = pd.DataFrame([row for rows in results for row in rows])
        table = table.sort_values(['seed', 'point'], kind='stable').reset_index(drop=True)

        best = TuningService.select_best(table, q)
        summary = TuningService.summarize(best, train.n_regions)
        variant = {'codsa': 'non-transfer', 'codsa-transfer': 'transfer',
                   'codsa-crossfit': 'cross-fit'}.get(method, 'none')
        return TuneResult(table=table, best=best, summary=summary, method=method, variant=variant,
                          metric=MetricsService.metric_name(task), seeds=seeds)

    @staticmethod
    def _ranked(rows: pd.DataFrame, q: np.ndarray) -> pd.DataFrame:
        alloc = rows[[f"alpha_{k}" for k in range(1, len(q) + 1)]].to_numpy()
        ranked = rows.assign(_dist=np.abs(alloc - q).sum(axis=1))
        ranked = ranked[np.isfinite(ranked['val_overall'])]
        return ranked.sort_values(['val_overall', 'm', 'r', '_dist', 'point'], kind='stable')

    @staticmethod
    def select_best(table: pd.DataFrame, q) -> pd.DataFrame:
        """Per seed, the row with the lowest validation metric.

        Ties go to the smaller m, then the smaller r, then the allocation
        closest to the evaluation weights.
        """
        if table.empty:
            raise EmptyInputError("no tuning results to select from")
        q = np.asarray(q, dtype=np.float64)
        winners = []
        for seed, rows in table.groupby('seed', sort=True):
            ranked = TuningService._ranked(rows, q)
            if ranked.empty:
                logger.warning("seed %s: every grid point failed", seed)
                continue
            winners.append(ranked.index[0])
        if not winners:
            raise EmptyInputError("every grid point failed for every seed")
        return table.loc[winners].reset_index(drop=True)

    @staticmethod
    def summarize(best: pd.DataFrame, n_regions: int) -> Dict[str, Tuple[float, float]]:
        labels = [f"region_{k}" for k in range(1, n_regions + 1)] + ['overall']
        summary = {}
        for label in labels:
            values = best[f"test_{label}"].dropna().tolist()
            summary[label] = MetricsService.aggregate_replicates(values) if values else (float('nan'), float('nan'))
        return summary

    @staticmethod
    def merge(results: List[TuneResult], n_regions: int) -> TuneResult:
        """Combine per-seed results of one method into a single result."""
        if not results:
            raise EmptyInputError("no tuning results to merge")
        table = pd.concat([r.table for r in results], ignore_index=True)
        best = pd.concat([r.best for r in results], ignore_index=True)
        first = results[0]
        return TuneResult(table=table, best=best, summary=TuningService.summarize(best, n_regions),
                          method=first.method, variant=first.variant, metric=first.metric,
                          seeds=[s for r in results for s in r.seeds])

    @staticmethod
    def marginal_sweep(table: pd.DataFrame, param: str, q) -> pd.DataFrame:
        """Fix one hyperparameter, select the other two on validation, report test mean/SE.

        Returns:
            One row per value of ``param`` (baseline point excluded)
        """
        if param not in SWEEP_PARAMS:
            raise ValueError(f"unknown sweep parameter '{param}', expected one of {SWEEP_PARAMS}")
        column = SWEEP_COLUMNS[param]
        q = np.asarray(q, dtype=np.float64)
        grid_rows = table[~table['baseline'].astype(bool)]
        out = []
        for value in sorted(grid_rows[column].unique()):
            at_value = grid_rows[np.isclose(grid_rows[column], value)]
            val_best, test_best = [], []
            for _, rows in at_value.groupby('seed', sort=True):
                ranked = TuningService._ranked(rows, q)
                if ranked.empty:
                    continue
                val_best.append(ranked.iloc[0]['val_overall'])
                test_best.append(ranked.iloc[0]['test_overall'])
            if test_best:
                test_mean, test_se = MetricsService.aggregate_replicates(test_best)
                val_mean = float(np.mean(val_best))
            else:
                test_mean = test_se = val_mean = float('nan')
            out.append({'param': param, 'value': float(value), 'val_mean': val_mean,
                        'test_mean': test_mean, 'test_se': test_se, 'n_seeds': len(test_best)})
        return pd.DataFrame(out, columns=['param', 'value', 'val_mean', 'test_mean', 'test_se', 'n_seeds'])
