"""Config-driven orchestration behind the command-line surface."""
import json
import logging
import os
from typing import Any, Dict, List, Optional, Tuple

import pandas as pd

from models.dataset import Dataset
from models.errors import ConfigError, EmptyInputError
from models.experiment import SWEEP_PARAMS, ExperimentConfig, IndexReport, LambdaConfig, TuneResult
from models.generator import AutoencoderModel, AutoencoderSpec
from models.simulation import ClassifSimConfig, RegressSimConfig
from services.codsa_service import CodsaService, r_key, reserved_size
from services.csv_service import CSVService
from services.export_service import ExportService
from services.generator_service import GeneratorService
from services.seeding import derive_seed
from services.simulation_service import SimulationService
from services.tuning_service import TuningService, synthetic_count

logger = logging.getLogger(__name__)

SPLIT_FILES = ('train.csv', 'val.csv', 'test.csv')
CODSA_METHODS = ('codsa', 'codsa-transfer')


class ExperimentService:
    """Load, prepare, tune, diagnose and export one experiment configuration."""

    @staticmethod
    def load_config(path: str) -> Tuple[ExperimentConfig, bytes]:
        """Read and validate a JSON configuration.

        Args:
            path: Path to the configuration file

        Returns:
            Tuple of (validated config, raw file bytes for the manifest digest)
        """
        if not path or not os.path.isfile(path):
            raise ConfigError(f"configuration file not found: {path}")
        with open(path, 'rb') as f:
            raw = f.read()
        try:
            document = json.loads(raw.decode('utf-8'))
        except UnicodeDecodeError:
            raise ConfigError("configuration is not UTF-8 text") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}") from None
        return ExperimentConfig.from_dict(document), raw

    @staticmethod
    def with_seed(cfg: ExperimentConfig, seed: Optional[int]) -> ExperimentConfig:
        """Restrict the replicate seeds to one value when ``seed`` is given."""
        if seed is None:
            return cfg
        if seed < 0:
            raise ConfigError("seed must be >= 0", 'grid.seeds')
        cfg.grid.seeds = (int(seed),)
        return cfg

    # Data

    @staticmethod
    def simulate_data(cfg: ExperimentConfig, seed: int) -> Tuple[Dataset, Dataset, Dataset, Dict[str, Any]]:
        """Draw one replicate from the configured process and carve balanced evaluation sets.

        Returns:
            Tuple of (train, val, test, protocol description)
        """
        data = cfg.data
        dgp_seed = derive_seed(seed, 'dgp')
        protocol = {'seed': int(seed), 'dgp_seed': dgp_seed, 'n1': data.n1, 'n2': data.n2,
                    'val_per_region': data.val_per_region, 'test_per_region': data.test_per_region}
        if cfg.task == 'classification':
            dataset, thresholds = SimulationService.gen_classification_with_thresholds(
                ClassifSimConfig(n1=data.n1, n2=data.n2, seed=dgp_seed))
            protocol['thresholds'] = thresholds
        else:
            dataset = SimulationService.gen_regression(
                RegressSimConfig(n1=data.n1, n2=data.n2, sigma=data.sigma, seed=dgp_seed))
            protocol['sigma'] = data.sigma
        train, val, test = SimulationService.carve_balanced_eval(
            dataset, data.val_per_region, data.test_per_region, derive_seed(seed, 'carve'))
        protocol['rows'] = {'train': train.n, 'val': val.n, 'test': test.n}
        logger.info("Simulated %s data for seed %d: %d train, %d val, %d test rows",
                    cfg.task, seed, train.n, val.n, test.n)
        return train, val, test, protocol

    @staticmethod
    def read_data(cfg: ExperimentConfig) -> Tuple[Dataset, Dataset, Dataset]:
        """Read train/val/test CSVs from ``data.dir``."""
        kind = 'class' if cfg.task == 'classification' else 'continuous'
        parts = []
        for name in SPLIT_FILES:
            path = os.path.join(cfg.data.dir, name)
            if not os.path.isfile(path):
                raise ConfigError(f"expected {path}", 'data.dir')
            parts.append(CSVService.read_csv(path, target_kind=kind))
        n_regions = max(p.n_regions for p in parts)
        if any(p.n_regions != n_regions for p in parts):
            parts = [CSVService.read_csv(os.path.join(cfg.data.dir, name), kind, n_regions) for name in SPLIT_FILES]
        return parts[0], parts[1], parts[2]

    @staticmethod
    def source_autoencoder(cfg: ExperimentConfig, seed: int, source_size: Optional[int] = None) -> AutoencoderModel:
        """Stored pretrained autoencoder, or one pretrained on a fresh source sample."""
        if cfg.transfer.checkpoint and source_size is None:
            if not os.path.isfile(cfg.transfer.checkpoint):
                raise ConfigError(f"checkpoint not found: {cfg.transfer.checkpoint}", 'transfer.checkpoint')
            return GeneratorService.load_autoencoder(cfg.transfer.checkpoint)
        size = source_size or cfg.transfer.source_size
        source = SimulationService.gen_source(cfg.task, size, derive_seed(seed, 'transfer'), cfg.data.sigma)
        gen = cfg.generator
        epochs = gen.ae_epochs if cfg.transfer.ae_epochs is None else cfg.transfer.ae_epochs
        logger.info("Pretraining autoencoder on %d source rows (seed %d)", size, seed)
        return GeneratorService.pretrain_transfer(source, AutoencoderSpec(tuple(gen.ae_hidden), gen.latent_dim),
                                                  epochs, gen.ae_lr, derive_seed(seed, 'pretrain'),
                                                  batch_size=gen.batch_size)

    # Tuning

    @staticmethod
    def _tune_once(cfg: ExperimentConfig, method: str, train: Dataset, val: Dataset, test: Dataset,
                   seeds: List[int], workers: int, transfer: Optional[AutoencoderModel],
                   tau_samples: int) -> TuneResult:
        return TuningService.tune(train, val, test, cfg.grid, cfg.generator, cfg.estimator, transfer=transfer,
                                  seeds=seeds, method=method, q=cfg.q(train.n_regions),
                                  oversampling=cfg.oversampling, crossfit=cfg.crossfit, workers=workers,
                                  tau_samples=tau_samples)

    @staticmethod
    def tune_method(cfg: ExperimentConfig, method: Optional[str] = None, workers: int = 1,
                    source_size: Optional[int] = None, tau_samples: int = 0,
                    keep_data: bool = False) -> Tuple[TuneResult, Dict[int, Tuple[Dataset, Dataset, Dataset]]]:
        """Tune one method over every replicate seed.

        Simulated experiments draw fresh data per seed; prepared CSVs are
        shared by every seed.

        Returns:
            Tuple of (merged TuneResult, data by seed when ``keep_data`` is set)
        """
        method = method or cfg.method
        seeds = list(cfg.seeds)
        if not seeds:
            raise EmptyInputError("no replicate seeds configured")
        data_by_seed = {}
        if cfg.data.dir:
            train, val, test = ExperimentService.read_data(cfg)
            if method == 'codsa-transfer':
                results = [ExperimentService._tune_once(
                    cfg, method, train, val, test, [seed], workers,
                    ExperimentService.source_autoencoder(cfg, seed, source_size), tau_samples) for seed in seeds]
                result = TuningService.merge(results, train.n_regions)
            else:
                result = ExperimentService._tune_once(cfg, method, train, val, test, seeds, workers, None,
                                                      tau_samples)
            if keep_data:
                data_by_seed = {seed: (train, val, test) for seed in seeds}
            return result, data_by_seed

        results = []
        n_regions = 2
        for seed in seeds:
            train, val, test, _ = ExperimentService.simulate_data(cfg, seed)
            n_regions = train.n_regions
            transfer = None
            if method == 'codsa-transfer':
                transfer = ExperimentService.source_autoencoder(cfg, seed, source_size)
            results.append(ExperimentService._tune_once(cfg, method, train, val, test, [seed], workers, transfer,
                                                        tau_samples))
            if keep_data:
                data_by_seed[seed] = (train, val, test)
        return TuningService.merge(results, n_regions), data_by_seed

    @staticmethod
    def _index_reports(result: TuneResult) -> List[Dict[str, Any]]:
        """Indices of each seed's selected lambda, read from the tuning table."""
        n_regions = len([c for c in result.best.columns if c.startswith('alpha_')])
        reports = []
        for row in result.best.to_dict('records'):
            reports.append({
                'seed': int(row['seed']), 'method': row['method'], 'baseline': bool(row['baseline']),
                'lambda': {'alpha': [row[f"alpha_{k}"] for k in range(1, n_regions + 1)],
                           'm': int(row['m']), 'r': row['r']},
                'D': row.get('D'), 'G': row.get('G'),
                'tau_hat': [row.get(f"tau_{k}") for k in range(1, n_regions + 1)],
                'val_overall': row['val_overall'], 'test_overall': row['test_overall'],
            })
        return reports

    @staticmethod
    def _save_generators(cfg: ExperimentConfig, result: TuneResult, data_by_seed, out_dir: str) -> List[str]:
        """Retrain and store the generator of each seed's selected lambda.

        Generator streams depend only on (seed, r), so the stored model is
        the one the tuner used.
        """
        paths = []
        for row in result.best.to_dict('records'):
            seed = int(row['seed'])
            if bool(row['baseline']) or int(row['m']) == 0:
                continue
            train = data_by_seed[seed][0]
            split = CSVService.stratified_split(train, row['r'], derive_seed(seed, 'split'))
            transfer = None
            if cfg.method == 'codsa-transfer':
                transfer = ExperimentService.source_autoencoder(cfg, seed)
            generator = GeneratorService.train_generator(
                split.generator_part, cfg.generator, derive_seed(seed, 'generator', r_key(row['r'])), transfer)
            path = os.path.join(out_dir, f"generator_seed{seed}.json")
            GeneratorService.save_generator(generator, path)
            paths.append(path)
        return paths

    @staticmethod
    def dry_run(cfg: ExperimentConfig) -> Dict[str, Any]:
        """Describe what ``run`` would do without drawing data or training."""
        n_regions = len(cfg.eval_weights) if cfg.eval_weights else 2
        p = [1.0 / n_regions] * n_regions
        points = TuningService.expand(cfg.grid, cfg.method, p, cfg.oversampling, cfg.crossfit)
        return {'task': cfg.task, 'method': cfg.method, 'variant': cfg.variant,
                'grid_points': len(points), 'seeds': list(cfg.seeds),
                'jobs': len(points) * len(cfg.seeds)}

    @staticmethod
    def run(cfg: ExperimentConfig, raw: bytes, out_dir: str, workers: int = 1,
            save_generators: bool = True) -> List[str]:
        """Tune the configured method and write results, tuning table, indices and report.

        Returns:
            Paths of every file written
        """
        want_generators = save_generators and cfg.method in CODSA_METHODS
        tau_samples = cfg.data.val_per_region if cfg.method in CODSA_METHODS else 0
        result, data_by_seed = ExperimentService.tune_method(cfg, workers=workers, tau_samples=tau_samples,
                                                            keep_data=want_generators)
        outputs = [
            ExportService.write_results([result], os.path.join(out_dir, 'results.csv')),
            ExportService.write_tuning_table(result, os.path.join(out_dir, 'tuning_table.csv')),
            ExportService.write_index_reports(ExperimentService._index_reports(result),
                                              os.path.join(out_dir, 'index_reports.json')),
            ExportService.write_text_report([result], os.path.join(out_dir, 'report.txt')),
        ]
        if want_generators:
            outputs.extend(ExperimentService._save_generators(cfg, result, data_by_seed, out_dir))
        outputs.append(ExportService.write_manifest(
            os.path.join(out_dir, 'manifest.json'), 'run', cfg.to_dict(), ExportService.config_digest(raw),
            list(cfg.seeds), outputs))
        return outputs

    @staticmethod
    def sweep(cfg: ExperimentConfig, raw: bytes, param: str, out_dir: str, workers: int = 1) -> List[str]:
        """Marginal sweep over one hyperparameter, written as ``sweep_<param>.csv``."""
        if param not in SWEEP_PARAMS:
            raise ConfigError(f"unknown sweep parameter '{param}', expected one of {', '.join(SWEEP_PARAMS)}")
        result, _ = ExperimentService.tune_method(cfg, workers=workers)
        n_regions = len([c for c in result.table.columns if c.startswith('alpha_')])
        table = TuningService.marginal_sweep(result.table, param, cfg.q(n_regions))
        outputs = [
            ExportService.write_sweep(table, os.path.join(out_dir, f"sweep_{param}.csv")),
            ExportService.write_tuning_table(result, os.path.join(out_dir, 'tuning_table.csv')),
        ]
        outputs.append(ExportService.write_manifest(
            os.path.join(out_dir, 'manifest.json'), f"sweep {param}", cfg.to_dict(),
            ExportService.config_digest(raw), list(cfg.seeds), outputs))
        return outputs

    @staticmethod
    def simulate(cfg: ExperimentConfig, raw: bytes, out_dir: str) -> List[str]:
        """Write train/val/test CSVs for the first seed plus the carving protocol."""
        if cfg.data.dir:
            raise ConfigError("simulate draws data itself; remove data.dir", 'data.dir')
        seed = cfg.seeds[0]
        train, val, test, protocol = ExperimentService.simulate_data(cfg, seed)
        outputs = []
        for name, part in zip(SPLIT_FILES, (train, val, test)):
            path = os.path.join(out_dir, name)
            CSVService.write_csv(part, path)
            outputs.append(path)
        stats = {name.split('.')[0]: CSVService.region_stats(part).to_dict()
                 for name, part in zip(SPLIT_FILES, (train, val, test))}
        outputs.append(ExportService.write_manifest(
            os.path.join(out_dir, 'manifest.json'), 'simulate', cfg.to_dict(), ExportService.config_digest(raw),
            [seed], outputs, extra={'protocol': protocol, 'region_stats': stats}))
        return outputs

    @staticmethod
    def pretrain(cfg: ExperimentConfig, raw: bytes, out_dir: str, ablation: bool = False,
                 workers: int = 1) -> List[str]:
        """Pretrain the transfer autoencoder; with ``ablation`` also tune per source size."""
        seed = cfg.seeds[0]
        os.makedirs(out_dir, exist_ok=True)
        ae = ExperimentService.source_autoencoder(cfg, seed, cfg.transfer.source_size)
        path = os.path.join(out_dir, 'autoencoder.json')
        GeneratorService.save_autoencoder(ae, path)
        outputs = [path]
        if ablation:
            rows = []
            for size in cfg.transfer.ablation_sizes:
                result, _ = ExperimentService.tune_method(cfg, method='codsa-transfer', workers=workers,
                                                          source_size=size)
                mean, se = result.summary['overall']
                rows.append({'source_size': size, 'metric': result.metric, 'mean': mean, 'se': se,
                             'n_seeds': len(result.best)})
                logger.info("Source size %d: overall %s %.4f (%.4f)", size, result.metric, mean, se)
            outputs.append(ExportService.write_sweep(pd.DataFrame(rows),
                                                     os.path.join(out_dir, 'ablation_pretrain.csv')))
        outputs.append(ExportService.write_manifest(
            os.path.join(out_dir, 'manifest.json'), 'pretrain', cfg.to_dict(), ExportService.config_digest(raw),
            [seed], outputs, extra={'source_size': cfg.transfer.source_size, 'ablation': ablation}))
        return outputs

    @staticmethod
    def diagnose(cfg: ExperimentConfig, raw: bytes, out_dir: str) -> List[str]:
        """Domain index, generation index and per-region generation error of a stored generator.

        The allocation defaults to the optimal one for the configured m/n and r.
        """
        path = cfg.diagnose.checkpoint
        if not path:
            raise ConfigError("a generator checkpoint is required", 'diagnose.checkpoint')
        if not os.path.isfile(path):
            raise ConfigError(f"checkpoint not found: {path}", 'diagnose.checkpoint')
        generator = GeneratorService.load_generator(path)

        seed = cfg.seeds[0]
        if cfg.data.dir:
            train, val, _ = ExperimentService.read_data(cfg)
        else:
            train, val, _, _ = ExperimentService.simulate_data(cfg, seed)
        if generator.n_regions != train.n_regions:
            raise ConfigError(f"generator has {generator.n_regions} regions, data has {train.n_regions}",
                              'diagnose.checkpoint')

        d = cfg.diagnose
        q = cfg.q(train.n_regions)
        p = CSVService.region_stats(train).proportions
        m = synthetic_count(d.m_over_n, train.n)
        alpha = d.alpha if d.alpha is not None else tuple(CodsaService.allocate_optimal(q, p, train.n, m, d.r))
        lam = LambdaConfig(alpha, m, d.r)
        n_r = reserved_size(train.n, d.r)
        tau = CodsaService.estimate_tau(generator, val.real_rows(), d.tau_samples, derive_seed(seed, 'tau'))
        report = IndexReport(
            D=CodsaService.domain_index(lam.alpha, m, p, train.n, d.r, q),
            G=CodsaService.generation_index(lam.alpha, m, n_r, tau),
            alpha_tilde=list(CodsaService.effective_proportions(lam.alpha, m, p, train.n, d.r))
            if m + n_r > 0 else [float('nan')] * train.n_regions,
            tau_hat=tau, lam=lam, n_r=n_r, seed=seed)
        logger.info("Diagnosed %s: D=%.4g, G=%.4g", path, report.D, report.G)
        outputs = [ExportService.write_index_reports(report.to_dict(), os.path.join(out_dir, 'index_report.json'))]
        outputs.append(ExportService.write_manifest(
            os.path.join(out_dir, 'manifest.json'), 'diagnose', cfg.to_dict(), ExportService.config_digest(raw),
            [seed], outputs, extra={'checkpoint': os.path.basename(path)}))
        return outputs
