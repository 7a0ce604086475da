"""Tuning tuple, diagnostics report and experiment configuration."""
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from models.errors import ConfigError
from services.allocation import check_simplex

TASKS = ('classification', 'regression')
METHODS = ('baseline', 'smote', 'adasyn', 'smogn', 'codsa', 'codsa-transfer', 'codsa-crossfit')
METHOD_TASKS = {
    'smote': ('classification',),
    'adasyn': ('classification',),
    'smogn': ('regression',),
}
SWEEP_PARAMS = ('m_over_n', 'alpha1', 'r')


def _nan_to_none(value):
    if isinstance(value, float) and math.isnan(value):
        return None
    return value


@dataclass(frozen=True)
class LambdaConfig:
    """The tuning tuple lambda = (alpha, m, r)."""

    alpha: Tuple[float, ...]
    m: int
    r: float

    def __post_init__(self):
        object.__setattr__(self, 'alpha', tuple(float(a) for a in check_simplex(self.alpha)))
        if int(self.m) != self.m or self.m < 0:
            raise ValueError(f"synthetic size m must be a non-negative integer, got {self.m}")
        object.__setattr__(self, 'm', int(self.m))
        if not 0.0 <= self.r <= 1.0:
            raise ValueError(f"split ratio r must lie in [0, 1], got {self.r}")
        object.__setattr__(self, 'r', float(self.r))

    @property
    def n_regions(self) -> int:
        return len(self.alpha)

    def to_dict(self) -> Dict[str, Any]:
        return {'alpha': list(self.alpha), 'm': self.m, 'r': self.r}


@dataclass
class IndexReport:
    """Domain index D, generation index G and their ingredients for one lambda."""

    D: float
    G: float
    alpha_tilde: List[float]
    tau_hat: List[float]
    lam: Optional[LambdaConfig] = None
    n_r: int = 0
    seed: Optional[int] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            'D': _nan_to_none(float(self.D)),
            'G': _nan_to_none(float(self.G)),
            'alpha_tilde': [float(a) for a in self.alpha_tilde],
            'tau_hat': [_nan_to_none(float(t)) for t in self.tau_hat],
            'lambda': self.lam.to_dict() if self.lam else None,
            'n_r': self.n_r,
            'seed': self.seed,
        }


@dataclass(frozen=True)
class GridPoint:
    """One grid entry before the synthetic ratio is turned into a count."""

    alpha: Tuple[float, ...]
    m_over_n: float
    r: float
    sigma: Optional[float] = None
    baseline: bool = False


@dataclass
class TuneResult:
    """Per-lambda validation/test table, per-seed winners and their summary.

    ``summary`` maps a metric label ('region_1', ..., 'overall') to the
    (mean, standard error) of the test metric at each seed's best lambda.
    """

    table: pd.DataFrame
    best: pd.DataFrame
    summary: Dict[str, Tuple[float, float]]
    method: str
    variant: str
    metric: str
    seeds: List[int] = field(default_factory=list)


# Configuration sections

def _fail(message: str, key: str):
    raise ConfigError(message, key)


def _as_int(value, key: str, minimum: Optional[int] = None) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or float(value) != int(value):
        _fail(f"expected an integer, got {value!r}", key)
    value = int(value)
    if minimum is not None and value < minimum:
        _fail(f"must be >= {minimum}, got {value}", key)
    return value


def _as_float(value, key: str, lo: Optional[float] = None, hi: Optional[float] = None,
              lo_open: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        _fail(f"expected a finite number, got {value!r}", key)
    value = float(value)
    if lo is not None and (value < lo or (lo_open and value == lo)):
        _fail(f"must be {'>' if lo_open else '>='} {lo}, got {value}", key)
    if hi is not None and value > hi:
        _fail(f"must be <= {hi}, got {value}", key)
    return value


def _as_floats(values, key: str, lo: Optional[float] = None, hi: Optional[float] = None,
               lo_open: bool = False) -> Tuple[float, ...]:
    if not isinstance(values, (list, tuple)) or len(values) == 0:
        _fail("expected a non-empty list of numbers", key)
    return tuple(_as_float(v, f"{key}[{i}]", lo, hi, lo_open) for i, v in enumerate(values))


def _as_ints(values, key: str, minimum: Optional[int] = None) -> Tuple[int, ...]:
    if not isinstance(values, (list, tuple)) or len(values) == 0:
        _fail("expected a non-empty list of integers", key)
    return tuple(_as_int(v, f"{key}[{i}]", minimum) for i, v in enumerate(values))


def _as_choice(value, key: str, options) -> str:
    if value not in options:
        _fail(f"expected one of {', '.join(options)}, got {value!r}", key)
    return value


def _as_path(value, key: str) -> Optional[str]:
    if value is not None and not isinstance(value, str):
        _fail(f"expected a path string, got {value!r}", key)
    return value


@dataclass
class GeneratorConfig:
    """Autoencoder, score network, schedule and training settings."""

    ae_hidden: Tuple[int, ...] = (256, 256, 256)
    latent_dim: int = 3
    ae_epochs: int = 200
    ae_lr: float = 1e-3
    score_depth: int = 10
    score_width: int = 1024
    embed_dim: int = 128
    timesteps: int = 1000
    beta_min: float = 1e-4
    beta_max: float = 0.02
    epochs: int = 5000
    lr: float = 1e-4
    batch_size: int = 128

    def __post_init__(self):
        self.ae_hidden = tuple(_as_int(h, f"ae_hidden[{i}]", 1) for i, h in enumerate(self.ae_hidden))
        self.latent_dim = _as_int(self.latent_dim, 'latent_dim', 1)
        self.ae_epochs = _as_int(self.ae_epochs, 'ae_epochs', 0)
        self.ae_lr = _as_float(self.ae_lr, 'ae_lr', 0.0, lo_open=True)
        self.score_depth = _as_int(self.score_depth, 'score_depth', 1)
        self.score_width = _as_int(self.score_width, 'score_width', 1)
        self.embed_dim = _as_int(self.embed_dim, 'embed_dim', 1)
        self.timesteps = _as_int(self.timesteps, 'timesteps', 1)
        self.beta_min = _as_float(self.beta_min, 'beta_min', 0.0, 1.0, lo_open=True)
        self.beta_max = _as_float(self.beta_max, 'beta_max', self.beta_min, 1.0)
        if self.beta_max >= 1.0:
            _fail("must be < 1", 'beta_max')
        self.epochs = _as_int(self.epochs, 'epochs', 0)
        self.lr = _as_float(self.lr, 'lr', 0.0, lo_open=True)
        self.batch_size = _as_int(self.batch_size, 'batch_size', 1)

    @staticmethod
    def for_task(task: str) -> 'GeneratorConfig':
        if task == 'regression':
            return GeneratorConfig(ae_hidden=(128,), score_depth=5, score_width=512, embed_dim=64)
        return GeneratorConfig()


@dataclass
class EstimatorConfig:
    """Downstream model: 'mlp' (classifier or auxiliary regressor) or 'forest'."""

    kind: str = 'mlp'
    hidden: int = 128
    epochs_max: int = 2000
    patience: int = 20
    lr: float = 1e-3
    batch_size: int = 128
    n_trees: int = 100
    min_samples_split: int = 2

    def __post_init__(self):
        self.kind = _as_choice(self.kind, 'kind', ('mlp', 'forest'))
        self.hidden = _as_int(self.hidden, 'hidden', 1)
        self.epochs_max = _as_int(self.epochs_max, 'epochs_max', 1)
        self.patience = _as_int(self.patience, 'patience', 0)
        self.lr = _as_float(self.lr, 'lr', 0.0, lo_open=True)
        self.batch_size = _as_int(self.batch_size, 'batch_size', 1)
        self.n_trees = _as_int(self.n_trees, 'n_trees', 1)
        self.min_samples_split = _as_int(self.min_samples_split, 'min_samples_split', 2)

    @staticmethod
    def for_task(task: str) -> 'EstimatorConfig':
        return EstimatorConfig(kind='forest' if task == 'regression' else 'mlp')


@dataclass
class DataConfig:
    """Simulation sizes and balanced carving, or a directory of prepared CSVs."""

    n1: int = 1400
    n2: int = 3800
    sigma: float = 0.2
    val_per_region: int = 200
    test_per_region: int = 400
    dir: Optional[str] = None

    def __post_init__(self):
        self.n1 = _as_int(self.n1, 'n1', 1)
        self.n2 = _as_int(self.n2, 'n2', 1)
        self.sigma = _as_float(self.sigma, 'sigma', 0.0)
        self.val_per_region = _as_int(self.val_per_region, 'val_per_region', 1)
        self.test_per_region = _as_int(self.test_per_region, 'test_per_region', 1)
        self.dir = _as_path(self.dir, 'dir')


@dataclass
class GridSpec:
    """Tuning grid over (r, alpha, m/n) and the replicate seeds.

    ``alpha_list`` replaces ``alpha1_values`` when there are more than two
    regions. ``coarse`` keeps every other value of each axis.
    """

    r_values: Tuple[float, ...] = tuple(round(0.1 * i, 10) for i in range(1, 11))
    alpha1_values: Tuple[float, ...] = tuple(round(0.1 * i, 10) for i in range(1, 10))
    m_over_n_values: Tuple[float, ...] = tuple(round(0.1 * i, 10) for i in range(1, 21))
    alpha_list: Optional[Tuple[Tuple[float, ...], ...]] = None
    seeds: Tuple[int, ...] = tuple(range(10))
    include_baseline: bool = True
    coarse: bool = False

    def __post_init__(self):
        self.r_values = _as_floats(self.r_values, 'r_values', 0.0, 1.0)
        self.alpha1_values = _as_floats(self.alpha1_values, 'alpha1_values', 0.0, 1.0)
        self.m_over_n_values = _as_floats(self.m_over_n_values, 'm_over_n_values', 0.0)
        if self.alpha_list is not None:
            if not isinstance(self.alpha_list, (list, tuple)) or len(self.alpha_list) == 0:
                _fail("expected a non-empty list of allocation vectors", 'alpha_list')
            checked = []
            for i, vec in enumerate(self.alpha_list):
                vec = _as_floats(vec, f"alpha_list[{i}]", 0.0, 1.0)
                if abs(sum(vec) - 1.0) > 1e-9:
                    _fail("allocation must sum to 1", f"alpha_list[{i}]")
                checked.append(vec)
            self.alpha_list = tuple(checked)
        self.seeds = _as_ints(self.seeds, 'seeds', 0)
        if not isinstance(self.include_baseline, bool):
            _fail("expected true or false", 'include_baseline')
        if not isinstance(self.coarse, bool):
            _fail("expected true or false", 'coarse')

    def axis(self, values: Tuple) -> Tuple:
        return tuple(values[::2]) if self.coarse else tuple(values)

    def allocations(self) -> List[Tuple[float, ...]]:
        if self.alpha_list is not None:
            return list(self.axis(self.alpha_list))
        return [(a, 1.0 - a) for a in self.axis(self.alpha1_values)]

    @property
    def size(self) -> int:
        """Number of (alpha, m/n, r) combinations, excluding the baseline point."""
        return len(self.axis(self.r_values)) * len(self.allocations()) * len(self.axis(self.m_over_n_values))


@dataclass
class TransferConfig:
    """Source sample and pretraining for the transfer variant."""

    source_size: int = 10000
    ae_epochs: Optional[int] = None
    checkpoint: Optional[str] = None
    ablation_sizes: Tuple[int, ...] = (1000, 3000, 6000, 10000)

    def __post_init__(self):
        self.source_size = _as_int(self.source_size, 'source_size', 2)
        if self.ae_epochs is not None:
            self.ae_epochs = _as_int(self.ae_epochs, 'ae_epochs', 0)
        self.checkpoint = _as_path(self.checkpoint, 'checkpoint')
        self.ablation_sizes = _as_ints(self.ablation_sizes, 'ablation_sizes', 2)


@dataclass
class CrossfitConfig:
    """K-fold cross-fitting; each fold trains its generator on the other K-1 folds."""

    folds: int = 5
    r: Optional[float] = None

    def __post_init__(self):
        self.folds = _as_int(self.folds, 'folds', 2)
        implied = (self.folds - 1) / self.folds
        if self.r is None:
            self.r = implied
            return
        self.r = _as_float(self.r, 'r', 0.0, 1.0)
        if abs(self.r - implied) > 1e-9:
            _fail(f"must equal (folds - 1) / folds = {implied:g} for {self.folds} folds", 'r')


@dataclass
class OversamplingConfig:
    k_neighbors: int = 5
    sigma_values: Tuple[float, ...] = (0.02, 0.04, 0.06)

    def __post_init__(self):
        self.k_neighbors = _as_int(self.k_neighbors, 'k_neighbors', 1)
        self.sigma_values = _as_floats(self.sigma_values, 'sigma_values', 0.0)


@dataclass
class DiagnoseConfig:
    """Lambda and sample size for index diagnostics of a stored generator.

    Without ``alpha`` the optimal allocation for the given m/n and r is used.
    """

    checkpoint: Optional[str] = None
    alpha: Optional[Tuple[float, ...]] = None
    m_over_n: float = 1.0
    r: float = 0.5
    tau_samples: int = 500

    def __post_init__(self):
        self.checkpoint = _as_path(self.checkpoint, 'checkpoint')
        if self.alpha is not None:
            self.alpha = _as_floats(self.alpha, 'alpha', 0.0, 1.0)
            if abs(sum(self.alpha) - 1.0) > 1e-9:
                _fail("allocation must sum to 1", 'alpha')
        self.m_over_n = _as_float(self.m_over_n, 'm_over_n', 0.0)
        self.r = _as_float(self.r, 'r', 0.0, 1.0)
        self.tau_samples = _as_int(self.tau_samples, 'tau_samples', 1)


SECTIONS = {
    'data': DataConfig,
    'generator': GeneratorConfig,
    'estimator': EstimatorConfig,
    'grid': GridSpec,
    'transfer': TransferConfig,
    'crossfit': CrossfitConfig,
    'oversampling': OversamplingConfig,
    'diagnose': DiagnoseConfig,
}
TOP_LEVEL = ('task', 'method', 'eval_weights') + tuple(SECTIONS)


def _build(cls, raw, path: str, base=None):
    """Instantiate a section dataclass, rejecting unknown keys by dotted path."""
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("expected an object", path)
    known = {f.name for f in fields(cls)}
    for key in raw:
        if key not in known:
            raise ConfigError("unknown key", f"{path}.{key}")
    values = asdict(base) if base is not None else {}
    values.update(raw)
    try:
        return cls(**values)
    except ConfigError as e:
        raise ConfigError(e.detail, f"{path}.{e.path}") from None


@dataclass
class ExperimentConfig:
    """A complete, validated experiment description."""

    task: str
    method: str = 'baseline'
    eval_weights: Optional[Tuple[float, ...]] = None
    data: DataConfig = field(default_factory=DataConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    grid: GridSpec = field(default_factory=GridSpec)
    transfer: TransferConfig = field(default_factory=TransferConfig)
    crossfit: CrossfitConfig = field(default_factory=CrossfitConfig)
    oversampling: OversamplingConfig = field(default_factory=OversamplingConfig)
    diagnose: DiagnoseConfig = field(default_factory=DiagnoseConfig)

    @property
    def seeds(self) -> Tuple[int, ...]:
        return self.grid.seeds

    @property
    def variant(self) -> str:
        return {'codsa': 'non-transfer', 'codsa-transfer': 'transfer',
                'codsa-crossfit': 'cross-fit'}.get(self.method, 'none')

    def q(self, n_regions: int) -> np.ndarray:
        """Evaluation weights; balanced unless configured."""
        if self.eval_weights is None:
            return np.full(n_regions, 1.0 / n_regions)
        if len(self.eval_weights) != n_regions:
            raise ConfigError(f"has {len(self.eval_weights)} entries for {n_regions} regions", 'eval_weights')
        return np.asarray(self.eval_weights, dtype=np.float64)

    @staticmethod
    def from_dict(raw: Dict[str, Any]) -> 'ExperimentConfig':
        """Validate a parsed JSON document.

        Raises:
            ConfigError: naming the dotted path of the first offending key
        """
        if not isinstance(raw, dict):
            raise ConfigError("configuration must be a JSON object", '<root>')
        for key in raw:
            if key not in TOP_LEVEL:
                raise ConfigError("unknown key", key)
        if 'task' not in raw:
            raise ConfigError("missing required key", 'task')
        task = _as_choice(raw['task'], 'task', TASKS)
        method = _as_choice(raw.get('method', 'baseline'), 'method', METHODS)
        if task not in METHOD_TASKS.get(method, TASKS):
            raise ConfigError(f"method '{method}' does not apply to {task}", 'method')

        weights = raw.get('eval_weights')
        if weights is not None:
            weights = _as_floats(weights, 'eval_weights', 0.0, 1.0)
            if abs(sum(weights) - 1.0) > 1e-9:
                raise ConfigError("evaluation weights must sum to 1", 'eval_weights')

        estimator = _build(EstimatorConfig, raw.get('estimator'), 'estimator', EstimatorConfig.for_task(task))
        if task == 'classification' and estimator.kind != 'mlp':
            raise ConfigError("classification requires the 'mlp' estimator", 'estimator.kind')

        return ExperimentConfig(
            task=task,
            method=method,
            eval_weights=weights,
            data=_build(DataConfig, raw.get('data'), 'data'),
            generator=_build(GeneratorConfig, raw.get('generator'), 'generator', GeneratorConfig.for_task(task)),
            estimator=estimator,
            grid=_build(GridSpec, raw.get('grid'), 'grid'),
            transfer=_build(TransferConfig, raw.get('transfer'), 'transfer'),
            crossfit=_build(CrossfitConfig, raw.get('crossfit'), 'crossfit'),
            oversampling=_build(OversamplingConfig, raw.get('oversampling'), 'oversampling'),
            diagnose=_build(DiagnoseConfig, raw.get('diagnose'), 'diagnose'),
        )

    def to_dict(self) -> Dict[str, Any]:
        out = {'task': self.task, 'method': self.method,
               'eval_weights': list(self.eval_weights) if self.eval_weights else None}
        for name in SECTIONS:
            out[name] = asdict(getattr(self, name))
        return out
