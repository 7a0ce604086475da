"""Dataset model: features, optional target, region index and provenance."""
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np

from models.errors import DimensionError, SchemaMismatchError

TARGET_KINDS = ('none', 'continuous', 'class')


@dataclass(frozen=True)
class Dataset:
    """Row-major samples Z with region membership C_k.

    Regions are 1-based (1..n_regions). ``synthetic`` flags rows produced by
    a generator or an oversampler; real rows carry False.
    """

    features: np.ndarray
    region: np.ndarray
    target: Optional[np.ndarray] = None
    target_kind: str = 'none'
    synthetic: Optional[np.ndarray] = None
    n_regions: Optional[int] = None

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim == 1:
            features = features.reshape(-1, 1) if features.size else features.reshape(0, 0)
        if features.ndim != 2:
            raise DimensionError(f"features must be a matrix, got shape {features.shape}")
        n = features.shape[0]
        region = np.asarray(self.region, dtype=np.int64).reshape(-1)
        if region.shape[0] != n:
            raise DimensionError(f"{region.shape[0]} region labels for {n} rows")

        target = self.target
        kind = self.target_kind
        if target is not None:
            target = np.asarray(target, dtype=np.float64).reshape(-1)
            if target.shape[0] != n:
                raise DimensionError(f"{target.shape[0]} targets for {n} rows")
            if kind == 'none':
                kind = 'continuous'
        elif kind != 'none':
            raise SchemaMismatchError(f"target_kind '{kind}' given without a target")
        if kind not in TARGET_KINDS:
            raise ValueError(f"unknown target kind '{kind}'")

        synthetic = np.zeros(n, dtype=bool) if self.synthetic is None \
            else np.asarray(self.synthetic, dtype=bool).reshape(-1)
        if synthetic.shape[0] != n:
            raise DimensionError(f"{synthetic.shape[0]} provenance flags for {n} rows")

        n_regions = self.n_regions
        if n_regions is None:
            n_regions = int(region.max()) if n else 1
        if n and (region.min() < 1 or region.max() > n_regions):
            raise ValueError(f"region indices must lie in 1..{n_regions}")
        if not np.all(np.isfinite(features)) or (target is not None and not np.all(np.isfinite(target))):
            raise ValueError("dataset contains non-finite values")

        object.__setattr__(self, 'features', features)
        object.__setattr__(self, 'region', region)
        object.__setattr__(self, 'target', target)
        object.__setattr__(self, 'target_kind', kind)
        object.__setattr__(self, 'synthetic', synthetic)
        object.__setattr__(self, 'n_regions', int(n_regions))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def schema(self) -> Tuple[int, str, int]:
        return (self.d, self.target_kind, self.n_regions)

    def subset(self, index: np.ndarray) -> 'Dataset':
        index = np.asarray(index, dtype=np.int64)
        return Dataset(
            features=self.features[index].reshape(len(index), self.d),
            region=self.region[index],
            target=None if self.target is None else self.target[index],
            target_kind=self.target_kind,
            synthetic=self.synthetic[index],
            n_regions=self.n_regions,
        )

    def region_index(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.region == k)

    def in_region(self, k: int) -> 'Dataset':
        return self.subset(self.region_index(k))

    def real_rows(self) -> 'Dataset':
        return self.subset(np.flatnonzero(~self.synthetic))

    @staticmethod
    def empty(d: int, target_kind: str, n_regions: int) -> 'Dataset':
        return Dataset(
            features=np.zeros((0, d)),
            region=np.zeros(0, dtype=np.int64),
            target=None if target_kind == 'none' else np.zeros(0),
            target_kind=target_kind,
            n_regions=n_regions,
        )

    def equals(self, other: 'Dataset') -> bool:
        """Exact equality of every column, used for round-trip checks."""
        if self.schema != other.schema or self.n != other.n:
            return False
        same_target = (self.target is None and other.target is None) or \
            (self.target is not None and other.target is not None and np.array_equal(self.target, other.target))
        return bool(np.array_equal(self.features, other.features)
                    and np.array_equal(self.region, other.region)
                    and np.array_equal(self.synthetic, other.synthetic)
                    and same_target)


@dataclass(frozen=True)
class AugmentedDataset(Dataset):
    """Reserved real rows followed by synthetic rows (Z_c = Z_r ∪ Z̃)."""

    @property
    def n_real(self) -> int:
        return int(np.sum(~self.synthetic))

    @property
    def n_synthetic(self) -> int:
        return int(np.sum(self.synthetic))


@dataclass(frozen=True)
class RegionStats:
    """Per-region counts n_k and proportions p_k = n_k / n."""

    counts: np.ndarray
    proportions: np.ndarray

    def to_dict(self) -> Dict[str, Any]:
        return {'counts': self.counts.tolist(), 'proportions': self.proportions.tolist()}


@dataclass(frozen=True)
class SplitResult:
    """Generator-training part Z_g and reserved estimation part Z_r."""

    generator_part: Dataset
    reserved_part: Dataset
    generator_index: np.ndarray
    reserved_index: np.ndarray
