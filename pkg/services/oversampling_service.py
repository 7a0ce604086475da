"""Classical oversampling baselines: SMOTE, ADASYN and Gaussian-noise SMOGN."""
import logging
from typing import Optional, Tuple, Union

import numpy as np
from scipy.spatial.distance import cdist

from models.dataset import Dataset
from models.errors import CapacityError
from services.allocation import check_simplex, largest_remainder
from services.csv_service import CSVService
from services.seeding import derive_seed

logger = logging.getLogger(__name__)

OVERSAMPLERS = ('smote', 'adasyn', 'smogn')


def _nearest(queries: np.ndarray, pool: np.ndarray, k: int, exclude: Optional[np.ndarray] = None) -> np.ndarray:
    """Indices of the k nearest pool rows per query (Euclidean, ties by row index).

    ``exclude[i]`` is a pool index never returned for query i.
    """
    dist = cdist(queries, pool)
    if exclude is not None:
        dist[np.arange(len(queries)), exclude] = np.inf
    return np.argsort(dist, axis=1, kind='stable')[:, :k]


def _synthetic_rows(dataset: Dataset, k: int, features: np.ndarray, target: Optional[np.ndarray]) -> Dataset:
    return Dataset(features=features.reshape(len(features), dataset.d),
                   region=np.full(len(features), k, dtype=np.int64),
                   target=target, target_kind=dataset.target_kind,
                   synthetic=np.ones(len(features), dtype=bool), n_regions=dataset.n_regions)


class OversamplingService:
    """Oversamplers emitting synthetic rows of one region with provenance=synthetic."""

    @staticmethod
    def _interpolate(dataset: Dataset, k: int, members: np.ndarray, base: np.ndarray, neighbor: np.ndarray,
                     rng: np.random.Generator, return_parents: bool):
        a, b = members[base], members[neighbor]
        gap = rng.random((len(base), 1))
        x = dataset.features[a] + gap * (dataset.features[b] - dataset.features[a])
        target = None
        if dataset.target is not None:
            if dataset.target_kind == 'continuous':
                target = dataset.target[a] + gap[:, 0] * (dataset.target[b] - dataset.target[a])
            else:
                target = dataset.target[a]
        out = _synthetic_rows(dataset, k, x, target)
        if return_parents:
            return out, np.column_stack([a, b])
        return out

    @staticmethod
    def _minority(dataset: Dataset, k: int, k_neighbors: int) -> np.ndarray:
        members = dataset.region_index(k)
        if len(members) <= k_neighbors:
            raise CapacityError(
                f"region {k} has {len(members)} rows; interpolation needs more than k_neighbors={k_neighbors}")
        return members

    @staticmethod
    def smote(dataset: Dataset, k: int, n_new: int, k_neighbors: int = 5, seed: int = 0,
              return_parents: bool = False) -> Union[Dataset, Tuple[Dataset, np.ndarray]]:
        """Interpolate between region-k rows and one of their k nearest region-k neighbours.

        Args:
            dataset: Source rows
            k: Region to oversample
            n_new: Number of synthetic rows
            k_neighbors: Neighbourhood size
            seed: Random seed
            return_parents: Also return an (n_new x 2) array of parent row indices

        Returns:
            Synthetic Dataset, or (Dataset, parents) when return_parents is set
        """
        members = OversamplingService._minority(dataset, k, k_neighbors)
        rng = np.random.default_rng(seed)
        x_min = dataset.features[members]
        neighbors = _nearest(x_min, x_min, k_neighbors, exclude=np.arange(len(members)))
        base = rng.integers(0, len(members), size=n_new)
        neighbor = neighbors[base, rng.integers(0, k_neighbors, size=n_new)]
        return OversamplingService._interpolate(dataset, k, members, base, neighbor, rng, return_parents)

    @staticmethod
    def adasyn_quotas(dataset: Dataset, k: int, n_new: int, k_neighbors: int = 5) -> np.ndarray:
        """Per-row generation quotas proportional to the share of other-region neighbours.

        Neighbours come from the whole dataset. When no row has any
        other-region neighbour the quotas fall back to uniform.
        """
        members = OversamplingService._minority(dataset, k, k_neighbors)
        neighbors = _nearest(dataset.features[members], dataset.features, k_neighbors, exclude=members)
        ratio = np.mean(dataset.region[neighbors] != k, axis=1)
        if ratio.sum() == 0:
            logger.warning("ADASYN: no region-%d row has other-region neighbours; using uniform quotas", k)
            ratio = np.ones(len(members))
        return largest_remainder(ratio, n_new)

    @staticmethod
    def adasyn(dataset: Dataset, k: int, n_new: int, k_neighbors: int = 5, seed: int = 0,
               return_parents: bool = False) -> Union[Dataset, Tuple[Dataset, np.ndarray]]:
        """SMOTE interpolation with quotas from OversamplingService.adasyn_quotas."""
        members = OversamplingService._minority(dataset, k, k_neighbors)
        quotas = OversamplingService.adasyn_quotas(dataset, k, n_new, k_neighbors)
        rng = np.random.default_rng(seed)
        x_min = dataset.features[members]
        neighbors = _nearest(x_min, x_min, k_neighbors, exclude=np.arange(len(members)))
        base = np.repeat(np.arange(len(members)), quotas)
        neighbor = neighbors[base, rng.integers(0, k_neighbors, size=len(base))]
        return OversamplingService._interpolate(dataset, k, members, base, neighbor, rng, return_parents)

    @staticmethod
    def smogn(dataset: Dataset, k: int, n_new: int, perturb_sigma: float = 0.02, seed: int = 0,
              return_parents: bool = False) -> Union[Dataset, Tuple[Dataset, np.ndarray]]:
        """Gaussian-perturbed replicas of region-k rows drawn with replacement.

        Noise on each column is perturb_sigma times that column's sample
        standard deviation within region k.
        """
        if perturb_sigma < 0:
            raise ValueError(f"perturbation size must be >= 0, got {perturb_sigma}")
        members = dataset.region_index(k)
        if len(members) == 0 and n_new > 0:
            raise CapacityError(f"region {k} is empty; nothing to perturb")
        rng = np.random.default_rng(seed)
        parents = members[rng.integers(0, max(len(members), 1), size=n_new)] if n_new else np.zeros(0, np.int64)
        ddof = 1 if len(members) > 1 else 0
        x_scale = dataset.features[members].std(axis=0, ddof=ddof) if len(members) else np.zeros(dataset.d)
        x = dataset.features[parents] + perturb_sigma * rng.standard_normal((n_new, dataset.d)) * x_scale
        target = None
        if dataset.target is not None:
            target = dataset.target[parents]
            if dataset.target_kind == 'continuous':
                y_scale = dataset.target[members].std(ddof=ddof) if len(members) else 0.0
                target = target + perturb_sigma * rng.standard_normal(n_new) * y_scale
        out = _synthetic_rows(dataset, k, x, target)
        if return_parents:
            return out, parents
        return out

    @staticmethod
    def augment(method: str, dataset: Dataset, alpha, m: int, seed: int, k_neighbors: int = 5,
                sigma: float = 0.02) -> Dataset:
        """m synthetic rows split over regions by largest-remainder rounding of alpha * m."""
        if method not in OVERSAMPLERS:
            raise ValueError(f"unknown oversampler '{method}'")
        a = check_simplex(alpha)
        empty = Dataset.empty(dataset.d, dataset.target_kind, dataset.n_regions)
        if m == 0:
            return empty
        counts = largest_remainder(a, m)
        parts = []
        for k, count in enumerate(counts, start=1):
            if count == 0:
                continue
            region_seed = derive_seed(seed, method, k)
            if method == 'smote':
                parts.append(OversamplingService.smote(dataset, k, int(count), k_neighbors, region_seed))
            elif method == 'adasyn':
                parts.append(OversamplingService.adasyn(dataset, k, int(count), k_neighbors, region_seed))
            else:
                parts.append(OversamplingService.smogn(dataset, k, int(count), sigma, region_seed))
        if not parts:
            return empty
        return CSVService.concat(parts)
