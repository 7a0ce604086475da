"""Evaluation under the balanced distribution."""
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from config import Config
from models.errors import DimensionError, EmptyInputError


def _region_labels(n_regions: int):
    return [f"region_{k}" for k in range(1, n_regions + 1)]


class MetricsService:
    """Per-region and overall metrics; absent regions are reported as NaN."""

    @staticmethod
    def cross_entropy_by_region(probs, labels, regions, n_regions: Optional[int] = None) -> Dict[str, float]:
        """Mean logistic loss per region; overall is the unweighted mean of region means.

        Regions with no rows are NaN and are left out of the overall mean.
        """
        probs = np.clip(np.asarray(probs, dtype=np.float64).reshape(-1), Config.PROB_CLIP, 1.0 - Config.PROB_CLIP)
        labels = np.asarray(labels, dtype=np.float64).reshape(-1)
        regions = np.asarray(regions, dtype=np.int64).reshape(-1)
        if not len(probs) == len(labels) == len(regions):
            raise DimensionError("probabilities, labels and regions differ in length")
        n_regions = n_regions or (int(regions.max()) if len(regions) else 1)

        losses = -(labels * np.log(probs) + (1.0 - labels) * np.log1p(-probs))
        out = {}
        for k, name in enumerate(_region_labels(n_regions), start=1):
            mask = regions == k
            out[name] = float(losses[mask].mean()) if mask.any() else float('nan')
        present = [v for v in out.values() if not np.isnan(v)]
        out['overall'] = float(np.mean(present)) if present else float('nan')
        return out

    @staticmethod
    def rmse_by_region(preds, targets, regions, n_regions: Optional[int] = None) -> Dict[str, float]:
        """Per-region RMSE; overall is the RMSE over all pooled rows."""
        preds = np.asarray(preds, dtype=np.float64).reshape(-1)
        targets = np.asarray(targets, dtype=np.float64).reshape(-1)
        regions = np.asarray(regions, dtype=np.int64).reshape(-1)
        if not len(preds) == len(targets) == len(regions):
            raise DimensionError("predictions, targets and regions differ in length")
        n_regions = n_regions or (int(regions.max()) if len(regions) else 1)

        sq = (preds - targets) ** 2
        out = {}
        for k, name in enumerate(_region_labels(n_regions), start=1):
            mask = regions == k
            out[name] = float(np.sqrt(sq[mask].mean())) if mask.any() else float('nan')
        out['overall'] = float(np.sqrt(sq.mean())) if len(sq) else float('nan')
        return out

    @staticmethod
    def cohen_kappa(pred_classes, true_classes) -> float:
        """(p_o - p_e) / (1 - p_e); NaN when the marginals make p_e = 1."""
        pred = np.asarray(pred_classes).reshape(-1)
        true = np.asarray(true_classes).reshape(-1)
        if len(pred) != len(true):
            raise DimensionError("prediction and truth differ in length")
        if len(pred) == 0:
            raise EmptyInputError("kappa of an empty sample is undefined")
        labels = np.union1d(pred, true)
        p_pred = np.array([np.mean(pred == c) for c in labels])
        p_true = np.array([np.mean(true == c) for c in labels])
        p_o = float(np.mean(pred == true))
        p_e = float(np.sum(p_pred * p_true))
        if np.isclose(p_e, 1.0):
            return float('nan')
        return (p_o - p_e) / (1.0 - p_e)

    @staticmethod
    def aggregate_replicates(values: Sequence[float]) -> Tuple[float, float]:
        """Mean and standard error (sample sd / sqrt(R), 0 for a single value)."""
        arr = np.asarray(list(values), dtype=np.float64)
        if arr.size == 0:
            raise EmptyInputError("no replicate values to aggregate")
        if arr.size == 1:
            return float(arr[0]), 0.0
        return float(arr.mean()), float(arr.std(ddof=1) / np.sqrt(arr.size))

    @staticmethod
    def evaluate(task: str, predictions, dataset) -> Dict[str, float]:
        """Task metric of predictions on a labelled dataset."""
        if task == 'classification':
            return MetricsService.cross_entropy_by_region(predictions, dataset.target, dataset.region,
                                                          dataset.n_regions)
        return MetricsService.rmse_by_region(predictions, dataset.target, dataset.region, dataset.n_regions)

    @staticmethod
    def metric_name(task: str) -> str:
        return 'cross_entropy' if task == 'classification' else 'rmse'
