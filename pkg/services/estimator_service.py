"""Downstream estimators: MLP classifier/regressor and a CART random forest."""
import json
import logging
from typing import List, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed

from config import Config
from models.dataset import Dataset
from models.errors import DimensionError, EmptyInputError, SchemaMismatchError
from models.estimator import (ClassifierModel, CrossFitModel, ForestModel, RegressionTree,
                              RegressorModel)
from models.network import MlpSpec
from services.nn_service import NNService
from services.seeding import derive_seed

logger = logging.getLogger(__name__)


def _standardizer(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    shift = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[scale == 0] = 1.0
    return shift, scale


def _check_rows(rows: np.ndarray, n_features: int) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != n_features:
        raise DimensionError(f"rows of shape {rows.shape} do not match {n_features} features")
    return rows


class EstimatorService:
    """Fits the estimator that minimizes the mean loss over the augmented sample."""

    # Classifier

    @staticmethod
    def train_classifier(train: Dataset, val: Optional[Dataset], epochs_max: int = 2000, patience: int = 20,
                         lr: float = 1e-3, seed: int = 0, hidden: int = 128,
                         batch_size: int = Config.DEFAULT_BATCH_SIZE) -> ClassifierModel:
        """Train [d, hidden, hidden, 1] with logistic loss and early stopping.

        Real and synthetic rows are weighted identically. Training stops once
        ``patience`` epochs pass without a strict improvement of validation
        cross-entropy; the best snapshot is returned.

        Args:
            train: Augmented training rows with binary labels
            val: Validation rows; without them all epochs run and the last snapshot is kept
            epochs_max: Upper bound on epochs
            patience: Epochs without improvement tolerated before stopping
            lr: Adam learning rate
            seed: Seed for initialization and shuffling

        Returns:
            ClassifierModel
        """
        if train.n == 0:
            raise EmptyInputError("cannot train a classifier on an empty dataset")
        if train.target is None or not np.all(np.isin(train.target, (0.0, 1.0))):
            raise SchemaMismatchError("classifier training requires binary 0/1 labels")

        rng = np.random.default_rng(seed)
        shift, scale = _standardizer(train.features)
        net = NNService.init_params(MlpSpec((train.d, hidden, hidden, 1), head='sigmoid'), rng)

        labels = np.unique(train.target)
        if len(labels) == 1:
            logger.warning("Single-class training data (label %d); fitting a constant predictor", int(labels[0]))
            return ClassifierModel(net=net, shift=shift, scale=scale, constant=float(labels[0]))

        x = (train.features - shift) / scale
        y = train.target.reshape(-1, 1)
        has_val = val is not None and val.n > 0
        if has_val:
            x_val = (val.features - shift) / scale
            y_val = val.target.reshape(-1, 1)

        state = NNService.init_adam(net, lr)
        best, best_loss, best_epoch = net, np.inf, 0
        history: List[float] = []
        for epoch in range(epochs_max):
            for idx in NNService.minibatches(len(x), batch_size, rng):
                net, state, _ = NNService.train_step(net, state, x[idx], y[idx], NNService.loss_logistic)
            if not has_val:
                best, best_epoch = net, epoch
                continue
            val_loss, _ = NNService.loss_logistic(NNService.predict(net, x_val), y_val)
            history.append(val_loss)
            if val_loss < best_loss:
                best, best_loss, best_epoch = net, val_loss, epoch
            if epoch - best_epoch >= patience:
                break
        if has_val and best_epoch == epochs_max - 1:
            logger.warning("Validation loss still improving at the last of %d epochs", epochs_max)
        logger.debug("Classifier stopped after %d epochs, best epoch %d", len(history), best_epoch)
        return ClassifierModel(net=best, shift=shift, scale=scale, best_epoch=best_epoch, val_history=history)

    @staticmethod
    def predict_proba(model: ClassifierModel, rows: np.ndarray) -> np.ndarray:
        """P(Y = 1 | x) clipped to [PROB_CLIP, 1 - PROB_CLIP]."""
        rows = _check_rows(rows, model.n_features)
        if model.constant is not None:
            prob = np.full(len(rows), model.constant)
        else:
            prob = NNService.predict(model.net, (rows - model.shift) / model.scale).reshape(-1)
        return np.clip(prob, Config.PROB_CLIP, 1.0 - Config.PROB_CLIP)

    @staticmethod
    def empirical_loss(model, dataset: Dataset) -> float:
        """Unweighted mean loss over all rows (logistic or squared)."""
        if isinstance(model, ClassifierModel):
            loss, _ = NNService.loss_logistic(EstimatorService.predict_proba(model, dataset.features),
                                              dataset.target)
            return loss
        loss, _ = NNService.loss_mse(EstimatorService.predict(model, dataset.features), dataset.target)
        return loss

    # Auxiliary MLP regressor

    @staticmethod
    def train_regressor_mlp(train: Dataset, val: Optional[Dataset], epochs_max: int = 2000, patience: int = 20,
                            lr: float = 1e-3, seed: int = 0, hidden: int = 128,
                            batch_size: int = Config.DEFAULT_BATCH_SIZE) -> RegressorModel:
        """Identity-head twin of the classifier, early-stopped on validation RMSE."""
        if train.n == 0:
            raise EmptyInputError("cannot train a regressor on an empty dataset")
        if train.target_kind != 'continuous':
            raise SchemaMismatchError("regression requires a continuous target")

        rng = np.random.default_rng(seed)
        shift, scale = _standardizer(train.features)
        y_shift = float(train.target.mean())
        y_scale = float(train.target.std()) or 1.0
        net = NNService.init_params(MlpSpec((train.d, hidden, hidden, 1)), rng)
        x = (train.features - shift) / scale
        y = ((train.target - y_shift) / y_scale).reshape(-1, 1)
        has_val = val is not None and val.n > 0

        state = NNService.init_adam(net, lr)
        best, best_rmse, best_epoch = net, np.inf, 0
        history: List[float] = []
        for epoch in range(epochs_max):
            for idx in NNService.minibatches(len(x), batch_size, rng):
                net, state, _ = NNService.train_step(net, state, x[idx], y[idx], NNService.loss_mse)
            if not has_val:
                best, best_epoch = net, epoch
                continue
            pred = NNService.predict(net, (val.features - shift) / scale).reshape(-1) * y_scale + y_shift
            rmse = float(np.sqrt(np.mean((pred - val.target) ** 2)))
            history.append(rmse)
            if rmse < best_rmse:
                best, best_rmse, best_epoch = net, rmse, epoch
            if epoch - best_epoch >= patience:
                break
        return RegressorModel(net=best, shift=shift, scale=scale, y_shift=y_shift, y_scale=y_scale,
                              best_epoch=best_epoch, val_history=history)

    # Random forest

    @staticmethod
    def best_split(x: np.ndarray, y: np.ndarray) -> Optional[Tuple[int, float, float]]:
        """Exhaustive variance-reduction split.

        Candidate thresholds are midpoints between consecutive distinct values.
        Ties go to the first feature, then the smallest threshold.

        Returns:
            (feature, threshold, summed child SSE), or None when no split separates rows
        """
        n = len(y)
        best = None
        for j in range(x.shape[1]):
            order = np.argsort(x[:, j], kind='stable')
            xs = x[order, j]
            ys = y[order]
            valid = np.flatnonzero(xs[1:] > xs[:-1]) + 1
            if len(valid) == 0:
                continue
            s1 = np.cumsum(ys)
            s2 = np.cumsum(ys * ys)
            n_left = valid.astype(np.float64)
            left_sum, left_sq = s1[valid - 1], s2[valid - 1]
            right_sum, right_sq = s1[-1] - left_sum, s2[-1] - left_sq
            sse = (left_sq - left_sum ** 2 / n_left) + (right_sq - right_sum ** 2 / (n - n_left))
            i = int(np.argmin(sse))
            if best is None or sse[i] < best[2]:
                lo, hi = xs[valid[i] - 1], xs[valid[i]]
                threshold = (lo + hi) / 2.0
                if not lo <= threshold < hi:
                    threshold = lo
                best = (j, float(threshold), float(sse[i]))
        return best

    @staticmethod
    def grow_tree(x: np.ndarray, y: np.ndarray, min_samples_split: int = 2) -> RegressionTree:
        """Grow a CART regression tree until nodes are pure or too small to split."""
        feature: List[int] = []
        threshold: List[float] = []
        left: List[int] = []
        right: List[int] = []
        value: List[float] = []

        def new_node(idx):
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(float(y[idx].mean()))
            return len(feature) - 1

        stack = [(new_node(np.arange(len(y))), np.arange(len(y)))]
        while stack:
            node, idx = stack.pop()
            if len(idx) < min_samples_split or np.ptp(y[idx]) == 0:
                continue
            split = EstimatorService.best_split(x[idx], y[idx])
            if split is None:
                continue
            j, thr, _ = split
            go_left = x[idx, j] <= thr
            left_idx, right_idx = idx[go_left], idx[~go_left]
            feature[node], threshold[node] = j, thr
            left[node] = new_node(left_idx)
            right[node] = new_node(right_idx)
            stack.append((right[node], right_idx))
            stack.append((left[node], left_idx))

        return RegressionTree(
            feature=np.asarray(feature, dtype=np.int64),
            threshold=np.asarray(threshold, dtype=np.float64),
            left=np.asarray(left, dtype=np.int64),
            right=np.asarray(right, dtype=np.int64),
            value=np.asarray(value, dtype=np.float64),
        )

    @staticmethod
    def tree_predict(tree: RegressionTree, rows: np.ndarray) -> np.ndarray:
        node = np.zeros(len(rows), dtype=np.int64)
        active = tree.feature[node] >= 0
        while np.any(active):
            rows_a = np.flatnonzero(active)
            n_a = node[rows_a]
            go_left = rows[rows_a, tree.feature[n_a]] <= tree.threshold[n_a]
            node[rows_a] = np.where(go_left, tree.left[n_a], tree.right[n_a])
            active = tree.feature[node] >= 0
        return tree.value[node]

    @staticmethod
    def _fit_tree(x: np.ndarray, y: np.ndarray, min_samples_split: int, seed: int, bootstrap: bool) -> RegressionTree:
        if bootstrap:
            rows = np.random.default_rng(seed).integers(0, len(y), size=len(y))
            x, y = x[rows], y[rows]
        return EstimatorService.grow_tree(x, y, min_samples_split)

    @staticmethod
    def train_forest(train: Dataset, n_trees: int = 100, min_samples_split: int = 2, seed: int = 0,
                     bootstrap: bool = True, workers: int = 1) -> ForestModel:
        """Random forest of fully grown CART trees, each on its own bootstrap.

        Every split considers all features. Tree i draws its bootstrap from
        its own seed stream, so the forest does not depend on ``workers``.
        """
        if train.n == 0:
            raise EmptyInputError("cannot train a forest on an empty dataset")
        if train.target_kind != 'continuous':
            raise SchemaMismatchError("the forest requires a continuous target")
        trees = Parallel(n_jobs=workers)(
            delayed(EstimatorService._fit_tree)(
                train.features, train.target, min_samples_split, derive_seed(seed, 'tree', i), bootstrap)
            for i in range(n_trees)
        )
        logger.debug("Forest of %d trees grown on %d rows", n_trees, train.n)
        return ForestModel(trees=list(trees), n_features=train.d, seed=int(seed))

    @staticmethod
    def forest_predict(model: ForestModel, rows: np.ndarray) -> np.ndarray:
        rows = _check_rows(rows, model.n_features)
        if len(model.trees) == 0:
            raise EmptyInputError("forest has no trees")
        return np.mean([EstimatorService.tree_predict(t, rows) for t in model.trees], axis=0)

    @staticmethod
    def save_forest(model: ForestModel, path: str) -> None:
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(model.to_dict(), f, indent=2, sort_keys=True)

    @staticmethod
    def load_forest(path: str) -> ForestModel:
        with open(path, 'r', encoding='utf-8') as f:
            return ForestModel.from_dict(json.load(f))

    # Dispatch

    @staticmethod
    def fit(task: str, train: Dataset, val: Optional[Dataset], est_cfg, seed: int, workers: int = 1):
        """Fit the configured estimator for a task."""
        if task == 'classification':
            return EstimatorService.train_classifier(train, val, est_cfg.epochs_max, est_cfg.patience, est_cfg.lr,
                                                     seed, est_cfg.hidden, est_cfg.batch_size)
        if est_cfg.kind == 'forest':
            return EstimatorService.train_forest(train, est_cfg.n_trees, est_cfg.min_samples_split, seed,
                                                 workers=workers)
        return EstimatorService.train_regressor_mlp(train, val, est_cfg.epochs_max, est_cfg.patience, est_cfg.lr,
                                                    seed, est_cfg.hidden, est_cfg.batch_size)

    @staticmethod
    def predict(model, rows: np.ndarray) -> np.ndarray:
        """Probabilities for classifiers, values for regressors, fold means for cross-fits."""
        if isinstance(model, CrossFitModel):
            return np.mean([EstimatorService.predict(m, rows) for m in model.members], axis=0)
        if isinstance(model, ClassifierModel):
            return EstimatorService.predict_proba(model, rows)
        if isinstance(model, ForestModel):
            return EstimatorService.forest_predict(model, rows)
        rows = _check_rows(rows, model.n_features)
        pred = NNService.predict(model.net, (rows - model.shift) / model.scale).reshape(-1)
        return pred * model.y_scale + model.y_shift

