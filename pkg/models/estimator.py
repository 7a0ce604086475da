"""Fitted downstream estimators."""
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Union

import numpy as np

from models.network import MlpParams


@dataclass
class ClassifierModel:
    """Binary MLP classifier [d, h, h, 1] with a sigmoid head.

    Inputs are standardized with the training statistics. A fit on
    single-class data stores ``constant`` and ignores the network.
    """

    net: MlpParams
    shift: np.ndarray
    scale: np.ndarray
    best_epoch: int = 0
    val_history: List[float] = field(default_factory=list)
    constant: Optional[float] = None

    @property
    def n_features(self) -> int:
        return self.net.spec.input_dim

    def to_dict(self) -> Dict[str, Any]:
        return {
            'type': 'classifier',
            'net': self.net.to_dict(),
            'shift': self.shift.tolist(),
            'scale': self.scale.tolist(),
            'best_epoch': self.best_epoch,
            'val_history': list(self.val_history),
            'constant': self.constant,
        }


@dataclass
class RegressorModel:
    """MLP regressor [d, h, h, 1] with identity head on z-scored x and y."""

    net: MlpParams
    shift: np.ndarray
    scale: np.ndarray
    y_shift: float
    y_scale: float
    best_epoch: int = 0
    val_history: List[float] = field(default_factory=list)

    @property
    def n_features(self) -> int:
        return self.net.spec.input_dim

    def to_dict(self) -> Dict[str, Any]:
        return {
            'type': 'mlp-regressor',
            'net': self.net.to_dict(),
            'shift': self.shift.tolist(),
            'scale': self.scale.tolist(),
            'y_shift': self.y_shift,
            'y_scale': self.y_scale,
            'best_epoch': self.best_epoch,
            'val_history': list(self.val_history),
        }


@dataclass
class RegressionTree:
    """Flat node arrays; leaves have feature -1 and children -1.

    Rows with x[feature] <= threshold go left.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def to_dict(self) -> Dict[str, Any]:
        return {
            'feature': self.feature.tolist(),
            'threshold': self.threshold.tolist(),
            'left': self.left.tolist(),
            'right': self.right.tolist(),
            'leaf_value': self.value.tolist(),
        }

    @staticmethod
    def from_dict(data: Dict[str, Any]) -> 'RegressionTree':
        return RegressionTree(
            feature=np.asarray(data['feature'], dtype=np.int64),
            threshold=np.asarray(data['threshold'], dtype=np.float64),
            left=np.asarray(data['left'], dtype=np.int64),
            right=np.asarray(data['right'], dtype=np.int64),
            value=np.asarray(data['leaf_value'], dtype=np.float64),
        )


@dataclass
class ForestModel:
    trees: List[RegressionTree]
    n_features: int
    seed: int = 0

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'type': 'forest',
            'n_features': self.n_features,
            'seed': self.seed,
            'trees': [t.to_dict() for t in self.trees],
        }

    @staticmethod
    def from_dict(data: Dict[str, Any]) -> 'ForestModel':
        return ForestModel(
            trees=[RegressionTree.from_dict(t) for t in data['trees']],
            n_features=int(data['n_features']),
            seed=int(data.get('seed', 0)),
        )


@dataclass
class CrossFitModel:
    """Fold estimators whose predictions (probabilities for classifiers) are averaged."""

    members: List[Any]

    @property
    def n_features(self) -> int:
        return self.members[0].n_features


Estimator = Union[ClassifierModel, RegressorModel, ForestModel, CrossFitModel]
