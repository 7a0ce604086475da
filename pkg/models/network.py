"""Dense network parameter containers."""
import hashlib
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from models.errors import DimensionError

HEADS = ('identity', 'sigmoid', 'softmax')


@dataclass(frozen=True)
class MlpSpec:
    """Layer sizes and output head of a ReLU multilayer perceptron.

    ``sparsity`` and ``weight_bound`` describe the theoretical network class
    (effective parameter count and sup-norm bound); they are carried as
    metadata and never enforced during training.
    """

    layer_sizes: Tuple[int, ...]
    head: str = 'identity'
    sparsity: Optional[int] = None
    weight_bound: Optional[float] = None

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, 'layer_sizes', sizes)
        if len(sizes) < 2:
            raise DimensionError("layer_sizes needs at least an input and an output size")
        if any(s < 1 for s in sizes):
            raise DimensionError(f"all layer sizes must be >= 1, got {sizes}")
        if self.head not in HEADS:
            raise ValueError(f"unknown head '{self.head}', expected one of {HEADS}")

    @property
    def depth(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def width(self) -> int:
        return max(self.layer_sizes[1:-1], default=0)

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]


@dataclass
class MlpParams:
    """Weights (fan_in x fan_out) and biases of every affine layer."""

    spec: MlpSpec
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != self.spec.depth or len(self.biases) != self.spec.depth:
            raise DimensionError("number of layers does not match the spec")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            expected = (self.spec.layer_sizes[i], self.spec.layer_sizes[i + 1])
            if w.shape != expected:
                raise DimensionError(f"layer {i} weight shape {w.shape}, expected {expected}")
            if b.shape != (expected[1],):
                raise DimensionError(f"layer {i} bias shape {b.shape}, expected ({expected[1]},)")

    def copy(self) -> 'MlpParams':
        return MlpParams(self.spec, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(w)) for w in self.weights) and \
            all(np.all(np.isfinite(b)) for b in self.biases)

    def fingerprint(self) -> str:
        """SHA-256 of the raw parameter bytes, used to check frozen weights."""
        digest = hashlib.sha256()
        for w, b in zip(self.weights, self.biases):
            digest.update(np.ascontiguousarray(w, dtype=np.float64).tobytes())
            digest.update(np.ascontiguousarray(b, dtype=np.float64).tobytes())
        return digest.hexdigest()

    def to_dict(self) -> Dict[str, Any]:
        """Checkpoint form: {"spec", "head", "weights", "biases"}."""
        return {
            'spec': list(self.spec.layer_sizes),
            'head': self.spec.head,
            'weights': [w.tolist() for w in self.weights],
            'biases': [b.tolist() for b in self.biases],
        }

    @staticmethod
    def from_dict(data: Dict[str, Any]) -> 'MlpParams':
        spec = MlpSpec(tuple(data['spec']), head=data.get('head', 'identity'))
        weights = [np.asarray(w, dtype=np.float64).reshape(spec.layer_sizes[i], spec.layer_sizes[i + 1])
                   for i, w in enumerate(data['weights'])]
        biases = [np.asarray(b, dtype=np.float64).reshape(-1) for b in data['biases']]
        return MlpParams(spec, weights, biases)


@dataclass
class ForwardCache:
    """Activations kept by a forward pass for the matching backward pass."""

    inputs: np.ndarray
    pre_activations: List[np.ndarray]
    activations: List[np.ndarray]
    output: np.ndarray


@dataclass
class AdamState:
    """Moment accumulators and hyperparameters of the Adam optimizer."""

    m: List[np.ndarray]
    v: List[np.ndarray]
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
