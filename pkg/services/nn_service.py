"""Dense neural-network engine: forward/backward passes, Adam and losses."""
import json
import logging
from typing import Callable, Iterator, List, Optional, Tuple

import numpy as np
from scipy.special import expit, log_softmax, softmax

from config import Config
from models.errors import DimensionError, StateError, TrainingDivergenceError
from models.network import AdamState, ForwardCache, MlpParams, MlpSpec

logger = logging.getLogger(__name__)

LossFn = Callable[[np.ndarray, np.ndarray], Tuple[float, np.ndarray]]


class NNService:
    """Multilayer perceptrons with ReLU hidden layers, trained by Adam."""

    @staticmethod
    def init_params(spec: MlpSpec, rng: np.random.Generator) -> MlpParams:
        """He-uniform weights (bound sqrt(6 / fan_in)) and zero biases."""
        weights, biases = [], []
        for fan_in, fan_out in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
            bound = np.sqrt(6.0 / fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return MlpParams(spec, weights, biases)

    @staticmethod
    def zeros_like(params: MlpParams) -> MlpParams:
        return MlpParams(params.spec,
                         [np.zeros_like(w) for w in params.weights],
                         [np.zeros_like(b) for b in params.biases])

    @staticmethod
    def _apply_head(head: str, z: np.ndarray) -> np.ndarray:
        if head == 'sigmoid':
            return expit(z)
        if head == 'softmax':
            return softmax(z, axis=1)
        return z

    @staticmethod
    def forward(params: MlpParams, batch: np.ndarray) -> Tuple[np.ndarray, ForwardCache]:
        """Run the affine/ReLU chain and keep the activations.

        Args:
            params: Network parameters
            batch: Input matrix (n x input_dim)

        Returns:
            Tuple of (output matrix, cache for NNService.backward)
        """
        x = np.asarray(batch, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != params.spec.input_dim:
            raise DimensionError(
                f"batch shape {x.shape} does not match input size {params.spec.input_dim}")

        pre_activations: List[np.ndarray] = []
        activations: List[np.ndarray] = [x]
        a = x
        last = params.spec.depth - 1
        for i, (w, b) in enumerate(zip(params.weights, params.biases)):
            z = a @ w + b
            pre_activations.append(z)
            a = np.maximum(z, 0.0) if i < last else NNService._apply_head(params.spec.head, z)
            activations.append(a)
        return a, ForwardCache(x, pre_activations, activations, a)

    @staticmethod
    def predict(params: MlpParams, batch: np.ndarray) -> np.ndarray:
        return NNService.forward(params, batch)[0]

    @staticmethod
    def backward(params: MlpParams, cache: Optional[ForwardCache],
                 upstream: np.ndarray) -> Tuple[MlpParams, np.ndarray]:
        """Exact gradients of a scalar loss given its gradient w.r.t. the output.

        Args:
            params: Parameters used in the forward pass
            cache: Cache returned by NNService.forward for the same batch
            upstream: dLoss/dOutput, same shape as the forward output

        Returns:
            Tuple of (gradients shaped like params, gradient w.r.t. the input batch)
        """
        if cache is None:
            raise StateError("backward called without a forward cache")
        upstream = np.asarray(upstream, dtype=np.float64)
        if upstream.shape != cache.output.shape:
            raise DimensionError(
                f"upstream gradient shape {upstream.shape} != output shape {cache.output.shape}")

        head = params.spec.head
        y = cache.output
        if head == 'sigmoid':
            dz = upstream * y * (1.0 - y)
        elif head == 'softmax':
            dz = y * (upstream - np.sum(upstream * y, axis=1, keepdims=True))
        else:
            dz = upstream

        depth = params.spec.depth
        grad_w: List[np.ndarray] = [None] * depth
        grad_b: List[np.ndarray] = [None] * depth
        for i in range(depth - 1, -1, -1):
            grad_w[i] = cache.activations[i].T @ dz
            grad_b[i] = dz.sum(axis=0)
            da = dz @ params.weights[i].T
            if i > 0:
                dz = da * (cache.pre_activations[i - 1] > 0.0)
        return MlpParams(params.spec, grad_w, grad_b), da

    @staticmethod
    def init_adam(params: MlpParams, lr: float) -> AdamState:
        arrays = params.weights + params.biases
        return AdamState(m=[np.zeros_like(a) for a in arrays],
                         v=[np.zeros_like(a) for a in arrays],
                         t=0, lr=lr,
                         beta1=Config.ADAM_BETA1, beta2=Config.ADAM_BETA2, eps=Config.ADAM_EPS)

    @staticmethod
    def adam_step(params: MlpParams, grads: MlpParams, state: AdamState) -> Tuple[MlpParams, AdamState]:
        """One bias-corrected Adam update.

        Returns:
            Tuple of (new parameters, new optimizer state); inputs are not modified
        """
        if state.lr <= 0:
            raise ValueError(f"learning rate must be positive, got {state.lr}")
        grad_arrays = grads.weights + grads.biases
        if not all(np.all(np.isfinite(g)) for g in grad_arrays):
            raise TrainingDivergenceError("non-finite gradient in Adam step")

        t = state.t + 1
        b1, b2 = state.beta1, state.beta2
        correction1 = 1.0 - b1 ** t
        correction2 = 1.0 - b2 ** t
        new_arrays, new_m, new_v = [], [], []
        for p, g, m, v in zip(params.weights + params.biases, grad_arrays, state.m, state.v):
            m = b1 * m + (1.0 - b1) * g
            v = b2 * v + (1.0 - b2) * g * g
            step = state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
            new_arrays.append(p - step)
            new_m.append(m)
            new_v.append(v)

        depth = params.spec.depth
        new_params = MlpParams(params.spec, new_arrays[:depth], new_arrays[depth:])
        new_state = AdamState(new_m, new_v, t, state.lr, b1, b2, state.eps)
        return new_params, new_state

    # Losses: mean over the batch, gradient w.r.t. the predictions

    @staticmethod
    def loss_mse(pred: np.ndarray, target: np.ndarray) -> Tuple[float, np.ndarray]:
        pred = np.asarray(pred, dtype=np.float64)
        target = np.asarray(target, dtype=np.float64).reshape(pred.shape)
        diff = pred - target
        if diff.size == 0:
            return 0.0, diff
        return float(np.mean(diff * diff)), 2.0 * diff / diff.size

    @staticmethod
    def loss_logistic(prob: np.ndarray, label: np.ndarray) -> Tuple[float, np.ndarray]:
        prob = np.asarray(prob, dtype=np.float64)
        label = np.asarray(label, dtype=np.float64).reshape(prob.shape)
        if prob.size == 0:
            return 0.0, prob
        p = np.clip(prob, Config.PROB_CLIP, 1.0 - Config.PROB_CLIP)
        loss = -np.mean(label * np.log(p) + (1.0 - label) * np.log1p(-p))
        grad = (p - label) / (p * (1.0 - p)) / p.size
        # flat where the clip is active
        grad[p != prob] = 0.0
        return float(loss), grad

    @staticmethod
    def loss_softmax_ce(logits: np.ndarray, classes: np.ndarray) -> Tuple[float, np.ndarray]:
        logits = np.asarray(logits, dtype=np.float64)
        classes = np.asarray(classes, dtype=np.int64).reshape(-1)
        if logits.ndim != 2 or logits.shape[0] != classes.shape[0]:
            raise DimensionError(f"logits {logits.shape} do not match {classes.shape[0]} labels")
        n = logits.shape[0]
        if n == 0:
            return 0.0, logits
        log_p = log_softmax(logits, axis=1)
        picked = np.clip(np.exp(log_p[np.arange(n), classes]), Config.PROB_CLIP, 1.0 - Config.PROB_CLIP)
        onehot = np.zeros_like(logits)
        onehot[np.arange(n), classes] = 1.0
        return float(-np.mean(np.log(picked))), (np.exp(log_p) - onehot) / n

    # Training helpers

    @staticmethod
    def minibatches(n: int, batch_size: int, rng: np.random.Generator) -> Iterator[np.ndarray]:
        """Yield index batches of one fully shuffled epoch."""
        order = rng.permutation(n)
        size = max(1, int(batch_size))
        for start in range(0, n, size):
            yield order[start:start + size]

    @staticmethod
    def train_step(params: MlpParams, state: AdamState, batch: np.ndarray, target: np.ndarray,
                   loss_fn: LossFn) -> Tuple[MlpParams, AdamState, float]:
        """Forward, loss, backward and one Adam update on a single batch."""
        output, cache = NNService.forward(params, batch)
        loss, upstream = loss_fn(output, target)
        if not np.isfinite(loss):
            raise TrainingDivergenceError(f"non-finite loss {loss}")
        grads, _ = NNService.backward(params, cache, upstream)
        params, state = NNService.adam_step(params, grads, state)
        return params, state, loss

    @staticmethod
    def save_checkpoint(params: MlpParams, path: str) -> None:
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(params.to_dict(), f, indent=2, sort_keys=True)

    @staticmethod
    def load_checkpoint(path: str) -> MlpParams:
        with open(path, 'r', encoding='utf-8') as f:
            return MlpParams.from_dict(json.load(f))
