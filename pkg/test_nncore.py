"""Tests for the dense network engine."""
import numpy as np
import pytest

from models.errors import DimensionError, StateError, TrainingDivergenceError
from models.network import MlpSpec
from services.nn_service import NNService


def _numeric_grad(params, x, upstream, eps=1e-6):
    """Central differences of sum(upstream * forward(x)) for every weight and bias."""
    def value():
        return float(np.sum(upstream * NNService.predict(params, x)))

    grads = []
    for arr in params.weights + params.biases:
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + eps
            up = value()
            arr[idx] = old - eps
            down = value()
            arr[idx] = old
            g[idx] = (up - down) / (2 * eps)
        grads.append(g)
    return grads


def _near_kink(params, x, tol=1e-3):
    _, cache = NNService.forward(params, x)
    return any(np.any(np.abs(z) < tol) for z in cache.pre_activations[:-1])


@pytest.mark.parametrize('head', ['identity', 'sigmoid', 'softmax'])
def test_backward_matches_finite_differences(head):
    rng = np.random.default_rng(7)
    checked = 0
    for _ in range(100):
        sizes = (int(rng.integers(1, 4)),) + tuple(int(s) for s in rng.integers(1, 5, size=rng.integers(1, 3))) \
            + (int(rng.integers(1, 3)) if head != 'softmax' else 3,)
        params = NNService.init_params(MlpSpec(sizes, head=head), rng)
        params.biases = [b + rng.normal(scale=0.1, size=b.shape) for b in params.biases]
        x = rng.standard_normal((4, sizes[0]))
        if _near_kink(params, x):
            continue
        out, cache = NNService.forward(params, x)
        upstream = rng.standard_normal(out.shape)
        grads, _ = NNService.backward(params, cache, upstream)
        numeric = _numeric_grad(params, x, upstream)
        for analytic, approx in zip(grads.weights + grads.biases, numeric):
            scale = max(np.max(np.abs(approx)), 1e-4)
            assert np.max(np.abs(analytic - approx)) / scale < 1e-4
        checked += 1
    assert checked > 50


def test_input_gradient_matches_finite_differences(rng):
    params = NNService.init_params(MlpSpec((3, 5, 2)), rng)
    x = rng.standard_normal((2, 3))
    out, cache = NNService.forward(params, x)
    upstream = np.ones_like(out)
    _, dx = NNService.backward(params, cache, upstream)
    eps = 1e-6
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += eps
        xm[idx] -= eps
        num = (NNService.predict(params, xp).sum() - NNService.predict(params, xm).sum()) / (2 * eps)
        assert dx[idx] == pytest.approx(num, rel=1e-4, abs=1e-7)


def test_relu_network_known_output():
    spec = MlpSpec((2, 2, 1))
    params = NNService.init_params(spec, np.random.default_rng(0))
    params.weights = [np.array([[1.0, -1.0], [1.0, -1.0]]), np.array([[1.0], [1.0]])]
    params.biases = [np.zeros(2), np.zeros(1)]
    out = NNService.predict(params, np.array([[1.0, 2.0], [-1.0, -2.0]]))
    assert out[:, 0].tolist() == [3.0, 3.0]


def test_forward_rejects_wrong_width(rng):
    params = NNService.init_params(MlpSpec((3, 4, 1)), rng)
    with pytest.raises(DimensionError):
        NNService.forward(params, np.zeros((2, 2)))


def test_backward_without_cache_is_state_error(rng):
    params = NNService.init_params(MlpSpec((2, 1)), rng)
    with pytest.raises(StateError):
        NNService.backward(params, None, np.zeros((1, 1)))


def test_spec_validation():
    with pytest.raises(DimensionError):
        MlpSpec((3,))
    with pytest.raises(DimensionError):
        MlpSpec((3, 0, 1))
    with pytest.raises(ValueError):
        MlpSpec((3, 1), head='tanh')


def test_init_is_deterministic_and_bounded():
    spec = MlpSpec((4, 16, 1))
    a = NNService.init_params(spec, np.random.default_rng(3))
    b = NNService.init_params(spec, np.random.default_rng(3))
    assert a.fingerprint() == b.fingerprint()
    assert np.all(np.abs(a.weights[0]) <= np.sqrt(6.0 / 4))
    assert all(np.all(bias == 0) for bias in a.biases)


def test_adam_first_step_moves_by_learning_rate(rng):
    params = NNService.init_params(MlpSpec((2, 1)), rng)
    grads = NNService.zeros_like(params)
    grads.weights[0][:] = 0.5
    grads.biases[0][:] = -2.0
    state = NNService.init_adam(params, lr=0.01)
    new, new_state = NNService.adam_step(params, grads, state)
    assert new_state.t == 1
    np.testing.assert_allclose(new.weights[0], params.weights[0] - 0.01, atol=1e-6)
    np.testing.assert_allclose(new.biases[0], params.biases[0] + 0.01, atol=1e-6)
    assert state.t == 0


def test_adam_rejects_bad_inputs(rng):
    params = NNService.init_params(MlpSpec((2, 1)), rng)
    grads = NNService.zeros_like(params)
    with pytest.raises(ValueError):
        NNService.adam_step(params, grads, NNService.init_adam(params, lr=0.0))
    grads.weights[0][0, 0] = np.nan
    with pytest.raises(TrainingDivergenceError):
        NNService.adam_step(params, grads, NNService.init_adam(params, lr=0.01))


def test_losses_and_gradients():
    loss, grad = NNService.loss_mse(np.array([[1.0], [3.0]]), np.array([0.0, 1.0]))
    assert loss == pytest.approx(2.5)
    np.testing.assert_allclose(grad[:, 0], [1.0, 2.0])

    loss, _ = NNService.loss_logistic(np.array([[0.5]]), np.array([1.0]))
    assert loss == pytest.approx(np.log(2.0))
    loss, _ = NNService.loss_logistic(np.array([[0.0]]), np.array([1.0]))
    assert np.isfinite(loss)
    assert loss == pytest.approx(-np.log(1e-7), rel=1e-6)

    _, grad = NNService.loss_logistic(np.array([[0.0], [1e-9], [0.25], [1.0]]), np.array([1.0, 0.0, 1.0, 1.0]))
    np.testing.assert_array_equal(grad[[0, 1, 3], 0], 0.0)
    assert grad[2, 0] == pytest.approx((0.25 - 1.0) / (0.25 * 0.75) / 4)

    loss, grad = NNService.loss_softmax_ce(np.zeros((2, 4)), np.array([0, 3]))
    assert loss == pytest.approx(np.log(4.0))
    np.testing.assert_allclose(grad.sum(axis=1), 0.0, atol=1e-12)


def test_training_reduces_mse(rng):
    x = rng.standard_normal((256, 2))
    y = (x[:, :1] - 2.0 * x[:, 1:])
    params = NNService.init_params(MlpSpec((2, 16, 1)), rng)
    state = NNService.init_adam(params, lr=1e-2)
    first = NNService.loss_mse(NNService.predict(params, x), y)[0]
    for _ in range(200):
        params, state, _ = NNService.train_step(params, state, x, y, NNService.loss_mse)
    assert NNService.loss_mse(NNService.predict(params, x), y)[0] < 0.1 * first


def test_minibatches_cover_every_row_once(rng):
    batches = list(NNService.minibatches(10, 3, rng))
    assert [len(b) for b in batches] == [3, 3, 3, 1]
    assert sorted(np.concatenate(batches).tolist()) == list(range(10))


def test_checkpoint_round_trip(tmp_path, rng):
    params = NNService.init_params(MlpSpec((3, 4, 2), head='sigmoid'), rng)
    path = str(tmp_path / 'net.json')
    NNService.save_checkpoint(params, path)
    loaded = NNService.load_checkpoint(path)
    assert loaded.spec == params.spec
    assert loaded.fingerprint() == params.fingerprint()
