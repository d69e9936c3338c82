"""MLP forward/backward, gradient checks, Adam, checkpoint formats."""

import numpy as np
import pytest

from banditrx.errors import ConfigError, NumericError
from banditrx.numeric import (Gradients, MlpModel, backward, forward_cache,
                              load_mlp, mlp_forward, mlp_gradient, mlp_init,
                              model_from_dict, model_to_dict, optimizer_init,
                              optimizer_step, save_mlp)


def test_init_deterministic_and_scaled():
    a = mlp_init((4, 8, 1), ("tanh", "identity"), seed=3)
    b = mlp_init((4, 8, 1), ("tanh", "identity"), seed=3)
    c = mlp_init((4, 8, 1), ("tanh", "identity"), seed=4)
    for wa, wb in zip(a.weights, b.weights):
        assert np.array_equal(wa, wb)
    assert not np.array_equal(a.weights[0], c.weights[0])
    assert np.abs(a.weights[0]).max() <= 1.0 / 2.0  # 1/sqrt(4)
    assert all(np.all(bias == 0) for bias in a.biases)


def test_init_validation():
    with pytest.raises(ConfigError):
        mlp_init((4,), (), seed=0)
    with pytest.raises(ConfigError):
        mlp_init((4, 1), ("tanh", "tanh"), seed=0)
    with pytest.raises(ConfigError):
        mlp_init((4, 1), ("softplus",), seed=0)


def test_forward_shapes_and_single_row():
    model = mlp_init((3, 5, 2), ("relu", "identity"), seed=0)
    batch = mlp_forward(model, np.zeros((7, 3)))
    assert batch.shape == (7, 2)
    single = mlp_forward(model, np.zeros(3))
    assert single.shape == (2,)
    assert np.array_equal(single, batch[0])


def test_identity_network_is_affine():
    w = (np.array([[2.0], [3.0]]),)
    b = (np.array([0.5]),)
    model = MlpModel((2, 1), ("identity",), w, b)
    out = mlp_forward(model, np.array([[1.0, 1.0], [2.0, -1.0]]))
    assert np.allclose(out.ravel(), [5.5, 1.5])


def _numeric_grad(model, x, y, eps=1e-6):
    """Central differences on the flattened parameter vector."""
    def loss_of(m):
        return mlp_gradient(m, x, y)[1]

    grads_w, grads_b = [], []
    for li in range(len(model.weights)):
        gw = np.zeros_like(model.weights[li])
        for idx in np.ndindex(*model.weights[li].shape):
            wp = [w.copy() for w in model.weights]
            wm = [w.copy() for w in model.weights]
            wp[li][idx] += eps
            wm[li][idx] -= eps
            lp = loss_of(MlpModel(model.sizes, model.activations,
                                  tuple(wp), model.biases))
            lm = loss_of(MlpModel(model.sizes, model.activations,
                                  tuple(wm), model.biases))
            gw[idx] = (lp - lm) / (2 * eps)
        grads_w.append(gw)
        gb = np.zeros_like(model.biases[li])
        for idx in np.ndindex(*model.biases[li].shape):
            bp = [b.copy() for b in model.biases]
            bm = [b.copy() for b in model.biases]
            bp[li][idx] += eps
            bm[li][idx] -= eps
            lp = loss_of(MlpModel(model.sizes, model.activations,
                                  model.weights, tuple(bp)))
            lm = loss_of(MlpModel(model.sizes, model.activations,
                                  model.weights, tuple(bm)))
            gb[idx] = (lp - lm) / (2 * eps)
        grads_b.append(gb)
    return grads_w, grads_b


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(11)
    model = mlp_init((3, 4, 2), ("tanh", "identity"), seed=5)
    x = rng.normal(size=(6, 3))
    y = rng.normal(size=(6, 2))
    grads, _ = mlp_gradient(model, x, y)
    num_w, num_b = _numeric_grad(model, x, y)
    for g, n in zip(grads.weights, num_w):
        assert np.abs(g - n).max() < 1e-3 * max(1.0, np.abs(n).max())
    for g, n in zip(grads.biases, num_b):
        assert np.abs(g - n).max() < 1e-3 * max(1.0, np.abs(n).max())


def test_backward_grad_input_matches_fd():
    rng = np.random.default_rng(2)
    model = mlp_init((3, 4, 1), ("relu", "identity"), seed=1)
    x = rng.normal(size=(2, 3))
    out, cache = forward_cache(model, x)
    go = np.ones_like(out)
    _, gin = backward(model, cache, go)
    eps = 1e-6
    for i in range(2):
        for j in range(3):
            xp, xm = x.copy(), x.copy()
            xp[i, j] += eps
            xm[i, j] -= eps
            fd = (mlp_forward(model, xp).sum() - mlp_forward(model, xm).sum()) / (2 * eps)
            assert abs(gin[i, j] - fd) < 1e-4


def test_adam_fits_quadratic():
    # one identity layer regressing y = 2x - 1 must reach tiny loss fast
    model = mlp_init((1, 1), ("identity",), seed=0)
    opt = optimizer_init(model, lr=0.05)
    x = np.linspace(-1, 1, 32).reshape(-1, 1)
    y = 2.0 * x - 1.0
    for _ in range(400):
        grads, loss = mlp_gradient(model, x, y)
        model, opt = optimizer_step(model, grads, opt)
    assert mlp_gradient(model, x, y)[1] < 1e-8


def test_gradients_scaled_add():
    g = Gradients((np.ones((2, 2)),), (np.ones(2),))
    h = Gradients((np.full((2, 2), 2.0),), (np.full(2, 2.0),))
    s = Gradients.add(g.scaled(2.0), h)
    assert np.all(s.weights[0] == 4.0)
    assert np.all(s.biases[0] == 4.0)


def test_non_finite_loss_raises():
    w = (np.array([[1e308]]),)
    b = (np.array([0.0]),)
    model = MlpModel((1, 1), ("identity",), w, b)
    with pytest.raises(NumericError):
        mlp_gradient(model, np.array([[1e308]]), np.array([[0.0]]))


@pytest.mark.parametrize("fmt", ["json", "binary"])
def test_checkpoint_round_trip(tmp_path, fmt):
    model = mlp_init((3, 5, 2), ("tanh", "identity"), seed=9)
    path = tmp_path / f"model.{fmt}"
    save_mlp(model, path, fmt=fmt)
    again = load_mlp(path)
    assert again.sizes == model.sizes
    assert again.activations == model.activations
    for wa, wb in zip(again.weights, model.weights):
        assert np.array_equal(wa, wb)


def test_binary_checkpoint_corruption_detected(tmp_path):
    model = mlp_init((2, 2), ("identity",), seed=0)
    path = tmp_path / "model.bin"
    save_mlp(model, path, fmt="binary")
    raw = bytearray(path.read_bytes())
    raw[-1] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises((ConfigError, NumericError)):
        load_mlp(path)


def test_model_dict_round_trip():
    model = mlp_init((2, 3, 1), ("relu", "identity"), seed=7)
    again = model_from_dict(model_to_dict(model))
    for wa, wb in zip(again.weights, model.weights):
        assert np.array_equal(wa, wb)
