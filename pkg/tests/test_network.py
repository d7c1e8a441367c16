import numpy as np
import pytest

from bcgd.activations import ActQuantizer
from bcgd.exceptions import ShapeError, StaleCacheError
from bcgd.gaussian_lab.bridge import as_network, teacher_output
from bcgd.gaussian_lab.model import random_model
from bcgd.network import CoarseGrads, Layer, Loss, QuantNet


def batch_loss(net, X, y, envelope=False):
    out, _ = net.forward(X, envelope=envelope)
    return net.loss(out, y)[0]


def fd_weight_grad(net, j, X, y, h=1e-6, envelope=False):
    W = net.layers[j].weight
    g = np.zeros_like(W)
    for idx in np.ndindex(W.shape):
        for sign in (1, -1):
            Wp = W.copy()
            Wp[idx] += sign * h
            trial = net.copy()
            trial.set_weight(j, Wp)
            g[idx] += sign * batch_loss(trial, X, y, envelope) / (2 * h)
    return g


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12)


@pytest.fixture
def small_net(rng):
    return QuantNet.mlp([3, 5, 4, 2], bits_a=2, alpha=0.4, variant="three", rng=rng)


def test_single_layer_is_matrix_product(rng):
    W, b = rng.normal(size=(2, 3)), rng.normal(size=2)
    net = QuantNet([Layer(W, b)], [])
    X = rng.normal(size=(5, 3))
    out, cache = net.forward(X)
    np.testing.assert_allclose(out, X @ W.T + b)
    assert len(cache.preacts) == 1


def test_dead_hidden_layer_gives_bias_only_logits(rng):
    W1 = -np.abs(rng.normal(size=(4, 3)))
    net = QuantNet([Layer(W1), Layer(rng.normal(size=(2, 4)), np.array([0.3, -0.2]))], [ActQuantizer(2, 1.0)])
    X = np.abs(rng.normal(size=(6, 3)))
    out, _ = net.forward(X)
    np.testing.assert_array_equal(out, np.tile([0.3, -0.2], (6, 1)))


def test_two_layer_gaussian_forward(rng):
    model = random_model(rng, 3, 4)
    Z = rng.normal(size=(3, 4))
    out, _ = as_network(model).forward(Z.reshape(1, -1))
    expected = model.v @ (Z @ model.w > 0)
    assert out[0, 0] == pytest.approx(expected, abs=1e-14)
    assert teacher_output(model.at_teacher(), Z) == pytest.approx(teacher_output(model, Z))


def test_shape_validation(rng):
    with pytest.raises(ShapeError):
        QuantNet([Layer(rng.normal(size=(2, 3))), Layer(rng.normal(size=(2, 4)))], [None])
    with pytest.raises(ShapeError):
        QuantNet([Layer(rng.normal(size=(2, 3))), Layer(rng.normal(size=(2, 2)))], [])
    with pytest.raises(ShapeError):
        QuantNet([Layer(rng.normal(size=(2, 3)), np.zeros(3))], [])
    net = QuantNet.mlp([3, 4, 2], 2, rng=rng)
    with pytest.raises(ShapeError):
        net.forward(np.zeros((2, 5)))
    with pytest.raises(ShapeError):
        net.set_weight(0, np.zeros((3, 3)))
    out, cache = net.forward(np.zeros((2, 3)))
    with pytest.raises(ShapeError):
        net.coarse_backward(cache, np.array([0, 1, 1]))


def test_stale_cache_rejected(small_net, rng):
    X, y = rng.normal(size=(4, 3)), rng.integers(0, 2, 4)
    _, cache = small_net.forward(X)
    small_net.set_alpha(0, 0.5)
    with pytest.raises(StaleCacheError):
        small_net.coarse_backward(cache, y)
    _, cache = small_net.forward(X)
    small_net.coarse_backward(cache, y)


def test_last_layer_gradient_is_exact(small_net, rng):
    X, y = rng.normal(size=(8, 3)), rng.integers(0, 2, 8)
    _, cache = small_net.forward(X)
    grads = small_net.coarse_backward(cache, y)
    assert rel_err(grads.weights[-1], fd_weight_grad(small_net, 2, X, y)) <= 1e-4


@pytest.mark.parametrize("loss", [Loss.SQUARED, Loss.SOFTMAX_CE])
def test_linear_network_matches_finite_differences(rng, loss):
    net = QuantNet([Layer(rng.normal(size=(4, 3)), rng.normal(size=4)), Layer(rng.normal(size=(2, 4)))], [None], loss)
    X = rng.normal(size=(6, 3))
    y = rng.normal(size=(6, 2)) if loss is Loss.SQUARED else rng.integers(0, 2, 6)
    _, cache = net.forward(X)
    grads = net.coarse_backward(cache, y)
    for j in range(2):
        assert rel_err(grads.weights[j], fd_weight_grad(net, j, X, y)) <= 1e-5


def test_two_valued_alpha_gradient_is_envelope_derivative(rng):
    net = QuantNet.mlp([3, 6, 2], bits_a=2, alpha=0.2, variant="two", rng=rng)
    X, y = 3 * rng.normal(size=(10, 3)), rng.integers(0, 2, 10)
    _, cache = net.forward(X, envelope=True)
    grads = net.coarse_backward(cache, y)
    h = 1e-7
    lo, hi = net.copy(), net.copy()
    lo.set_alpha(0, 0.2 - h)
    hi.set_alpha(0, 0.2 + h)
    fd = (batch_loss(hi, X, y, True) - batch_loss(lo, X, y, True)) / (2 * h)
    assert abs(grads.alphas[0] - fd) <= 1e-3 * max(abs(fd), 1e-8)
    assert rel_err(grads.weights[0], fd_weight_grad(net, 0, X, y, envelope=True)) <= 1e-4


def test_batch_gradient_is_mean_of_singletons(small_net, rng):
    X, y = rng.normal(size=(2, 3)), np.array([0, 1])
    _, cache = small_net.forward(X)
    both = small_net.coarse_backward(cache, y)
    parts = []
    for i in range(2):
        _, c = small_net.forward(X[i:i + 1])
        parts.append(small_net.coarse_backward(c, y[i:i + 1]))
    for j in range(3):
        np.testing.assert_allclose(both.weights[j], (parts[0].weights[j] + parts[1].weights[j]) / 2, atol=1e-14)
    for j in range(2):
        assert both.alphas[j] == pytest.approx((parts[0].alphas[j] + parts[1].alphas[j]) / 2, abs=1e-14)


def test_alpha_gradient_sums_units_and_averages_batch():
    q = ActQuantizer(1, 1.0, "three")
    net = QuantNet([Layer(np.eye(2)), Layer(np.ones((1, 2)))], [q], Loss.SQUARED)
    X = np.array([[0.5, 0.5], [0.5, -1.0]])
    _, cache = net.forward(X)
    g = net.coarse_backward(cache, np.zeros((2, 1)))
    # residuals 2 and 1, each /2; proxy 1 on positive units: (2 + 2 + 1) / 2
    assert g.alphas[0] == pytest.approx(2.5)


def test_deterministic(small_net, rng):
    X, y = rng.normal(size=(16, 3)), rng.integers(0, 2, 16)
    a = small_net.coarse_backward(small_net.forward(X)[1], y)
    b = small_net.coarse_backward(small_net.forward(X)[1], y)
    for ga, gb in zip(a.weights, b.weights):
        assert ga.tobytes() == gb.tobytes()
    assert a.alphas == b.alphas and a.loss == b.loss


def test_all_finite_flags_nan():
    g = CoarseGrads([np.array([[np.nan]])], [None], [], 0.0)
    assert not g.all_finite()
    assert CoarseGrads([np.zeros((1, 1))], [None], [None], 0.0).all_finite()
