import numpy as np
import pytest

from bcgd.exceptions import DivergedError
from bcgd.network import CoarseGrads, Layer, QuantNet
from bcgd.optim import BlendedState, bc_step, bcgd_step, blended_step, blended_update, pgd_step, run_blended
from bcgd.weights import project


def scalar_setup(w=1.0, **hyper):
    net = QuantNet([Layer(np.array([[w]]))], [])
    state = BlendedState.from_net(net, 1, keep_ends_float=False, **hyper)
    return net, state


def grads_of(*gs):
    return CoarseGrads([np.array([[g]]) for g in gs], [None] * len(gs), [], 0.0)


def test_hand_step():
    net, state = scalar_setup(rho=1e-5, lr=0.1)
    bcgd_step(state, net, grads_of(0.5))
    assert state.w_f[0][0, 0] == pytest.approx(0.95, abs=1e-15)
    assert net.layers[0].weight[0, 0] == pytest.approx(0.95)


def test_rho_zero_is_bc_and_rho_one_is_pgd(rng):
    w_f, w, g = rng.normal(size=5), rng.normal(size=5), rng.normal(size=5)
    np.testing.assert_array_equal(blended_update(w_f, w, g, 0.0, 0.1), w_f - 0.1 * g)
    np.testing.assert_array_equal(blended_update(w_f, w, g, 1.0, 0.1), w - 0.1 * g)


def random_pair(seed, rho):
    rng = np.random.default_rng(seed)
    net = QuantNet.mlp([3, 4, 2], 2, 0.5, rng=rng)
    state = BlendedState.from_net(net, 2, keep_ends_float=False, rho=rho, momentum=0.9, weight_decay=1e-3)
    X, y = rng.normal(size=(8, 3)), rng.integers(0, 2, 8)
    return net, state, X, y


def run_steps(step, seed, rho, n=5):
    net, state, X, y = random_pair(seed, rho)
    for _ in range(n):
        _, cache = net.forward(X)
        step(state, net, net.coarse_backward(cache, y))
    return net, state


@pytest.mark.parametrize("pinned, rho", [(bc_step, 0.0), (pgd_step, 1.0)])
def test_pinned_steps_bit_identical(pinned, rho):
    net_a, st_a = run_steps(pinned, 3, 0.3)
    net_b, st_b = run_steps(bcgd_step, 3, rho)
    for a, b in zip(st_a.w_f, st_b.w_f):
        assert a.tobytes() == b.tobytes()
    assert net_a.alphas == net_b.alphas


def test_momentum_two_step_trace():
    net, state = scalar_setup(w=2.0, rho=0.5, lr=0.1, momentum=0.9)
    # w = binarize(2) = 2
    bcgd_step(state, net, grads_of(1.0))
    v1 = 1.0
    wf1 = 0.5 * 2 + 0.5 * 2 - 0.1 * v1
    assert state.w_f[0][0, 0] == pytest.approx(wf1)
    bcgd_step(state, net, grads_of(0.5))
    v2 = 0.9 * v1 + 0.5
    assert state.velocity[0][0, 0] == pytest.approx(v2)
    assert state.w_f[0][0, 0] == pytest.approx(0.5 * wf1 + 0.5 * abs(wf1) - 0.1 * v2)


def test_weight_decay_acts_on_float_weights():
    net, state = scalar_setup(w=2.0, rho=0.0, lr=0.1, weight_decay=0.5)
    bcgd_step(state, net, grads_of(0.0))
    assert state.w_f[0][0, 0] == pytest.approx(2.0 - 0.1 * 0.5 * 2.0)


def test_schedule_keeps_rate_ratio():
    state = BlendedState([np.ones(2)], [None], 1, lr=0.01, rate_factor=0.01, milestones=(10, 5), decay=0.1)
    seen = []
    for epoch in (0, 4, 5, 9, 10, 30):
        state.set_epoch(epoch)
        seen.append(state.lr_w)
        assert state.lr_alpha == state.rate_factor * state.lr_w
    assert seen == pytest.approx([0.01, 0.01, 0.001, 0.001, 1e-4, 1e-4])


def test_alpha_floor():
    net = QuantNet.mlp([2, 3, 2], 2, 1e-6, rng=np.random.default_rng(0))
    state = BlendedState.from_net(net, 1, keep_ends_float=False, lr=1.0, rate_factor=1.0)
    grads = CoarseGrads([np.zeros((3, 2)), np.zeros((2, 3))], [None, None], [1e3], 0.0)
    blended_step(state, net, grads)
    assert net.alphas[0] == state.alpha_floor


def test_non_finite_gradient_raises_with_step():
    net, state = scalar_setup()
    bcgd_step(state, net, grads_of(0.1))
    with pytest.raises(DivergedError) as info:
        bcgd_step(state, net, grads_of(np.inf))
    assert info.value.step == 1


def test_end_layers_stay_float(rng):
    net = QuantNet.mlp([3, 4, 4, 2], 2, rng=rng)
    state = BlendedState.from_net(net, 1, keep_ends_float=True)
    assert [state.is_quantized(j) for j in range(3)] == [False, True, False]
    assert set(np.unique(np.abs(net.layers[1].weight)).round(12)) == {round(state.quantized[1].delta, 12)}
    np.testing.assert_array_equal(net.layers[0].weight, state.w_f[0])


def test_every_step_reprojects(rng):
    net, state = run_steps(bcgd_step, 1, 1e-5, n=3)
    for j in range(len(net.layers)):
        np.testing.assert_array_equal(net.layers[j].weight, project(state.w_f[j].ravel(), 2).dequantize().reshape(state.w_f[j].shape))


def test_network_scheme_shares_one_delta(rng):
    net = QuantNet.mlp([3, 4, 2], 2, rng=rng)
    state = BlendedState.from_net(net, 2, keep_ends_float=False, scheme="network")
    assert state.quantized[0].delta == state.quantized[1].delta


@pytest.mark.parametrize(
    "hyper", [{"rho": -0.1}, {"rho": 1.5}, {"lr": 0.0}, {"momentum": 1.0}, {"weight_decay": -1.0}]
)
def test_state_validation(hyper):
    with pytest.raises(ValueError):
        BlendedState([np.ones(1)], [None], 1, **hyper)


def test_run_blended_trace_shape():
    trace = run_blended(lambda w: w - 1.0, np.array([0.3, -0.2]), 2, 0.5, 0.1, 4, f=lambda w: float(w @ w))
    assert len(trace) == 5
    f0, w0, wf0 = trace[0]
    np.testing.assert_array_equal(w0, project(wf0, 2).dequantize())
    assert f0 == pytest.approx(w0 @ w0)
