import numpy as np
import pytest

from bcgd.exceptions import InsufficientSamplesWarning, ShapeError
from bcgd.gaussian_lab import closed_form as cf
from bcgd.gaussian_lab.bridge import as_network, network_coarse_grad
from bcgd.gaussian_lab.model import TwoLayerModel, random_model
from bcgd.gaussian_lab.monte_carlo import (
    _chunk_moments,
    _merge,
    mc_estimate,
    mc_gaussian_moments,
    sample_coarse_grad,
    sample_terms,
)


def scalar_model(v=1.0, w=1.0, v_star=2.0):
    return TwoLayerModel(np.array([v]), np.array([w]), np.array([v_star]), np.array([1.0]))


def test_scalar_trace():
    # r = 1 * 1 - 2 * 1 = -1, dv = -1, gw = Z * v * r = -2
    dv, gw = sample_coarse_grad(scalar_model(), np.array([[2.0]]))
    assert dv.tolist() == [-1.0] and gw.tolist() == [-2.0]


def test_zero_at_teacher(rng):
    model = random_model(rng, 3, 4).at_teacher()
    dv, gw = sample_coarse_grad(model, rng.normal(size=(3, 4)))
    assert not dv.any() and not gw.any()


def test_dead_learner_has_no_gradient():
    model = scalar_model(w=-1.0)
    dv, gw = sample_coarse_grad(model, np.array([[2.0]]))
    assert dv.tolist() == [0.0] and gw.tolist() == [0.0]


def test_shape_checked(rng):
    with pytest.raises(ShapeError):
        sample_coarse_grad(random_model(rng, 3, 4), np.zeros((4, 3)))


def test_batched_terms_match_single(rng):
    model = random_model(rng, 3, 5)
    Z = rng.normal(size=(20, 3, 5))
    dv, gw, loss = sample_terms(model, Z)
    for k in range(20):
        d1, g1 = sample_coarse_grad(model, Z[k])
        assert np.array_equal(dv[k], d1) and np.allclose(gw[k], g1, rtol=1e-15, atol=0)


def test_network_bridge_agrees(rng):
    for _ in range(50):
        m, n = rng.integers(1, 7, size=2)
        model = random_model(rng, m, n)
        Z = rng.normal(size=(m, n))
        dv, gw = sample_coarse_grad(model, Z)
        ndv, ngw = network_coarse_grad(model, Z)
        assert np.max(np.abs(dv - ndv)) <= 1e-12 and np.max(np.abs(gw - ngw)) <= 1e-12


def test_bridge_network_shape(rng):
    net = as_network(random_model(rng, 3, 4))
    assert [layer.weight.shape for layer in net.layers] == [(3, 12), (1, 3)]


def test_merge_matches_direct_statistics(rng):
    x = rng.normal(size=(1000, 3))
    acc = _chunk_moments(x[:123])
    for lo, hi in ((123, 500), (500, 501), (501, 1000)):
        acc = _merge(acc, _chunk_moments(x[lo:hi]))
    n, mean, m2 = acc
    assert n == 1000
    assert np.allclose(mean, x.mean(axis=0), rtol=0, atol=1e-14)
    assert np.allclose(m2 / (n - 1), x.var(axis=0, ddof=1), rtol=1e-12)


def test_loss_example_against_monte_carlo():
    model = TwoLayerModel(np.array([1.0]), np.array([0.0, 1.0]), np.array([1.0]), np.array([1.0, 0.0]))
    est = mc_estimate(model, 10**6, seed=3)["loss"]
    assert est.z_scores(cf.population_loss(model)).max() <= 3


def test_estimates_bracket_closed_forms(rng):
    model = random_model(rng, 3, 3)
    est = mc_estimate(model, 200_000, seed=1)
    assert est["loss"].z_scores(cf.population_loss(model)).max() <= 5
    assert est["dv"].z_scores(cf.expected_grad_v(model)).max() <= 5
    assert est["gw"].z_scores(cf.expected_coarse_grad_w(model)).max() <= 5


def test_moments_against_closed_forms(rng):
    w, wt = rng.normal(size=3), rng.normal(size=3)
    check = mc_gaussian_moments(w, wt, 200_000, seed=2)
    for est, closed in zip(check.estimates, check.closed):
        assert est.z_scores(closed).max() <= 5


def test_small_sample_warning(rng):
    with pytest.warns(InsufficientSamplesWarning):
        mc_estimate(random_model(rng, 2, 2), 100, seed=0)
    with pytest.raises(ValueError):
        mc_estimate(random_model(rng, 2, 2), 1, seed=0)


def test_deterministic_under_threads(rng):
    model = random_model(rng, 2, 3)
    a = mc_estimate(model, 50_000, seed=7, chunk=4096, n_jobs=1)
    b = mc_estimate(model, 50_000, seed=7, chunk=4096, n_jobs=4)
    for k in a:
        assert a[k].mean.tobytes() == b[k].mean.tobytes()
        assert a[k].se.tobytes() == b[k].se.tobytes()


def test_keys_give_independent_streams(rng):
    model = random_model(rng, 2, 3)
    a = mc_estimate(model, 20_000, seed=7, key=(0,))
    b = mc_estimate(model, 20_000, seed=7, key=(1,))
    assert a["loss"].mean != b["loss"].mean
