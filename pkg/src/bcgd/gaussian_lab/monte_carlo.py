"""Monte Carlo oracles for the closed forms.

Samples are drawn in fixed-size chunks; chunk ``k`` has its own counter-based
generator keyed by ``(seed, key, k)``. Per-chunk moments are merged in chunk
order, so the estimate does not depend on ``n_jobs``.
"""

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .._random import stream
from ..exceptions import InsufficientSamplesWarning, ShapeError
from .closed_form import gaussian_moments_closed

CHUNK = 2**16
MIN_SAMPLES = 10**4


def binarized_relu(x):
    return (np.asarray(x) > 0).astype(np.float64)


def sample_coarse_grad(model, Z):
    """Exact ``v``-gradient and coarse ``w``-gradient of the sample loss at one input ``Z`` (m x n).

    With ``r = v^T sigma(Z w) - v*^T sigma(Z w*)``: ``dv = sigma(Z w) r`` and
    ``gw = Z^T (sigma(Z w) * v) r``, the ReLU derivative standing in for
    sigma's.
    """
    Z = np.asarray(Z, dtype=np.float64)
    if Z.shape != (model.m, model.n):
        raise ShapeError(f"Z must be {model.m}x{model.n}, got {Z.shape}")
    dv, gw, _ = sample_terms(model, Z[None])
    return dv[0], gw[0]


def sample_terms(model, Z):
    """Batched ``(dv, gw, loss)`` for ``Z`` of shape (N, m, n)."""
    s = binarized_relu(Z @ model.w)
    s_star = binarized_relu(Z @ model.w_star)
    r = s @ model.v - s_star @ model.v_star
    dv = s * r[:, None]
    gw = np.einsum("kij,ki->kj", Z, s * model.v) * r[:, None]
    return dv, gw, 0.5 * r * r


@dataclass(frozen=True)
class Estimate:
    mean: np.ndarray
    se: np.ndarray
    n: int

    def z_scores(self, reference):
        """``|mean - reference| / se``; zero where both the deviation and se vanish."""
        dev = np.abs(self.mean - np.asarray(reference, dtype=np.float64))
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(self.se > 0, dev / np.where(self.se > 0, self.se, 1.0), np.where(dev > 0, np.inf, 0.0))
        return z


def _chunk_moments(x):
    mean = x.mean(axis=0)
    d = x - mean
    return x.shape[0], mean, np.sum(d * d, axis=0)


def _merge(a, b):
    # pairwise update of (count, mean, sum of squared deviations)
    na, ma, sa = a
    nb, mb, sb = b
    n = na + nb
    delta = mb - ma
    return n, ma + delta * (nb / n), sa + sb + delta * delta * (na * nb / n)


def _chunk_sizes(n_samples, chunk):
    full, rest = divmod(n_samples, chunk)
    return [chunk] * full + ([rest] if rest else [])


def _run_chunks(fn, n_samples, seed, key, chunk, n_jobs):
    sizes = _chunk_sizes(n_samples, chunk)
    tasks = [(stream(seed, "mc", *key, k), size) for k, size in enumerate(sizes)]
    if n_jobs and n_jobs > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(lambda t: fn(*t), tasks))
    else:
        results = [fn(*t) for t in tasks]
    merged = {}
    for res in results:
        for name, moments in res.items():
            merged[name] = moments if name not in merged else _merge(merged[name], moments)
    return {name: Estimate(np.asarray(m), np.sqrt(np.asarray(s) / (n - 1) / n), n) for name, (n, m, s) in merged.items()}


def _warn_small(n_samples):
    if n_samples < 2:
        raise ValueError("Monte Carlo estimates need at least two samples")
    if n_samples < MIN_SAMPLES:
        warnings.warn(
            f"{n_samples} samples is below {MIN_SAMPLES}; standard errors are unreliable",
            InsufficientSamplesWarning,
            stacklevel=3,
        )


def mc_estimate(model, n_samples, seed, key=(), chunk=CHUNK, n_jobs=1):
    """Means and standard errors of the sample loss, ``dv`` and ``gw`` over Gaussian ``Z``.

    Returns ``{"loss": Estimate, "dv": Estimate, "gw": Estimate}``.
    """
    _warn_small(n_samples)

    def one(rng, size):
        Z = rng.standard_normal((size, model.m, model.n))
        dv, gw, loss = sample_terms(model, Z)
        return {"loss": _chunk_moments(loss), "dv": _chunk_moments(dv), "gw": _chunk_moments(gw)}

    return _run_chunks(one, n_samples, seed, key, chunk, n_jobs)


@dataclass(frozen=True)
class MomentCheck:
    names: tuple
    estimates: tuple
    closed: tuple


MOMENT_NAMES = ("P[z.w>0]", "P[z.w>0, z.w~>0]", "E[z 1{z.w>0}]", "E[z 1{both}]")


def mc_gaussian_moments(w, w_tilde, n_samples, seed, key=(), chunk=CHUNK, n_jobs=1):
    """MC estimates of the four half-space moments next to their closed forms."""
    _warn_small(n_samples)
    w = np.asarray(w, dtype=np.float64)
    w_tilde = np.asarray(w_tilde, dtype=np.float64)
    closed = gaussian_moments_closed(w, w_tilde)

    def one(rng, size):
        z = rng.standard_normal((size, w.size))
        a = binarized_relu(z @ w)
        both = a * binarized_relu(z @ w_tilde)
        return {
            0: _chunk_moments(a),
            1: _chunk_moments(both),
            2: _chunk_moments(z * a[:, None]),
            3: _chunk_moments(z * both[:, None]),
        }

    est = _run_chunks(one, n_samples, seed, key, chunk, n_jobs)
    return MomentCheck(MOMENT_NAMES, tuple(est[i] for i in range(4)), tuple(np.asarray(c, dtype=np.float64) for c in closed))
