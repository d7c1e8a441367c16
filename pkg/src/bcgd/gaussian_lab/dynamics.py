"""Normalized coarse gradient descent on the population loss."""

import logging
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import DomainError, StepFailureError
from .closed_form import expected_coarse_grad_w, expected_grad_v, population_loss, stationary_point
from .model import TwoLayerModel, random_model, random_unit

log = logging.getLogger(__name__)

TRAJECTORY_COLUMNS = ("t", "f", "grad_v_norm", "coarse_grad_w_norm", "theta", "v_dist")


def ncgd_step(model, eta):
    """One step: ``v -= eta E[dv]``, ``w -= eta E[g]``, then ``w /= |w|``."""
    if abs(np.linalg.norm(model.w) - 1.0) > 1e-9:
        raise DomainError(f"ncgd_step needs a unit-norm w, got |w| = {np.linalg.norm(model.w)}")
    v = model.v - eta * expected_grad_v(model)
    w_half = model.w - eta * expected_coarse_grad_w(model)
    nw = np.linalg.norm(w_half)
    if not np.isfinite(nw) or nw <= 1e-12:
        raise StepFailureError(f"w vanished after a step of size {eta}; reduce eta")
    return model.with_params(v=v, w=w_half / nw)


def _row(t, model):
    return (
        t,
        population_loss(model),
        float(np.linalg.norm(expected_grad_v(model))),
        float(np.linalg.norm(expected_coarse_grad_w(model))),
        model.theta,
        float(np.linalg.norm(model.v - model.v_star)),
    )


@dataclass
class DescentRun:
    rows: list
    eta: float
    converged: bool
    model: TwoLayerModel
    halvings: int = 0
    events: list = field(default_factory=list)

    @property
    def final(self):
        return dict(zip(TRAJECTORY_COLUMNS, self.rows[-1]))

    @property
    def monotone(self):
        f = [r[1] for r in self.rows]
        return all(b <= a for a, b in zip(f, f[1:]))


def _attempt(model, eta, max_iters, tol):
    rows = [_row(0, model)]
    for t in range(1, max_iters + 1):
        if rows[-1][2] < tol and rows[-1][3] < tol:
            return rows, model, True, None
        try:
            nxt = ncgd_step(model, eta)
        except StepFailureError as exc:
            return rows, model, False, str(exc)
        row = _row(t, nxt)
        if row[1] > rows[-1][1]:
            return rows, model, False, f"f increased at t={t} ({rows[-1][1]:.6e} -> {row[1]:.6e})"
        rows.append(row)
        model = nxt
    done = rows[-1][2] < tol and rows[-1][3] < tol
    return rows, model, done, None


def descend(model, eta=0.1, max_iters=100_000, tol=1e-6, max_halvings=20):
    """Run NCGD until both gradient norms drop below ``tol``.

    A step that increases ``f`` aborts the run; the whole trajectory is then
    restarted from ``model`` with half the step size, so the returned run is
    monotone at its final ``eta``. Raises ``StepFailureError`` once
    ``max_halvings`` is exhausted.
    """
    events = []
    for halvings in range(max_halvings + 1):
        rows, final, converged, problem = _attempt(model, eta, max_iters, tol)
        if problem is None:
            return DescentRun(rows, eta, converged, final, halvings, events)
        msg = f"eta={eta:g}: {problem}; halving"
        log.info(msg)
        events.append(msg)
        eta /= 2.0
    raise StepFailureError(f"no monotone step size found after {max_halvings} halvings")


def admissible_init(rng, m, n, max_tries=10_000):
    """Random teacher and an init with ``v0.v* > 0``, ``theta0 < pi/2``, ``(1.v*)(1.v0) <= (1.v*)^2``."""
    for _ in range(max_tries):
        model = random_model(rng, m, n)
        s = model.v_star.sum()
        if model.v @ model.v_star > 0 and model.theta < np.pi / 2 and s * model.v.sum() <= s * s:
            return model
    raise DomainError(f"no admissible initialization found in {max_tries} draws")


def stationary_adjacent_init(rng, m, n, scale=1e-3, max_tries=10_000):
    """A random teacher that has a stationary point, with the learner placed next to it."""
    if n < 2:
        raise DomainError("stationary points with theta in (0, pi) need n >= 2")
    for _ in range(max_tries):
        v_star = rng.normal(size=m)
        w_star = random_unit(rng, n)
        sp = stationary_point(v_star, w_star, direction=rng.normal(size=n))
        if sp is None:
            continue
        w = sp.w + scale * rng.normal(size=n)
        return TwoLayerModel(sp.v + scale * rng.normal(size=m), w / np.linalg.norm(w), v_star, w_star)
    raise DomainError(f"no teacher with a stationary point found for m={m} in {max_tries} draws")


def init_model(mode, rng, m, n):
    if mode == "remark1":
        return admissible_init(rng, m, n)
    if mode == "random":
        return random_model(rng, m, n)
    if mode == "stationary-adjacent":
        return stationary_adjacent_init(rng, m, n)
    raise ValueError(f"unknown init mode {mode!r}; use remark1, random or stationary-adjacent")
