"""Closed-form population quantities of the two-layer model under Gaussian input.

Everything is written with inner products and sums (``1^T v``) rather than
explicit ``I + 11^T`` matrices.
"""

from dataclasses import dataclass

import numpy as np

from ..exceptions import DomainError, NondifferentiableError
from .model import angle, is_interior

SQRT_2PI = np.sqrt(2.0 * np.pi)


def population_loss(model):
    """Expected sample loss.

    Expanding the quadratic form gives
    ``(||v - v*||^2 + (1^T (v - v*))^2 + 4 theta / pi * v^T v*) / 8``,
    which has no cancellation near the global minimizer.
    """
    d = model.v - model.v_star
    theta = model.theta
    s = d.sum()
    return float((d @ d + s * s + 4.0 * theta / np.pi * (model.v @ model.v_star)) / 8.0)


def grad_v(model):
    """Gradient of the population loss in ``v``; also the expected sample gradient in ``v``."""
    d = model.v - model.v_star
    theta = model.theta
    return 0.25 * (d + d.sum() + (2.0 * theta / np.pi) * model.v_star)


expected_grad_v = grad_v


def grad_w(model):
    """Gradient of the population loss in ``w``; defined only for theta in (0, pi)."""
    theta = model.theta
    if not is_interior(theta):
        raise NondifferentiableError(f"population loss is not differentiable in w at theta={theta:.3g}")
    w, ws = model.w, model.w_star
    nw2 = w @ w
    p = ws - w * (w @ ws) / nw2
    return -(model.v @ model.v_star) / (2.0 * np.pi * np.sqrt(nw2)) * p / np.linalg.norm(p)


def h_value(v, v_star):
    """``||v||^2 + (1^T v)^2 - (1^T v)(1^T v*) + v^T v*``."""
    sv = v.sum()
    return float(v @ v + sv * sv - sv * v_star.sum() + v @ v_star)


def expected_coarse_grad_w(model):
    """Expected coarse gradient in ``w`` (ReLU-derivative proxy).

    With ``u = w/||w||`` and ``w*`` both unit, ``||u + w*|| = 2 cos(theta/2)``,
    so ``cos(theta/2) * (u + w*)/||u + w*||`` equals ``(u + w*)/2``. That form
    is used here: it is exact, needs no division, and vanishes at theta = pi
    as the endpoint convention requires.
    """
    w = model.w
    nw = np.linalg.norm(w)
    if nw == 0:
        raise DomainError("expected coarse gradient is undefined at w = 0")
    u = w / nw
    h = h_value(model.v, model.v_star)
    return h / (2.0 * SQRT_2PI) * u - (model.v @ model.v_star) / (2.0 * SQRT_2PI) * (u + model.w_star)


def correlation(model):
    """Closed-form inner product of the expected coarse gradient with the true gradient in ``w``.

    ``sin(theta) / (2 (2 pi)^{3/2} ||w||) * (v^T v*)^2``, for theta in (0, pi).
    """
    theta = model.theta
    if not is_interior(theta):
        raise DomainError(f"correlation is defined for theta in (0, pi), got {theta:.3g}")
    return _correlation_value(model, theta)


def _correlation_value(model, theta):
    return float(np.sin(theta) / (2.0 * SQRT_2PI**3 * np.linalg.norm(model.w)) * (model.v @ model.v_star) ** 2)


def correlation_inner(model):
    """The same inner product evaluated from the two gradient expressions."""
    return float(expected_coarse_grad_w(model) @ grad_w(model))


def correlation_bound_ratio(model, C, min_denominator=1e-8):
    """``||E[g]||^2 / (||grad_v||^2 + correlation)``, or ``None`` when the denominator is tiny.

    Requires ``||w|| = 1`` and ``||v|| <= C``.
    """
    if abs(np.linalg.norm(model.w) - 1.0) > 1e-9:
        raise DomainError("correlation bound ratio needs ||w|| = 1")
    if np.linalg.norm(model.v) > C:
        raise DomainError(f"||v|| = {np.linalg.norm(model.v):.3g} exceeds C = {C}")
    gv = grad_v(model)
    denom = gv @ gv + _correlation_value(model, model.theta)
    if denom < min_denominator:
        return None
    g = expected_coarse_grad_w(model)
    return float(g @ g / denom)


def lipschitz_bound(m, v_star_norm, c, C):
    """Gradient Lipschitz constant for ``||w||, ||w~|| >= c`` and ``||v||, ||v~|| <= C``."""
    return (m + 1 + v_star_norm / c) / 4.0 + (C + c) * v_star_norm / (2.0 * np.pi * c * c)


@dataclass(frozen=True)
class StationaryPoint:
    v: np.ndarray
    theta: float
    w: np.ndarray | None = None


def _orthonormal_direction(w_star, direction=None):
    w_star = np.asarray(w_star, dtype=np.float64)
    if direction is None:
        direction = np.zeros_like(w_star)
        direction[int(np.argmin(np.abs(w_star)))] = 1.0
    d = np.asarray(direction, dtype=np.float64)
    d = d - (d @ w_star) * w_star
    nd = np.linalg.norm(d)
    if nd < 1e-12:
        raise DomainError("direction must not be parallel to w_star")
    return d / nd


def stationary_point(v_star, w_star=None, direction=None):
    """Stationary point where both population gradients vanish, or ``None`` if none exists.

    With ``s = 1^T v*`` and ``D = (m + 1)||v*||^2 - s^2`` a stationary point
    exists iff ``s^2 < (m + 1)||v*||^2 / 2``; then
    ``v = (I + 11^T)^{-1} (-s^2/D I + 11^T) v*`` and
    ``theta = pi/2 * (m + 1)||v*||^2 / D``.
    When ``w_star`` is given, a unit ``w`` at that angle is built in the plane
    of ``w_star`` and ``direction``.
    """
    v_star = np.asarray(v_star, dtype=np.float64)
    if not np.any(v_star):
        raise DomainError("stationary points need a nonzero teacher v_star")
    m = v_star.size
    s = float(v_star.sum())
    nv = float(v_star @ v_star)
    if s * s >= (m + 1) * nv / 2.0:
        return None
    D = (m + 1) * nv - s * s
    u = -(s * s) / D * v_star + s
    v = u - u.sum() / (m + 1)
    theta = np.pi / 2.0 * (m + 1) * nv / D
    w = None
    if w_star is not None:
        w_star = np.asarray(w_star, dtype=np.float64)
        if w_star.size < 2:
            raise DomainError("a stationary angle in (0, pi) needs n >= 2")
        e = _orthonormal_direction(w_star, direction)
        w = np.cos(theta) * w_star + np.sin(theta) * e
    return StationaryPoint(v, float(theta), w)


def gaussian_moments_closed(w, w_tilde):
    """Closed forms of the four half-space moments of a standard Gaussian vector.

    Returns ``(P[z'w > 0], P[z'w > 0, z'w~ > 0], E[z 1{z'w > 0}], E[z 1{both}])``.
    The last uses ``cos(theta/2) (u + u~)/||u + u~|| = (u + u~)/2`` for unit
    ``u, u~``, which is zero at theta = pi.
    """
    w = np.asarray(w, dtype=np.float64)
    w_tilde = np.asarray(w_tilde, dtype=np.float64)
    theta = angle(w, w_tilde)
    u = w / np.linalg.norm(w)
    ut = w_tilde / np.linalg.norm(w_tilde)
    return 0.5, (np.pi - theta) / (2.0 * np.pi), u / SQRT_2PI, (u + ut) / (2.0 * SQRT_2PI)
