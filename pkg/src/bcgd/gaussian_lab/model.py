"""Teacher/learner parameters of the two-layer binarized-ReLU model."""

from dataclasses import dataclass, replace

import numpy as np

from ..exceptions import DomainError, ShapeError

ENDPOINT_TOL = 1e-9


def _vec(x, name):
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 1 or a.size == 0:
        raise ShapeError(f"{name} must be a non-empty 1-D vector, got shape {a.shape}")
    return a


def angle(w, w_star):
    """Angle in [0, pi] between two nonzero vectors.

    Computed as ``2 atan2(|u - u*|, |u + u*|)`` on the unit vectors, which
    keeps full relative accuracy near 0 and pi where ``arccos`` of the cosine
    loses half the digits.
    """
    w = np.asarray(w, dtype=np.float64)
    w_star = np.asarray(w_star, dtype=np.float64)
    nw, ns = np.linalg.norm(w), np.linalg.norm(w_star)
    if nw == 0 or ns == 0:
        raise DomainError("angle is undefined for a zero vector")
    u, us = w / nw, w_star / ns
    return float(2.0 * np.arctan2(np.linalg.norm(u - us), np.linalg.norm(u + us)))


@dataclass(frozen=True)
class TwoLayerModel:
    """Learner ``(v, w)`` and teacher ``(v_star, w_star)``; ``||w_star|| = 1``."""

    v: np.ndarray
    w: np.ndarray
    v_star: np.ndarray
    w_star: np.ndarray

    def __post_init__(self):
        v, w = _vec(self.v, "v"), _vec(self.w, "w")
        vs, ws = _vec(self.v_star, "v_star"), _vec(self.w_star, "w_star")
        if v.shape != vs.shape:
            raise ShapeError(f"v and v_star differ in length: {v.size} vs {vs.size}")
        if w.shape != ws.shape:
            raise ShapeError(f"w and w_star differ in length: {w.size} vs {ws.size}")
        if abs(np.linalg.norm(ws) - 1.0) > 1e-10:
            raise DomainError(f"teacher w_star must have unit norm, got {np.linalg.norm(ws)}")
        if not np.any(vs):
            raise DomainError("teacher v_star must be nonzero")
        if not np.any(w):
            raise DomainError("learner w must be nonzero")
        for name, a in (("v", v), ("w", w), ("v_star", vs), ("w_star", ws)):
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def m(self):
        return self.v.size

    @property
    def n(self):
        return self.w.size

    @property
    def theta(self):
        return angle(self.w, self.w_star)

    def with_params(self, v=None, w=None):
        return replace(self, v=self.v if v is None else v, w=self.w if w is None else w)

    def at_teacher(self):
        return self.with_params(v=self.v_star, w=self.w_star)


def random_unit(rng, n):
    z = rng.normal(size=n)
    return z / np.linalg.norm(z)


def random_model(rng, m, n):
    """``v, v_star`` i.i.d. standard normal; ``w, w_star`` uniform on the unit sphere."""
    v_star = rng.normal(size=m)
    w_star = random_unit(rng, n)
    return TwoLayerModel(rng.normal(size=m), random_unit(rng, n), v_star, w_star)


def is_interior(theta):
    return ENDPOINT_TOL <= theta <= np.pi - ENDPOINT_TOL
