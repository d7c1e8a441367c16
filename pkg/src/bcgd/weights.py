"""Projection of float weights onto the scaled integer set ``{delta * q}``.

``b_w = 1`` uses sign levels ``{-1, +1}``; ``b_w >= 2`` uses the symmetric
set ``{0, +-1, ..., +-(2**(b_w-1) - 1)}``. Binarization and ternarization are
solved exactly; wider bit-widths get a single Lloyd (assignment, centroid)
iteration from a max-norm seeded scale.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateInputError, ShapeError


def max_level(bits):
    """Largest integer magnitude allowed at ``bits`` (1 for binary and ternary)."""
    _check_bits(bits)
    return 1 if bits == 1 else 2 ** (bits - 1) - 1


def _check_bits(bits):
    if isinstance(bits, bool) or int(bits) != bits or bits < 1:
        raise ValueError(f"weight bit-width must be a positive integer, got {bits!r}")


def _as_vector(w_f):
    w = np.asarray(w_f, dtype=np.float64)
    if w.ndim != 1:
        w = w.reshape(-1)
    if w.size == 0:
        raise ShapeError("cannot quantize an empty weight vector")
    if not np.all(np.isfinite(w)):
        raise DegenerateInputError("weight vector contains non-finite entries")
    if not np.any(w):
        raise DegenerateInputError("weight vector is all zeros; the scaling factor would vanish")
    return w


@dataclass(frozen=True)
class QuantizedWeights:
    delta: float
    q: np.ndarray
    bits: int

    def __post_init__(self):
        q = np.asarray(self.q, dtype=np.int64)
        object.__setattr__(self, "q", q)
        if not self.delta > 0:
            raise DegenerateInputError(f"scaling factor must be positive, got {self.delta!r}")
        top = max_level(self.bits)
        if self.bits == 1:
            ok = np.all(np.abs(q) == 1)
        else:
            ok = np.all(np.abs(q) <= top)
        if not ok:
            raise ValueError(f"integer levels outside the {self.bits}-bit set")

    def dequantize(self):
        return self.delta * self.q.astype(np.float64)

    def objective(self, w_f):
        """Squared projection error ``||delta * q - w_f||**2``."""
        r = self.dequantize() - np.asarray(w_f, dtype=np.float64).reshape(-1)
        return float(r @ r)

    def __len__(self):
        return self.q.size

    def __eq__(self, other):
        if not isinstance(other, QuantizedWeights):
            return NotImplemented
        return self.bits == other.bits and self.delta == other.delta and np.array_equal(self.q, other.q)

    __hash__ = None


def binarize(w_f):
    """Exact binary projection: ``q = sign(w_f)`` with sign(0) = +1, delta = mean |w_f|."""
    w = _as_vector(w_f)
    q = np.where(w >= 0, 1, -1)
    delta = float(np.abs(w).sum() / w.size)
    return QuantizedWeights(delta, q, 1)


def ternarize(w_f):
    """Exact ternary projection in O(M log M).

    For a support of the j largest magnitudes the optimal scale is their mean
    and the objective drops by ``(sum of those magnitudes)**2 / j``; the best
    prefix length maximizes that drop (first maximizer on ties).
    """
    w = _as_vector(w_f)
    mag = np.abs(w)
    order = np.argsort(-mag, kind="stable")
    csum = np.cumsum(mag[order])
    j = np.arange(1, w.size + 1)
    best = int(np.argmax(csum**2 / j))
    support = order[: best + 1]
    q = np.zeros(w.size, dtype=np.int64)
    q[support] = np.where(w[support] >= 0, 1, -1)
    return QuantizedWeights(float(csum[best] / (best + 1)), q, 2)


def lloyd_init_delta(w_f, bits):
    """Seed scale ``2 / (2**bits - 1) * ||w_f||_inf``."""
    return 2.0 / (2**bits - 1) * float(np.max(np.abs(w_f)))


def quantize_lloyd(w_f, bits):
    """One assignment step then one centroid step from the max-norm seeded scale."""
    _check_bits(bits)
    if bits < 2:
        raise ValueError("quantize_lloyd needs bits >= 2; use binarize for 1 bit")
    w = _as_vector(w_f)
    delta0 = lloyd_init_delta(w, bits)
    top = max_level(bits)
    x = np.abs(w) / delta0
    # nearest level, exact halves go toward zero
    mag = np.minimum(np.ceil(x - 0.5), top)
    q = (np.sign(w) * mag).astype(np.int64)
    qq = float(q @ q)
    if qq == 0:
        return QuantizedWeights(delta0, q, bits)
    delta = float(q @ w) / qq
    return QuantizedWeights(delta, q, bits)


def project(w_f, bits):
    """Dispatch to the projection for ``bits``: 1 binary, 2 ternary, else Lloyd."""
    _check_bits(bits)
    if bits == 1:
        return binarize(w_f)
    if bits == 2:
        return ternarize(w_f)
    return quantize_lloyd(w_f, bits)


def project_layers(layers, bits, scheme="layer"):
    """Project a list of weight arrays.

    ``scheme="layer"`` gives each array its own scale. ``scheme="network"``
    projects the concatenation so every array shares one scale. Returns one
    ``QuantizedWeights`` per input array, holding that array's slice of ``q``.
    """
    arrays = [np.asarray(a, dtype=np.float64) for a in layers]
    if scheme == "layer":
        return [project(a.reshape(-1), bits) for a in arrays]
    if scheme != "network":
        raise ValueError(f"scheme must be 'layer' or 'network', got {scheme!r}")
    if not arrays:
        return []
    flat = np.concatenate([a.reshape(-1) for a in arrays])
    whole = project(flat, bits)
    out, start = [], 0
    for a in arrays:
        stop = start + a.size
        out.append(QuantizedWeights(whole.delta, whole.q[start:stop], bits))
        start = stop
    return out
