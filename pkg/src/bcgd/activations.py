"""Uniform activation quantization and the proxy derivatives used in backprop.

The quantized ReLU is a staircase with ``2**bits`` levels (zero included),
step ``alpha``, saturating at ``(2**bits - 1) * alpha``. Bins are closed on
the right: ``x`` in ``((k-1)*alpha, k*alpha]`` maps to level ``k``.

All kernels are elementwise and accept scalars or arrays.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .exceptions import InvalidQuantizerError

ALPHA_FLOOR = 1e-6


class Variant(str, Enum):
    """Choice of proxy for the partial derivative in ``alpha``."""

    AE = "ae"  # a.e. exact: the level index k
    THREE = "three"  # 0 / 2**(bits-1) / 2**bits - 1
    TWO = "two"  # 0 / 2**bits - 1, derivative of the clipped ReLU

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        aliases = {
            "ae": cls.AE, "a.e.": cls.AE, "exact": cls.AE,
            "three": cls.THREE, "3": cls.THREE, "3-valued": cls.THREE, "three-valued": cls.THREE,
            "two": cls.TWO, "2": cls.TWO, "2-valued": cls.TWO, "two-valued": cls.TWO, "pact": cls.TWO,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown alpha-derivative variant {value!r}; use 'ae', 'three' or 'two'") from None


@dataclass(frozen=True)
class ActQuantizer:
    """Quantized ReLU of one activation layer.

    ``ste`` picks the proxy for d(sigma)/dx: ``"clipped"`` is the derivative of
    the clipped ReLU (default); ``"relu"`` is the plain ReLU subderivative,
    used by the two-layer Gaussian analysis.
    """

    bits: int
    alpha: float
    variant: Variant = Variant.THREE
    ste: str = "clipped"

    def __post_init__(self):
        if isinstance(self.bits, bool) or int(self.bits) != self.bits or self.bits < 1:
            raise InvalidQuantizerError(f"bit-width must be a positive integer, got {self.bits!r}")
        alpha = float(self.alpha)
        if not np.isfinite(alpha) or alpha <= 0:
            raise InvalidQuantizerError(f"resolution alpha must be positive and finite, got {self.alpha!r}")
        if self.ste not in ("clipped", "relu"):
            raise InvalidQuantizerError(f"ste must be 'clipped' or 'relu', got {self.ste!r}")
        object.__setattr__(self, "bits", int(self.bits))
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "variant", Variant.parse(self.variant))

    @property
    def top_level(self):
        """Largest level index, ``2**bits - 1``."""
        return 2**self.bits - 1

    @property
    def clip_value(self):
        return self.top_level * self.alpha

    def with_alpha(self, alpha):
        return ActQuantizer(self.bits, alpha, self.variant, self.ste)

    def quantize(self, x):
        return quantize_act(x, self)

    def envelope(self, x):
        return clipped_relu(x, self)

    def grad_x(self, x):
        return dsigma_dx(x, self)

    def grad_alpha(self, x):
        return dsigma_dalpha(x, self)


def _check(q):
    if not isinstance(q, ActQuantizer):
        raise InvalidQuantizerError(f"expected an ActQuantizer, got {type(q).__name__}")
    return q


def _unwrap(a):
    return a[()] if isinstance(a, np.ndarray) and a.ndim == 0 else a


def level_index(x, q):
    """Level ``k`` in ``{0, ..., 2**bits - 1}`` selected by each entry of ``x``.

    ``ceil(x / alpha)`` can land one bin off when the division rounds, so the
    result is corrected against the products ``k * alpha`` the bin inequalities
    are written in.
    """
    _check(q)
    x = np.asarray(x, dtype=np.float64)
    a = q.alpha
    with np.errstate(over="ignore", invalid="ignore"):
        k = np.ceil(x / a)
        k = np.where(k * a < x, k + 1, k)
        k = np.where((k - 1) * a >= x, k - 1, k)
    k = np.clip(k, 0, q.top_level)
    return _unwrap(k)


def quantize_act(x, q):
    """Quantized ReLU: 0 for x <= 0, k*alpha on bin k, saturating above."""
    return _unwrap(np.asarray(level_index(x, q)) * q.alpha)


def clipped_relu(x, q):
    _check(q)
    x = np.asarray(x, dtype=np.float64)
    return _unwrap(np.clip(x, 0.0, q.clip_value))


def dsigma_dx(x, q):
    """Straight-through proxy for d(sigma)/dx."""
    _check(q)
    x = np.asarray(x, dtype=np.float64)
    if q.ste == "relu":
        mask = x > 0
    else:
        mask = (x > 0) & (x <= q.clip_value)
    return _unwrap(mask.astype(np.float64))


def dsigma_dalpha(x, q):
    """Partial derivative (or its proxy) of the quantized ReLU in ``alpha``."""
    _check(q)
    x = np.asarray(x, dtype=np.float64)
    top = float(q.top_level)
    if q.variant is Variant.AE:
        out = np.asarray(level_index(x, q), dtype=np.float64)
    elif q.variant is Variant.THREE:
        out = np.where(x <= 0, 0.0, np.where(x <= q.clip_value, float(2 ** (q.bits - 1)), top))
    else:
        out = np.where(x <= q.clip_value, 0.0, top)
    return _unwrap(np.asarray(out, dtype=np.float64))
