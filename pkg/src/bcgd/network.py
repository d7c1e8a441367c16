"""Fully connected network with quantized activations and coarse backprop.

Layer ``j`` maps ``a_{j-1}`` to ``x_j = a_{j-1} @ W_j.T + b_j``; hidden
outputs pass through ``sigma(x_j, alpha_j)``. Backprop replaces the a.e.-zero
derivative of the staircase with the quantizer's straight-through proxies,
which yields the coarse gradient. Batches are row-major (samples x features).
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .activations import ActQuantizer
from .exceptions import ShapeError, StaleCacheError


class Loss(str, Enum):
    SOFTMAX_CE = "softmax_ce"
    SQUARED = "squared"


@dataclass
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray | None = None

    @property
    def shape(self):
        return self.weight.shape


@dataclass
class CoarseGrads:
    weights: list
    biases: list
    alphas: list
    loss: float

    def all_finite(self):
        parts = [*self.weights, *(b for b in self.biases if b is not None), np.asarray([a for a in self.alphas if a is not None], dtype=float)]
        return bool(np.isfinite(self.loss) and all(np.all(np.isfinite(p)) for p in parts))


@dataclass
class ForwardCache:
    inputs: list  # a_0 .. a_{l-1}, the input of every linear layer
    preacts: list  # x_1 .. x_l
    version: int
    envelope: bool = False

    @property
    def output(self):
        return self.preacts[-1]


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class QuantNet:
    """Feedforward net; ``act_quantizers[j]`` follows ``layers[j]``.

    A ``None`` quantizer is an identity activation, which gives a plain linear
    network.
    """

    layers: list
    act_quantizers: list
    loss_kind: Loss = Loss.SOFTMAX_CE
    _version: int = field(default=0, repr=False)

    def __post_init__(self):
        if not self.layers:
            raise ShapeError("network needs at least one layer")
        self.loss_kind = Loss(self.loss_kind)
        for layer in self.layers:
            layer.weight = np.asarray(layer.weight, dtype=np.float64)
            if layer.weight.ndim != 2:
                raise ShapeError("layer weights must be 2-D (out, in)")
            if layer.bias is not None:
                layer.bias = np.asarray(layer.bias, dtype=np.float64)
                if layer.bias.shape != (layer.weight.shape[0],):
                    raise ShapeError(f"bias shape {layer.bias.shape} does not match weight {layer.weight.shape}")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.weight.shape[0] != nxt.weight.shape[1]:
                raise ShapeError(f"layer widths do not chain: {prev.weight.shape} then {nxt.weight.shape}")
        if len(self.act_quantizers) != len(self.layers) - 1:
            raise ShapeError(
                f"need {len(self.layers) - 1} activation quantizers for {len(self.layers)} layers, "
                f"got {len(self.act_quantizers)}"
            )

    @classmethod
    def mlp(cls, sizes, bits_a, alpha=1.0, variant="three", rng=None, loss_kind=Loss.SOFTMAX_CE, bias=True):
        """Random MLP with widths ``sizes``; weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
        rng = np.random.default_rng(0) if rng is None else rng
        layers = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
            b = rng.uniform(-bound, bound, size=fan_out) if bias else None
            layers.append(Layer(w, b))
        quants = [ActQuantizer(bits_a, alpha, variant) for _ in sizes[1:-1]]
        return cls(layers, quants, loss_kind)

    @property
    def sizes(self):
        return [self.layers[0].weight.shape[1]] + [layer.weight.shape[0] for layer in self.layers]

    @property
    def alphas(self):
        return [None if q is None else q.alpha for q in self.act_quantizers]

    @property
    def version(self):
        return self._version

    def touch(self):
        """Mark parameters as changed; invalidates outstanding forward caches."""
        self._version += 1

    def set_weight(self, j, weight):
        weight = np.asarray(weight, dtype=np.float64)
        if weight.shape != self.layers[j].weight.shape:
            raise ShapeError(f"layer {j}: expected {self.layers[j].weight.shape}, got {weight.shape}")
        self.layers[j].weight = weight
        self.touch()

    def set_alpha(self, j, alpha):
        self.act_quantizers[j] = self.act_quantizers[j].with_alpha(alpha)
        self.touch()

    def _activate(self, j, x, envelope):
        q = self.act_quantizers[j]
        if q is None:
            return x
        return q.envelope(x) if envelope else q.quantize(x)

    def forward(self, X, envelope=False):
        """Run the batch through the net, caching every layer input and pre-activation.

        With ``envelope=True`` each staircase is replaced by its clipped-ReLU
        envelope; backprop over that cache is then an exact gradient when the
        two-valued alpha proxy is used.
        """
        a = np.asarray(X, dtype=np.float64)
        if a.ndim != 2 or a.shape[1] != self.sizes[0]:
            raise ShapeError(f"expected a batch with {self.sizes[0]} features, got shape {a.shape}")
        inputs, preacts = [], []
        last = len(self.layers) - 1
        for j, layer in enumerate(self.layers):
            inputs.append(a)
            x = a @ layer.weight.T
            if layer.bias is not None:
                x = x + layer.bias
            preacts.append(x)
            if j < last:
                a = self._activate(j, x, envelope)
        return preacts[-1], ForwardCache(inputs, preacts, self._version, envelope)

    def loss(self, output, labels):
        """Batch-mean loss and its gradient with respect to ``output``."""
        n = output.shape[0]
        if self.loss_kind is Loss.SOFTMAX_CE:
            labels = np.asarray(labels)
            if labels.shape != (n,):
                raise ShapeError(f"expected {n} integer labels, got shape {labels.shape}")
            p = _softmax(output)
            idx = np.arange(n)
            loss = float(-np.mean(np.log(np.maximum(p[idx, labels], 1e-300))))
            grad = p
            grad[idx, labels] -= 1.0
            return loss, grad / n
        targets = np.asarray(labels, dtype=np.float64).reshape(output.shape)
        r = output - targets
        return float(0.5 * np.sum(r * r) / n), r / n

    def coarse_backward(self, cache, labels):
        """Coarse gradients of the batch-mean loss at the cached forward pass.

        Every d(sigma)/dx is the quantizer's straight-through proxy and every
        d(sigma)/d(alpha) its selected variant. The alpha gradient of a layer
        sums over that layer's units and averages over the batch.
        """
        if not isinstance(cache, ForwardCache) or cache.version != self._version:
            raise StaleCacheError("forward cache does not match the current parameters; rerun forward")
        loss, delta = self.loss(cache.output, labels)
        nl = len(self.layers)
        gw, gb = [None] * nl, [None] * nl
        galpha = [None] * (nl - 1)
        for j in range(nl - 1, -1, -1):
            layer = self.layers[j]
            gw[j] = delta.T @ cache.inputs[j]
            if layer.bias is not None:
                gb[j] = delta.sum(axis=0)
            if j == 0:
                break
            upstream = delta @ layer.weight
            q = self.act_quantizers[j - 1]
            if q is None:
                delta = upstream
                continue
            x = cache.preacts[j - 1]
            galpha[j - 1] = float(np.sum(upstream * q.grad_alpha(x)))
            delta = upstream * q.grad_x(x)
        return CoarseGrads(gw, gb, galpha, loss)

    def predict_scores(self, X):
        out, _ = self.forward(X)
        return out

    def copy(self):
        layers = [Layer(l.weight.copy(), None if l.bias is None else l.bias.copy()) for l in self.layers]
        return QuantNet(layers, list(self.act_quantizers), self.loss_kind)
