"""Blended coarse gradient descent and its BinaryConnect / PGD special cases.

One step, per quantized layer::

    g        = grad + weight_decay * w_f
    velocity = momentum * velocity + g
    w_f     <- (1 - rho) * w_f + rho * w - lr_w * velocity
    w       <- proj(w_f)

and for each activation resolution ``alpha <- max(alpha - lr_alpha * grad, floor)``
with ``lr_alpha = rate_factor * lr_w``. ``rho = 0`` is BinaryConnect and
``rho = 1`` is projected gradient descent; all three share this kernel.
"""

from dataclasses import dataclass, field

import numpy as np

from .activations import ALPHA_FLOOR
from .exceptions import DivergedError
from .weights import project, project_layers


@dataclass
class BlendedState:
    """Optimizer state for one network.

    ``quantized[j]`` is ``None`` for layers kept in float precision.
    """

    w_f: list
    quantized: list
    bits_w: int
    rho: float = 1e-5
    lr: float = 0.01
    rate_factor: float = 0.01
    momentum: float = 0.0
    weight_decay: float = 0.0
    milestones: tuple = ()
    decay: float = 0.1
    scheme: str = "layer"
    alpha_floor: float = ALPHA_FLOOR
    velocity: list = field(default_factory=list)
    bias_velocity: list = field(default_factory=list)
    epoch: int = 0
    step_count: int = 0

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")
        if not self.lr > 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        self.milestones = tuple(sorted(int(m) for m in self.milestones))
        if not self.velocity:
            self.velocity = [np.zeros_like(w) for w in self.w_f]

    @classmethod
    def from_net(cls, net, bits_w, keep_ends_float=True, **hyper):
        """Build the state from the net's current float weights and quantize the net in place."""
        n = len(net.layers)
        w_f = [layer.weight.copy() for layer in net.layers]
        float_layers = {0, n - 1} if keep_ends_float else set()
        state = cls(w_f=w_f, quantized=[None] * n, bits_w=bits_w, **hyper)
        state.quantized = state._project([j not in float_layers for j in range(n)], w_f)
        state.bias_velocity = [None if l.bias is None else np.zeros_like(l.bias) for l in net.layers]
        for j in range(n):
            net.set_weight(j, state.weight_view(j))
        return state

    def _project(self, mask, w_f):
        idx = [j for j, quantize in enumerate(mask) if quantize]
        out = [None] * len(w_f)
        projected = project_layers([w_f[j] for j in idx], self.bits_w, self.scheme)
        for j, qw in zip(idx, projected):
            out[j] = qw
        return out

    def weight_view(self, j):
        """Weights as the network uses them: dequantized, or float for kept layers."""
        qw = self.quantized[j]
        if qw is None:
            return self.w_f[j].copy()
        return qw.dequantize().reshape(self.w_f[j].shape)

    def is_quantized(self, j):
        return self.quantized[j] is not None

    @property
    def lr_w(self):
        drops = sum(1 for m in self.milestones if self.epoch >= m)
        return self.lr * self.decay**drops

    @property
    def lr_alpha(self):
        return self.rate_factor * self.lr_w

    def set_epoch(self, epoch):
        self.epoch = int(epoch)

    def quantization_gaps(self):
        """Per-layer ``||w_f - w||``."""
        return [float(np.linalg.norm(self.w_f[j] - self.weight_view(j))) for j in range(len(self.w_f))]


def blended_step(state, net, grads, rho=None):
    """Apply one update to ``state`` and ``net`` in place; ``rho`` overrides the state's."""
    rho = state.rho if rho is None else float(rho)
    if not grads.all_finite():
        raise DivergedError(f"non-finite coarse gradient at step {state.step_count}", step=state.step_count)
    eta = state.lr_w
    new_w_f = []
    for j, w_f in enumerate(state.w_f):
        g = grads.weights[j] + state.weight_decay * w_f
        v = state.momentum * state.velocity[j] + g
        state.velocity[j] = v
        w = state.weight_view(j)
        with np.errstate(over="ignore", invalid="ignore"):
            nxt = (1.0 - rho) * w_f + rho * w - eta * v
        if not np.all(np.isfinite(nxt)):
            raise DivergedError(f"float weights of layer {j} overflowed at step {state.step_count}", step=state.step_count)
        new_w_f.append(nxt)
    state.w_f = new_w_f
    mask = [state.is_quantized(j) for j in range(len(new_w_f))]
    state.quantized = state._project(mask, new_w_f)

    for j, layer in enumerate(net.layers):
        net.set_weight(j, state.weight_view(j))
        gb = grads.biases[j]
        if layer.bias is not None and gb is not None:
            vb = state.momentum * state.bias_velocity[j] + gb
            state.bias_velocity[j] = vb
            layer.bias = layer.bias - eta * vb

    eta_a = state.lr_alpha
    for j, q in enumerate(net.act_quantizers):
        ga = grads.alphas[j]
        if q is None or ga is None:
            continue
        net.set_alpha(j, max(q.alpha - eta_a * ga, state.alpha_floor))
    state.step_count += 1
    net.touch()
    return state


def bcgd_step(state, net, grads):
    return blended_step(state, net, grads)


def bc_step(state, net, grads):
    return blended_step(state, net, grads, rho=0.0)


def pgd_step(state, net, grads):
    return blended_step(state, net, grads, rho=1.0)


STEPS = {"bcgd": bcgd_step, "bc": bc_step, "pgd": pgd_step}


def blended_update(w_f, w, grad, rho, eta):
    """The bare vector update, for analysis on explicit objectives."""
    return (1.0 - rho) * w_f + rho * w - eta * grad


def run_blended(grad_fn, w_f0, bits, rho, eta, steps, f=None):
    """Iterate the blended update on a flat weight vector.

    Returns a list of ``(f(w), w, w_f)`` per iterate, starting with the
    projection of ``w_f0``. ``f`` defaults to NaN entries when omitted.
    """
    w_f = np.asarray(w_f0, dtype=np.float64).copy()
    w = project(w_f, bits).dequantize()
    trace = [(np.nan if f is None else float(f(w)), w, w_f)]
    for _ in range(steps):
        w_f = blended_update(w_f, w, grad_fn(w), rho, eta)
        w = project(w_f, bits).dequantize()
        trace.append((np.nan if f is None else float(f(w)), w, w_f))
    return trace
