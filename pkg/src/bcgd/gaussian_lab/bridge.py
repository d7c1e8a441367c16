"""Express the two-layer Gaussian model as a ``QuantNet``.

One input ``Z`` (m x n) is flattened to a row of length ``m*n``. The first
layer is block diagonal with ``w`` repeated on each of the ``m`` blocks, the
hidden activation is the 1-bit quantized ReLU with ``alpha = 1`` (a binarized
ReLU) with the plain ReLU derivative as its proxy, and the second layer is
``v``. Under the squared loss with target ``v*^T sigma(Z w*)``, coarse backprop
gives the lab's sample gradients once the ``m`` filter blocks are summed.
"""

import numpy as np

from ..activations import ActQuantizer
from ..network import Layer, Loss, QuantNet
from .monte_carlo import binarized_relu


def as_network(model):
    m, n = model.m, model.n
    first = np.zeros((m, m * n))
    for i in range(m):
        first[i, i * n:(i + 1) * n] = model.w
    act = ActQuantizer(1, 1.0, variant="two", ste="relu")
    return QuantNet([Layer(first), Layer(model.v[None, :].copy())], [act], Loss.SQUARED)


def teacher_output(model, Z):
    return float(binarized_relu(np.asarray(Z) @ model.w_star) @ model.v_star)


def network_coarse_grad(model, Z):
    """``(dv, gw)`` from the network's coarse backprop on input ``Z``."""
    m, n = model.m, model.n
    net = as_network(model)
    _, cache = net.forward(np.asarray(Z, dtype=np.float64).reshape(1, m * n))
    grads = net.coarse_backward(cache, np.array([[teacher_output(model, Z)]]))
    dv = grads.weights[1][0]
    blocks = grads.weights[0]
    gw = sum(blocks[i, i * n:(i + 1) * n] for i in range(m))
    return dv, gw
