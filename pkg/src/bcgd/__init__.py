"""Blended coarse gradient descent for networks with quantized weights and activations."""

from .activations import ActQuantizer, Variant
from .estimator import QuantizedMLPClassifier
from .network import QuantNet
from .optim import BlendedState, bc_step, bcgd_step, pgd_step
from .weights import QuantizedWeights, binarize, project, quantize_lloyd, ternarize

__all__ = [
    "ActQuantizer",
    "BlendedState",
    "QuantNet",
    "QuantizedMLPClassifier",
    "QuantizedWeights",
    "Variant",
    "bc_step",
    "bcgd_step",
    "binarize",
    "pgd_step",
    "project",
    "quantize_lloyd",
    "ternarize",
]
