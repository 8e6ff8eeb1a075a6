"""Minimal deterministic neural-network core.

Pure-numpy layers with hand-derived backward passes, a tiny SGD+momentum
optimizer, step/warmup learning-rate schedules, and a finite-difference
gradient checker. Everything is float32 end to end and bit-reproducible
for a fixed seed.
"""

from ticketlab.nn.network import (
    GroupSpec,
    HeadSpec,
    LayerSpec,
    NetworkSpec,
    ParameterSet,
    backward,
    conv2d,
    dense,
    flatten,
    forward,
    init_network,
    maxpool2x2,
    output_shape,
    relu,
)
from ticketlab.nn.losses import LOSSES, bce_logits, cross_entropy, squared_error
from ticketlab.nn.optim import LrSchedule, OptimizerState, lr_at, sgd_step
from ticketlab.nn.gradcheck import grad_check, relu_margin

__all__ = [
    "GroupSpec",
    "HeadSpec",
    "LayerSpec",
    "NetworkSpec",
    "ParameterSet",
    "backward",
    "conv2d",
    "dense",
    "flatten",
    "forward",
    "init_network",
    "maxpool2x2",
    "output_shape",
    "relu",
    "LOSSES",
    "bce_logits",
    "cross_entropy",
    "squared_error",
    "LrSchedule",
    "OptimizerState",
    "lr_at",
    "sgd_step",
    "grad_check",
    "relu_margin",
]
