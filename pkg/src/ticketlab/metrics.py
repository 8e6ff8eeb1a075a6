"""Sparsity projection, MAC counting, and cost reports.

MAC conventions: one multiply-accumulate per weight use. A stride-1
same-padded convolution costs outH*outW*outC*inC*k*k; a dense layer
costs in*out. Bias adds and activations are excluded. The adjusted
count scales the dense count by the surviving-weight fraction, which
treats sparse weights as skippable work.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from ticketlab.checkpoint import choose_storage, nonzero_count, predicted_size
from ticketlab.errors import ContractError
from ticketlab.masking import PruneMask
from ticketlab.nn.network import LayerSpec, NetworkSpec, head_plan

__all__ = [
    "project_sparsity",
    "mac_count",
    "choose_storage",
    "LayerCost",
    "CostReport",
    "network_cost",
]


def project_sparsity(prune_fraction: float, group_param_fraction: float) -> float:
    """Network sparsity from pruning a fraction of one parameter group.

    Pruning `prune_fraction` of the weights in a group that holds
    `group_param_fraction` of all parameters zeroes their product of
    the network. Pure arithmetic; exact element counts come from
    sparsity() reports instead.
    """
    if not 0.0 < prune_fraction < 1.0:
        raise ContractError(f"prune_fraction must be in (0, 1), got {prune_fraction}")
    if not 0.0 < group_param_fraction <= 1.0:
        raise ContractError(
            f"group_param_fraction must be in (0, 1], got {group_param_fraction}"
        )
    return prune_fraction * group_param_fraction


def mac_count(
    layer: LayerSpec,
    in_shape: tuple[int, ...],
    sparsity: float = 0.0,
) -> tuple[int, float]:
    """(dense MACs, sparsity-adjusted MACs) for one layer at `in_shape`.

    relu/maxpool/flatten cost zero MACs by convention.
    """
    if not 0.0 <= sparsity <= 1.0:
        raise ContractError(f"sparsity must be in [0, 1], got {sparsity}")
    if layer.kind == "conv2d":
        if len(in_shape) != 3:
            raise ContractError(f"conv2d needs (C, H, W) input, got {in_shape}")
        _, h, w = in_shape
        dense = h * w * layer.out_channels * layer.in_channels * layer.kernel**2
    elif layer.kind == "dense":
        dense = layer.in_features * layer.out_features
    else:
        return 0, 0.0
    adjusted = dense * (1.0 - sparsity)
    return dense, adjusted


@dataclass(frozen=True)
class LayerCost:
    param_id: str
    kind: str
    dense_macs: int
    adjusted_macs: float
    weight_sparsity: float


@dataclass(frozen=True)
class CostReport:
    """Per-layer compute plus storage footprint for one head's path."""

    head: str
    layers: tuple[LayerCost, ...]
    total_dense_macs: int
    total_adjusted_macs: float
    checkpoint_bytes: int

    def rows(self) -> list[dict]:
        out = [
            {
                "param_id": c.param_id,
                "kind": c.kind,
                "dense_macs": c.dense_macs,
                "adjusted_macs": c.adjusted_macs,
                "weight_sparsity": c.weight_sparsity,
            }
            for c in self.layers
        ]
        out.append(
            {
                "param_id": "(total)",
                "kind": "",
                "dense_macs": self.total_dense_macs,
                "adjusted_macs": self.total_adjusted_macs,
                "weight_sparsity": "",
            }
        )
        return out


def network_cost(
    net: NetworkSpec,
    head: str,
    params: Mapping[str, np.ndarray],
    mask: PruneMask | None = None,
) -> CostReport:
    """MACs along one head's executed path and the storage bytes of the
    full parameter set under the dense/sparse policy.

    Layer sparsity comes from the mask when given, otherwise from the
    actual zero bit patterns in the weights.
    """
    costs = []
    for e in head_plan(net, head):
        if not e.layer.has_params:
            continue
        w = params[e.weight_id]
        if mask is not None:
            bits = mask.bits[e.weight_id]
            s = float((bits.size - bits.sum()) / bits.size)
        else:
            s = float((w.size - nonzero_count(w)) / w.size)
        d, a = mac_count(e.layer, e.in_shape, s)
        costs.append(LayerCost(e.weight_id, e.layer.kind, d, a, s))
    return CostReport(
        head=head,
        layers=tuple(costs),
        total_dense_macs=sum(c.dense_macs for c in costs),
        total_adjusted_macs=float(sum(c.adjusted_macs for c in costs)),
        checkpoint_bytes=predicted_size(params, mask),
    )
