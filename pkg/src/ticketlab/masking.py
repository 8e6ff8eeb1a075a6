"""Binary pruning masks and mask-respecting training steps.

A PruneMask holds one boolean array per parameter id (True = keep) plus
the set of maskable ids. Only weight matrices of dense/conv layers are
maskable; biases never are, and by default neither is the final
parameterized layer of each head (the task's output projection). Ids
outside the maskable set must stay all-ones for the life of the mask.

Masked positions are exact positive zeros in the parameters, and the
optimizer's momentum buffers are zeroed there after every step, so a
pruned coordinate can never drift away from zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from ticketlab.errors import AlignmentError, ContractError
from ticketlab.nn.network import NetworkSpec, ParameterSet, layer_plan, param_shape
from ticketlab.nn.optim import OptimizerState, sgd_step


def group_of(param_id: str) -> str:
    return param_id.split("/", 1)[0]


def maskable_ids(net: NetworkSpec, include_head_output: bool = False) -> frozenset[str]:
    """Weight ids eligible for pruning.

    Dense/conv weights only. Each head's last parameterized layer is
    excluded unless include_head_output is set (ablations that prune
    head groups need it).
    """
    plan = layer_plan(net)
    ids = [e.weight_id for e in plan if e.layer.has_params]
    if not include_head_output:
        last_by_head: dict[str, str] = {}
        for e in plan:
            if e.head is not None and e.layer.has_params:
                last_by_head[e.head] = e.weight_id
        ids = [pid for pid in ids if pid not in set(last_by_head.values())]
    return frozenset(ids)


class PruneMask:
    """Keep/drop bits per parameter id plus maskable metadata."""

    __slots__ = ("bits", "maskable")

    def __init__(self, bits: Mapping[str, np.ndarray], maskable: Iterable[str]):
        self.bits: dict[str, np.ndarray] = {}
        for pid, arr in bits.items():
            arr = np.asarray(arr)
            if arr.dtype != np.bool_:
                raise ContractError(f"{pid}: mask bits must be boolean, got {arr.dtype}")
            self.bits[pid] = arr
        self.maskable = frozenset(maskable)
        unknown = self.maskable - self.bits.keys()
        if unknown:
            raise AlignmentError(f"maskable ids without bit arrays: {sorted(unknown)}")
        for pid, arr in self.bits.items():
            if pid not in self.maskable and not arr.all():
                raise ContractError(f"{pid} is not maskable but has dropped bits")

    def copy(self) -> "PruneMask":
        return PruneMask({pid: a.copy() for pid, a in self.bits.items()}, self.maskable)

    def check_aligned(self, params: Mapping[str, np.ndarray]):
        if set(self.bits) != set(params.keys()):
            raise AlignmentError(
                f"mask ids {sorted(self.bits)} != parameter ids {sorted(params.keys())}"
            )
        for pid, arr in self.bits.items():
            if arr.shape != params[pid].shape:
                raise AlignmentError(
                    f"mask shape {arr.shape} != parameter shape "
                    f"{params[pid].shape} at {pid!r}"
                )

    def zeros_total(self) -> int:
        return sum(int(a.size - a.sum()) for a in self.bits.values())

    def is_refinement_of(self, other: "PruneMask") -> bool:
        """True when this mask's kept set is a subset of `other`'s."""
        if set(self.bits) != set(other.bits):
            return False
        return all(
            bool(np.all(other.bits[pid] | ~self.bits[pid]))
            for pid in self.bits
        )

    def bit_equal(self, other: "PruneMask") -> bool:
        if set(self.bits) != set(other.bits) or self.maskable != other.maskable:
            return False
        return all(np.array_equal(self.bits[pid], other.bits[pid]) for pid in self.bits)

    def __repr__(self) -> str:
        total = sum(a.size for a in self.bits.values())
        return f"PruneMask({self.zeros_total()}/{total} dropped)"


def full_mask(net: NetworkSpec, include_head_output: bool = False) -> PruneMask:
    """All-ones mask aligned with the network's parameters."""
    bits: dict[str, np.ndarray] = {}
    for e in layer_plan(net):
        if not e.layer.has_params:
            continue
        wshape, bshape = param_shape(e)
        bits[e.weight_id] = np.ones(wshape, dtype=bool)
        bits[e.bias_id] = np.ones(bshape, dtype=bool)
    return PruneMask(bits, maskable_ids(net, include_head_output))


def apply_mask(params: ParameterSet, mask: PruneMask) -> ParameterSet:
    """Zero dropped positions in place; kept positions are untouched
    bitwise. Dropped positions become exact positive zeros (an IEEE
    multiply would leak -0.0 from negative weights)."""
    mask.check_aligned(params)
    for pid, bits in mask.bits.items():
        if bits.all():
            continue
        arr = params[pid]
        arr[...] = np.where(bits, arr, np.float32(0.0))
    return params


def satisfies_mask(params: Mapping[str, np.ndarray], mask: PruneMask) -> bool:
    """True when every dropped position holds exactly 0.0."""
    for pid, bits in mask.bits.items():
        if bits.all():
            continue
        if np.any(params[pid][~bits]):
            return False
    return True


def masked_train_step(
    params: ParameterSet,
    grads: Mapping[str, np.ndarray],
    opt: OptimizerState,
    lr: float,
    mask: PruneMask,
) -> ParameterSet:
    """One SGD step that cannot resurrect pruned weights.

    Requires params to satisfy the mask on entry. After the plain step,
    dropped positions are re-zeroed and their momentum buffers cleared,
    so gradient flow through zero weights never accumulates there.
    With an all-ones mask this is bitwise identical to sgd_step.
    """
    mask.check_aligned(params)
    if not satisfies_mask(params, mask):
        raise ContractError("params do not satisfy the mask on entry to masked_train_step")
    sgd_step(params, grads, opt, lr)
    for pid, bits in mask.bits.items():
        if bits.all():
            continue
        arr = params[pid]
        arr[...] = np.where(bits, arr, np.float32(0.0))
        buf = opt.buffers[pid]
        buf[...] = np.where(bits, buf, np.float32(0.0))
    return params


@dataclass(frozen=True)
class LayerSparsity:
    param_id: str
    group: str
    total: int
    zeros: int

    @property
    def fraction(self) -> float:
        return self.zeros / self.total


@dataclass(frozen=True)
class SparsityReport:
    """Exact element counts of dropped positions, never rounded."""

    layers: tuple[LayerSparsity, ...]
    total: int
    zeros: int

    @property
    def network_sparsity(self) -> float:
        return self.zeros / self.total

    def per_group(self) -> dict[str, tuple[int, int]]:
        """group -> (zeros, total), aggregated over its tensors."""
        out: dict[str, tuple[int, int]] = {}
        for layer in self.layers:
            z, t = out.get(layer.group, (0, 0))
            out[layer.group] = (z + layer.zeros, t + layer.total)
        return out

    def group_fraction(self, group: str) -> float:
        z, t = self.per_group()[group]
        return z / t


def sparsity(mask: PruneMask, groups: Iterable[str] | None = None) -> SparsityReport:
    """Count dropped elements, optionally restricted to named groups.

    The denominator includes every element of the domain, maskable or
    not, so biases and excluded layers dilute the network sparsity
    exactly as they dilute the parameter count.
    """
    known = {group_of(pid) for pid in mask.bits}
    if groups is None:
        wanted = known
    else:
        wanted = set(groups)
        if not wanted:
            raise ContractError("empty group filter")
        missing = wanted - known
        if missing:
            raise LookupError(f"unknown groups {sorted(missing)}; have {sorted(known)}")
    layers = []
    for pid, bits in mask.bits.items():
        g = group_of(pid)
        if g not in wanted:
            continue
        layers.append(
            LayerSparsity(pid, g, int(bits.size), int(bits.size - bits.sum()))
        )
    total = sum(l.total for l in layers)
    zeros = sum(l.zeros for l in layers)
    return SparsityReport(tuple(layers), total, zeros)
