"""Carrying tickets and masks between networks that share a trunk.

Three protocols:

- ticket_transfer: copy rewind weights + mask for every mapped tensor;
  unmapped target parameters get a fresh init and an all-ones mask.
- mask_transfer: copy pretrained weights for mapped tensors and keep
  only the top (1-p) fraction of each mapped conv tensor by magnitude
  (no source retraining involved).
- cross_task_transfer: ticket_transfer restricted to the shared trunk,
  with coverage validated and the resulting sparsity reported.

Mappings are explicit id-pair lists so any shape disagreement fails
loudly instead of silently re-initializing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ticketlab.errors import ConfigError, MappingError
from ticketlab.masking import (
    PruneMask,
    SparsityReport,
    apply_mask,
    full_mask,
    group_of,
    maskable_ids,
    sparsity,
)
from ticketlab.nn.network import (
    NetworkSpec,
    ParameterSet,
    init_network,
    layer_plan,
    param_ids,
)
from ticketlab.nn.optim import OptimizerState
from ticketlab.pruning import Ticket, magnitude_mask


@dataclass(frozen=True)
class GroupMapping:
    """Ordered (source id -> target id) pairs; a partial injection."""

    pairs: tuple[tuple[str, str], ...]

    def __post_init__(self):
        srcs = [s for s, _ in self.pairs]
        dsts = [d for _, d in self.pairs]
        if len(set(srcs)) != len(srcs):
            raise MappingError("mapping lists a source id twice")
        if len(set(dsts)) != len(dsts):
            raise MappingError("mapping lists a target id twice (not injective)")

    @property
    def sources(self) -> tuple[str, ...]:
        return tuple(s for s, _ in self.pairs)

    @property
    def targets(self) -> tuple[str, ...]:
        return tuple(d for _, d in self.pairs)

    def to_json(self) -> str:
        return json.dumps([f"{s}->{d}" for s, d in self.pairs], indent=0)

    @classmethod
    def from_json(cls, text: str) -> "GroupMapping":
        doc = json.loads(text)
        if not isinstance(doc, list):
            raise MappingError("mapping document must be a JSON list of 'src->dst' strings")
        pairs = []
        for item in doc:
            if not isinstance(item, str) or item.count("->") != 1:
                raise MappingError(f"bad mapping entry {item!r}; want 'src->dst'")
            s, d = item.split("->")
            pairs.append((s.strip(), d.strip()))
        return cls(tuple(pairs))

    @classmethod
    def load(cls, path: str | Path) -> "GroupMapping":
        return cls.from_json(Path(path).read_text())

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(self.to_json())
        return path


def identity_mapping(net: NetworkSpec, groups: tuple[str, ...] | None = None) -> GroupMapping:
    """id->id pairs for every parameter, optionally restricted to groups."""
    ids = param_ids(net)
    if groups is not None:
        ids = tuple(pid for pid in ids if group_of(pid) in groups)
    return GroupMapping(tuple((pid, pid) for pid in ids))


def trunk_mapping(source: NetworkSpec, target: NetworkSpec) -> GroupMapping:
    """Identity pairs over the trunk groups shared by both networks."""
    src_trunk = tuple(g.name for g in source.trunk)
    dst_trunk = tuple(g.name for g in target.trunk)
    shared = tuple(g for g in src_trunk if g in dst_trunk)
    if not shared:
        raise MappingError("networks share no trunk groups")
    ids = tuple(pid for pid in param_ids(source) if group_of(pid) in shared)
    return GroupMapping(tuple((pid, pid) for pid in ids))


def _validate(
    mapping: GroupMapping,
    source_params,
    target_net: NetworkSpec,
) -> None:
    target_ids = set(param_ids(target_net))
    for s, d in mapping.pairs:
        if s not in source_params:
            raise MappingError(f"source id {s!r} not found")
        if d not in target_ids:
            raise MappingError(f"target id {d!r} not found")


def _shape_check(src_arr: np.ndarray, dst_shape: tuple[int, ...], s: str, d: str):
    if src_arr.shape != dst_shape:
        raise MappingError(
            f"shape mismatch mapping {s!r} {src_arr.shape} -> {d!r} {dst_shape}"
        )


def ticket_transfer(
    source: Ticket,
    target_net: NetworkSpec,
    mapping: GroupMapping,
    target_seed: int,
) -> tuple[ParameterSet, PruneMask]:
    """Initialize a target network from a source ticket.

    Mapped tensors take the source's rewind weights and mask bits;
    everything else is freshly initialized (seeded) with all-ones bits.
    Fine-tuning must use masked steps so transferred zeros persist.
    """
    _validate(mapping, source.rewind_weights, target_net)
    params = init_network(target_net, target_seed)
    bits = {pid: np.ones(arr.shape, dtype=bool) for pid, arr in params.items()}
    for s, d in mapping.pairs:
        src_arr = source.rewind_weights[s]
        _shape_check(src_arr, params[d].shape, s, d)
        params[d][...] = src_arr
        bits[d] = source.mask.bits[s].copy()
    mask = PruneMask(bits, maskable_ids_for(target_net, bits))
    apply_mask(params, mask)
    return params, mask


def maskable_ids_for(net: NetworkSpec, bits: dict[str, np.ndarray]) -> frozenset[str]:
    """Default maskable set, widened by any id that arrives with zeros."""
    base = set(maskable_ids(net))
    for pid, arr in bits.items():
        if not arr.all():
            base.add(pid)
    return frozenset(base)


def mask_transfer(
    pretrained: ParameterSet,
    target_net: NetworkSpec,
    p: float,
    mapping: GroupMapping,
    target_seed: int,
    conv_only: bool = True,
) -> tuple[ParameterSet, PruneMask]:
    """Top-magnitude selection of pretrained weights, no source training.

    Each mapped conv weight tensor keeps its top (1-p) fraction by
    magnitude (ranked within the tensor); other mapped tensors are
    copied unmasked. With conv_only=False dense weight tensors are
    masked as well.
    """
    if not 0.0 < p < 1.0:
        raise ConfigError(f"p must be in (0,1), got {p}")
    _validate(mapping, pretrained, target_net)
    params = init_network(target_net, target_seed)
    for s, d in mapping.pairs:
        _shape_check(pretrained[s], params[d].shape, s, d)
        params[d][...] = pretrained[s]

    kinds = {}
    for e in layer_plan(target_net):
        if e.layer.has_params:
            kinds[e.weight_id] = e.layer.kind
    prunable = {
        d
        for _, d in mapping.pairs
        if kinds.get(d) == "conv2d" or (not conv_only and kinds.get(d) == "dense")
    }
    if not prunable:
        raise MappingError("mapping covers no prunable weight tensors")

    scratch = full_mask(target_net, include_head_output=True)
    selected_groups = tuple(sorted({group_of(d) for d in prunable}))
    # rank layerwise within exactly the mapped tensors
    ranked = magnitude_mask(
        ParameterSet({pid: params[pid] for pid in params.ids()}),
        scratch,
        p,
        scope="layerwise",
        groups=selected_groups,
    )
    bits = {pid: np.ones(arr.shape, dtype=bool) for pid, arr in params.items()}
    for pid in prunable:
        bits[pid] = ranked.bits[pid].copy()
    mask = PruneMask(bits, maskable_ids_for(target_net, bits))
    apply_mask(params, mask)
    return params, mask


def cross_task_transfer(
    source: Ticket,
    target_net: NetworkSpec,
    mapping: GroupMapping,
    target_seed: int,
) -> tuple[ParameterSet, PruneMask, SparsityReport]:
    """Ticket transfer across tasks through the shared trunk.

    The mapping must cover every trunk parameter of the target net;
    heads stay fresh and unmasked, so the target's network sparsity is
    the source trunk sparsity diluted by the trunk's parameter share.
    """
    trunk_groups = tuple(g.name for g in target_net.trunk)
    trunk_ids = {
        pid for pid in param_ids(target_net) if group_of(pid) in trunk_groups
    }
    mapped_targets = set(mapping.targets)
    missing = trunk_ids - mapped_targets
    if missing:
        raise MappingError(
            f"trunk mapping must cover all shared groups; missing {sorted(missing)}"
        )
    extra = mapped_targets - trunk_ids
    if extra:
        raise MappingError(
            f"cross-task mapping may only touch trunk parameters; got {sorted(extra)}"
        )
    params, mask = ticket_transfer(source, target_net, mapping, target_seed)
    return params, mask, sparsity(mask)


def transfer_momentum(params: ParameterSet, momentum: float, weight_decay: float) -> OptimizerState:
    """Fresh zero momentum buffers for a transferred parameter set."""
    return OptimizerState.for_params(params, momentum=momentum, weight_decay=weight_decay)
