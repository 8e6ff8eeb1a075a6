"""Magnitude pruning: mask construction, rewinding, and the full
train -> prune -> rewind loop.

Scope semantics: "global" ranks surviving weights across every selected
group jointly; "layerwise" ranks within each tensor independently. Both
zero the floor(rate * survivors) smallest magnitudes, breaking ties by
ascending parameter id and then ascending flat index, so masks are a
pure function of the weights.

Rewinding restores weights AND momentum buffers from a snapshot; a
rewound run replays the original trajectory bit for bit until the mask
makes it diverge.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from ticketlab import checkpoint
from ticketlab.errors import ConfigError, ContractError, TrainingError
from ticketlab.masking import (
    PruneMask,
    apply_mask,
    full_mask,
    group_of,
    maskable_ids,
    satisfies_mask,
    sparsity,
)
from ticketlab.nn.network import NetworkSpec, ParameterSet, init_network
from ticketlab.nn.optim import OptimizerState
from ticketlab.tasks import ShapesDataset, TaskSpec
from ticketlab.training import TrainConfig, TrainResult, train

SCOPES = ("global", "layerwise")


def per_round_keep(p: float, rounds: int) -> float:
    """Per-round prune fraction r with (1-r)^rounds == 1-p."""
    if not 0.0 < p < 1.0:
        raise ConfigError(f"target prune fraction must be in (0,1), got {p}")
    if rounds < 1:
        raise ConfigError(f"rounds must be >= 1, got {rounds}")
    return 1.0 - (1.0 - p) ** (1.0 / rounds)


@dataclass(frozen=True)
class PruneConfig:
    p: float
    rounds: int = 1
    scope: str = "global"
    groups: tuple[str, ...] = ()
    rewind_iter: int = 0
    include_head_output: bool = False

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ConfigError(f"p must be in (0,1), got {self.p}")
        if self.rounds < 1:
            raise ConfigError(f"rounds must be >= 1, got {self.rounds}")
        if self.scope not in SCOPES:
            raise ConfigError(f"scope must be one of {SCOPES}, got {self.scope!r}")
        if not self.groups:
            raise ConfigError("groups must be non-empty")
        if self.rewind_iter < 0:
            raise ConfigError("rewind_iter must be >= 0")
        object.__setattr__(self, "groups", tuple(self.groups))


def _selected_ids(
    params: Mapping[str, np.ndarray],
    maskable: frozenset[str],
    groups: tuple[str, ...],
) -> list[str]:
    known = {group_of(pid) for pid in params}
    for g in groups:
        if g not in known:
            raise LookupError(f"unknown group {g!r}; have {sorted(known)}")
    chosen = [
        pid for pid in params if pid in maskable and group_of(pid) in groups
    ]
    if not chosen:
        raise ContractError(f"groups {groups} select no maskable parameters")
    return chosen


def magnitude_mask(
    params: ParameterSet,
    current: PruneMask,
    rate: float,
    scope: str = "global",
    groups: tuple[str, ...] | None = None,
) -> PruneMask:
    """Zero the smallest-magnitude fraction `rate` of surviving weights.

    Only weights that survive `current` participate; the result is a
    refinement of `current` (never resurrects). Requires params to
    satisfy the current mask so stored magnitudes equal effective ones.
    """
    if not 0.0 < rate < 1.0:
        raise ConfigError(f"prune rate must be in (0,1), got {rate}")
    if scope not in SCOPES:
        raise ConfigError(f"scope must be one of {SCOPES}, got {scope!r}")
    current.check_aligned(params)
    if not satisfies_mask(params, current):
        raise ContractError("params do not satisfy the current mask")
    if groups is None:
        groups = tuple(sorted({group_of(pid) for pid in current.maskable}))
    selected = _selected_ids(params, current.maskable, tuple(groups))

    bits = {pid: arr.copy() for pid, arr in current.bits.items()}
    # deterministic rank of each tensor for the tie-break
    id_rank = {pid: k for k, pid in enumerate(sorted(selected))}

    if scope == "layerwise":
        for pid in selected:
            alive = np.flatnonzero(bits[pid].reshape(-1))
            if alive.size == 0:
                raise ContractError(f"no surviving elements in {pid!r}")
            kill = int(np.floor(rate * alive.size))
            if kill == 0:
                continue
            mags = np.abs(params[pid].reshape(-1)[alive])
            order = np.lexsort((alive, mags))
            doomed = alive[order[:kill]]
            flat = bits[pid].reshape(-1)
            flat[doomed] = False
        return PruneMask(bits, current.maskable)

    mags_all, ranks_all, idx_all, owner = [], [], [], []
    for pid in selected:
        alive = np.flatnonzero(bits[pid].reshape(-1))
        if alive.size:
            mags_all.append(np.abs(params[pid].reshape(-1)[alive]).astype(np.float64))
            ranks_all.append(np.full(alive.size, id_rank[pid], dtype=np.int64))
            idx_all.append(alive)
            owner.append(pid)
    survivors = int(sum(m.size for m in mags_all))
    if survivors == 0:
        raise ContractError(f"groups {tuple(groups)} have no surviving elements")
    kill = int(np.floor(rate * survivors))
    if kill:
        mags = np.concatenate(mags_all)
        ranks = np.concatenate(ranks_all)
        idxs = np.concatenate(idx_all)
        order = np.lexsort((idxs, ranks, mags))
        doomed = order[:kill]
        bounds = np.cumsum([m.size for m in mags_all])
        starts = np.concatenate(([0], bounds[:-1]))
        for k, pid in enumerate(owner):
            sel = doomed[(doomed >= starts[k]) & (doomed < bounds[k])]
            if sel.size:
                flat = bits[pid].reshape(-1)
                flat[idxs[sel]] = False
    return PruneMask(bits, current.maskable)


@dataclass
class CheckpointStore:
    """Bit-exact (weights, momentum) snapshots keyed by iteration."""

    snapshots: dict[int, tuple[ParameterSet, OptimizerState]] = field(default_factory=dict)

    def capture(self, iteration: int, params: ParameterSet, opt: OptimizerState):
        self.snapshots[int(iteration)] = (params.copy(), opt.copy())

    def rewind(self, iteration: int) -> tuple[ParameterSet, OptimizerState]:
        if iteration not in self.snapshots:
            raise LookupError(
                f"no snapshot at iteration {iteration}; have {sorted(self.snapshots)}"
            )
        params, opt = self.snapshots[iteration]
        return params.copy(), opt.copy()

    def __contains__(self, iteration: int) -> bool:
        return iteration in self.snapshots


@dataclass(frozen=True)
class TicketProvenance:
    task: str
    p: float
    rounds: int
    scope: str
    groups: tuple[str, ...]
    rewind_iter: int
    seed: int
    creation_iteration: int


@dataclass
class Ticket:
    """A mask plus the rewind-point state that trains in isolation.

    rewind_weights already satisfy the mask; momentum carries the
    snapshot's buffers (zeroed at masked positions) so retraining
    replays the source trajectory exactly in the all-ones-mask limit.
    """

    mask: PruneMask
    rewind_weights: ParameterSet
    momentum: OptimizerState
    provenance: TicketProvenance

    def __post_init__(self):
        self.mask.check_aligned(self.rewind_weights)
        if not satisfies_mask(self.rewind_weights, self.mask):
            raise ContractError("ticket rewind weights do not satisfy the mask")

    def sparsity(self):
        return sparsity(self.mask)


def masked_state(
    store: CheckpointStore, j: int, mask: PruneMask
) -> tuple[ParameterSet, OptimizerState]:
    """Checkpoint j with the mask applied to weights and momentum alike."""
    params, opt = store.rewind(j)
    apply_mask(params, mask)
    for pid, bits in mask.bits.items():
        if not bits.all():
            buf = opt.buffers[pid]
            buf[...] = np.where(bits, buf, np.float32(0.0))
    return params, opt


def imp(
    net: NetworkSpec,
    task: TaskSpec,
    dataset: ShapesDataset,
    tconfig: TrainConfig,
    pconfig: PruneConfig,
    seed: int,
    store: CheckpointStore | None = None,
) -> tuple[Ticket, CheckpointStore]:
    """Iterative magnitude pruning.

    Round 0 trains the dense net from a fresh init, capturing the rewind
    snapshot (and iteration 0). Each of the `rounds` pruning rounds then
    prunes the per-round fraction of survivors, rewinds to the snapshot
    under the refined mask, and (except after the final prune) retrains
    the masked net over iterations rewind_iter..iterations-1.

    Returns the ticket plus the checkpoint store for reuse.
    """
    j = pconfig.rewind_iter
    n = tconfig.iterations
    if j > n:
        raise ConfigError(f"rewind_iter {j} exceeds training iterations {n}")
    rate = per_round_keep(pconfig.p, pconfig.rounds)
    mask = full_mask(net, include_head_output=pconfig.include_head_output)

    if store is None:
        params = init_network(net, seed)
        store = CheckpointStore()
        opt0 = OptimizerState.for_params(
            params, momentum=tconfig.momentum, weight_decay=tconfig.weight_decay
        )
        store.capture(0, params, opt0)
        try:
            res = train(
                net, params, task, dataset, tconfig, seed,
                opt=opt0, capture_at=(j, n),
            )
        except TrainingError as e:
            raise TrainingError(f"round 0: {e}", round_index=0) from e
        store.capture(j, *res.captures[j])
        store.capture(n, *res.captures[n])
    else:
        for needed in (0, j, n):
            if needed not in store:
                raise LookupError(f"provided store lacks a snapshot at iteration {needed}")

    trained, _ = store.rewind(n)  # post-round-0 weights, used for the first ranking
    for r in range(1, pconfig.rounds + 1):
        mask = magnitude_mask(trained, mask, rate, pconfig.scope, pconfig.groups)
        if r == pconfig.rounds:
            break
        params, opt = masked_state(store, j, mask)
        try:
            roundres = train(
                net, params, task, dataset, tconfig, seed,
                opt=opt, mask=mask, start_iteration=j,
            )
        except TrainingError as e:
            raise TrainingError(f"round {r}: {e}", round_index=r) from e
        trained = roundres.params

    rewound, opt = masked_state(store, j, mask)
    ticket = Ticket(
        mask=mask,
        rewind_weights=rewound,
        momentum=opt,
        provenance=TicketProvenance(
            task=task.name,
            p=pconfig.p,
            rounds=pconfig.rounds,
            scope=pconfig.scope,
            groups=pconfig.groups,
            rewind_iter=j,
            seed=seed,
            creation_iteration=tconfig.iterations,
        ),
    )
    return ticket, store


def train_ticket(
    net: NetworkSpec,
    ticket: Ticket,
    task: TaskSpec,
    dataset: ShapesDataset,
    tconfig: TrainConfig,
    seed: int,
) -> TrainResult:
    """Masked training from the ticket's rewind point to the end.

    Replays iterations rewind_iter..iterations-1 with the ticket's
    momentum, so an all-ones-mask ticket reproduces the dense run
    bitwise from its rewind point on.
    """
    j = ticket.provenance.rewind_iter
    params = ticket.rewind_weights.copy()
    opt = ticket.momentum.copy()
    return train(
        net, params, task, dataset, tconfig, seed,
        opt=opt, mask=ticket.mask, start_iteration=j,
    )


# ---------------------------------------------------------------------------
# ticket persistence


def save_ticket(ticket: Ticket, path: str | Path) -> Path:
    """Write mask + rewind weights + momentum with a provenance sidecar."""
    path = Path(path)
    tensors: dict[str, np.ndarray] = dict(ticket.rewind_weights.items())
    tensors.update(
        {f"momentum/{pid}": buf for pid, buf in ticket.momentum.buffers.items()}
    )
    meta = {
        "provenance": asdict(ticket.provenance),
        "momentum_constant": ticket.momentum.momentum,
        "weight_decay": ticket.momentum.weight_decay,
    }
    checkpoint.save_with_sidecar(tensors, path, meta, mask=ticket.mask)
    return path


def load_ticket(path: str | Path) -> Ticket:
    path = Path(path)
    loaded = checkpoint.load(path)
    meta = checkpoint.load_sidecar(path)
    if loaded.mask is None:
        raise ContractError(f"{path} holds no mask section; not a ticket")
    weights = {
        pid: arr for pid, arr in loaded.tensors.items() if not pid.startswith("momentum/")
    }
    buffers = {
        pid[len("momentum/"):]: arr
        for pid, arr in loaded.tensors.items()
        if pid.startswith("momentum/")
    }
    prov = TicketProvenance(**{
        **meta["provenance"],
        "groups": tuple(meta["provenance"]["groups"]),
    })
    mask = PruneMask(
        {pid: loaded.mask.bits[pid] for pid in weights},
        loaded.mask.maskable,
    )
    return Ticket(
        mask=mask,
        rewind_weights=ParameterSet(weights),
        momentum=OptimizerState(
            momentum=float(meta["momentum_constant"]),
            weight_decay=float(meta["weight_decay"]),
            buffers=buffers,
        ),
        provenance=prov,
    )
