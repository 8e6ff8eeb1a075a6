"""Early mask stabilization: probe candidate masks during training and
detect when consecutive probes agree by IoU.

The run always trains to completion; stopping "early" is an accounting
outcome (stop_iteration marks where the stability rule first fired) so
the report can also score every candidate against the end-of-training
mask. Probes never perturb the training trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from ticketlab.errors import AlignmentError, ConfigError
from ticketlab.masking import PruneMask, full_mask
from ticketlab.nn.network import NetworkSpec, ParameterSet, init_network
from ticketlab.nn.optim import OptimizerState
from ticketlab.pruning import (
    CheckpointStore,
    Ticket,
    TicketProvenance,
    masked_state,
    magnitude_mask,
)
from ticketlab.tasks import ShapesDataset, TaskSpec
from ticketlab.training import TrainConfig, train


def mask_iou(m1: PruneMask, m2: PruneMask) -> float:
    """Zero-set intersection over union, on maskable ids only.

    1.0 when both masks drop nothing (empty sets are identical).
    """
    misaligned = AlignmentError("masks are not aligned (ids/shapes/maskable sets differ)")
    if m1.maskable != m2.maskable or set(m1.bits) != set(m2.bits):
        raise misaligned
    inter = union = 0
    for pid in sorted(m1.maskable):
        a = ~m1.bits[pid]
        b = ~m2.bits[pid]
        if a.shape != b.shape:
            raise misaligned
        inter += int((a & b).sum())
        union += int((a | b).sum())
    if union == 0:
        return 1.0
    return inter / union


@dataclass(frozen=True)
class EarlyBirdConfig:
    """Stopping rule: IoU of consecutive probe masks >= iou_threshold
    for stable_window consecutive probe pairs."""

    p: float
    probe_interval: int  # iterations between candidate masks; 0 disables probing
    iou_threshold: float = 0.95
    stable_window: int = 3
    scope: str = "global"
    groups: tuple[str, ...] = ()

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ConfigError(f"p must be in (0,1), got {self.p}")
        if self.probe_interval < 0:
            raise ConfigError("probe_interval must be >= 0")
        if not 0.0 < self.iou_threshold <= 1.0:
            raise ConfigError(f"iou_threshold must be in (0,1], got {self.iou_threshold}")
        if self.stable_window < 1:
            raise ConfigError("stable_window must be >= 1")
        if not self.groups:
            raise ConfigError("groups must be non-empty")
        object.__setattr__(self, "groups", tuple(self.groups))


def probe_mask(
    params: ParameterSet,
    net: NetworkSpec,
    p: float,
    scope: str = "global",
    groups: tuple[str, ...] | None = None,
) -> PruneMask:
    """One-shot magnitude mask of the current weights, non-destructively."""
    snapshot = params.copy()
    return magnitude_mask(snapshot, full_mask(net), p, scope, groups)


@dataclass(frozen=True)
class ProbeRow:
    iteration: int
    iou_prev: float  # vs previous candidate; nan for the first probe
    iou_final: float  # vs end-of-training candidate, filled post hoc


@dataclass(frozen=True)
class MaskIoUReport:
    history: tuple[ProbeRow, ...]
    stop_iteration: int
    stopped_early: bool

    def csv_rows(self) -> list[tuple[int, float, float]]:
        return [(r.iteration, r.iou_prev, r.iou_final) for r in self.history]


def early_bird_run(
    net: NetworkSpec,
    task: TaskSpec,
    dataset: ShapesDataset,
    tconfig: TrainConfig,
    eb: EarlyBirdConfig,
    seed: int,
    rewind_iter: int = 0,
) -> tuple[Ticket, MaskIoUReport, int]:
    """Train once while probing; return the stabilized ticket.

    The ticket's mask is the candidate at the first iteration where
    stable_window consecutive probe-pair IoUs reached the threshold (or
    the end-of-training candidate when the rule never fires / probing is
    disabled). Rewind weights come from the snapshot at rewind_iter.
    """
    n = tconfig.iterations
    candidates: list[tuple[int, PruneMask]] = []

    def probe(done: int, params: ParameterSet, opt: OptimizerState):
        if eb.probe_interval and done % eb.probe_interval == 0 and done < n:
            candidates.append(
                (done, probe_mask(params, net, eb.p, eb.scope, eb.groups))
            )

    params = init_network(net, seed)
    store = CheckpointStore()
    opt0 = OptimizerState.for_params(
        params, momentum=tconfig.momentum, weight_decay=tconfig.weight_decay
    )
    store.capture(0, params, opt0)
    res = train(
        net, params, task, dataset, tconfig, seed,
        opt=opt0, capture_at=(rewind_iter,), probe=probe,
    )
    store.capture(rewind_iter, *res.captures[rewind_iter])
    candidates.append((n, probe_mask(res.params, net, eb.p, eb.scope, eb.groups)))

    ious = [math.nan]
    for (_, prev), (_, cur) in zip(candidates, candidates[1:]):
        ious.append(mask_iou(prev, cur))

    stop_index = len(candidates) - 1
    stopped_early = False
    run = 0
    for i in range(1, len(candidates)):
        run = run + 1 if ious[i] >= eb.iou_threshold else 0
        if run >= eb.stable_window and candidates[i][0] < n:
            stop_index = i
            stopped_early = True
            break

    final_mask = candidates[-1][1]
    history = tuple(
        ProbeRow(
            iteration=it,
            iou_prev=ious[i],
            iou_final=mask_iou(m, final_mask),
        )
        for i, (it, m) in enumerate(candidates)
    )
    stop_iteration = candidates[stop_index][0]
    mask = candidates[stop_index][1]

    rewound, opt = masked_state(store, rewind_iter, mask)
    ticket = Ticket(
        mask=mask,
        rewind_weights=rewound,
        momentum=opt,
        provenance=TicketProvenance(
            task=task.name,
            p=eb.p,
            rounds=1,
            scope=eb.scope,
            groups=eb.groups,
            rewind_iter=rewind_iter,
            seed=seed,
            creation_iteration=stop_iteration,
        ),
    )
    report = MaskIoUReport(
        history=history, stop_iteration=stop_iteration, stopped_early=stopped_early
    )
    return ticket, report, stop_iteration
