"""Deterministic minibatch SGD training.

The batch for iteration t is drawn from a generator seeded by
(seed, batch stream tag, t) alone, so the data order for any iteration
is independent of training history. Restoring a parameter/momentum
snapshot taken after j iterations and rerunning iterations j..N-1
therefore replays the original trajectory bit for bit.

Parameters and optimizer state are updated in place; callers that need
the starting point afterwards must copy first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ticketlab.errors import ConfigError, ContractError, NumericsError, TrainingError
from ticketlab.masking import PruneMask, masked_train_step, satisfies_mask
from ticketlab.nn.losses import LOSSES
from ticketlab.nn.network import NetworkSpec, ParameterSet, backward, forward
from ticketlab.nn.optim import LrSchedule, OptimizerState, lr_at, sgd_step
from ticketlab.tasks import ShapesDataset, TaskSpec, evaluate, task_targets

_BATCH_STREAM = 1


@dataclass(frozen=True)
class TrainConfig:
    iterations: int
    batch_size: int
    schedule: LrSchedule
    momentum: float = 0.9
    weight_decay: float = 0.0
    eval_interval: int = 0
    eval_batch_size: int = 256

    def __post_init__(self):
        if self.iterations < 0:
            raise ConfigError(f"iterations must be >= 0, got {self.iterations}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0.0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.eval_interval < 0:
            raise ConfigError("eval_interval must be >= 0")


def batch_indices(seed: int, iteration: int, n: int, batch_size: int) -> np.ndarray:
    """Sample indices (with replacement) for one iteration's batch."""
    rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence((seed, _BATCH_STREAM, iteration)))
    )
    return rng.integers(0, n, size=batch_size)


@dataclass(frozen=True)
class EvalPoint:
    iteration: int  # iterations completed when measured
    value: float
    loss: float


@dataclass
class TrainResult:
    params: ParameterSet
    opt: OptimizerState
    losses: list[float]  # batch loss per iteration, index 0 <-> start_iteration
    evals: list[EvalPoint]
    captures: dict[int, tuple[ParameterSet, OptimizerState]] = field(default_factory=dict)
    start_iteration: int = 0
    end_iteration: int = 0


def train(
    net: NetworkSpec,
    params: ParameterSet,
    task: TaskSpec,
    dataset: ShapesDataset,
    config: TrainConfig,
    seed: int,
    *,
    opt: OptimizerState | None = None,
    mask: PruneMask | None = None,
    start_iteration: int = 0,
    capture_at: tuple[int, ...] = (),
    probe=None,
) -> TrainResult:
    """Run iterations start_iteration..config.iterations-1 in place.

    capture_at lists iteration counts at which to snapshot (deep-copy)
    the parameter and momentum state; a capture at j is the state after
    exactly j completed iterations, so j == start_iteration snapshots
    the input and j == config.iterations snapshots the result.

    probe, when given, is called as probe(iterations_done, params, opt)
    after every update; it must not mutate its arguments.

    Masked runs require params to satisfy the mask on entry and keep
    dropped weights and their momentum at exact zero throughout.

    Divergence (non-finite loss or activations) raises TrainingError.
    """
    if not 0 <= start_iteration <= config.iterations:
        raise ContractError(
            f"start_iteration {start_iteration} outside [0, {config.iterations}]"
        )
    captures_wanted = sorted(set(int(j) for j in capture_at))
    for j in captures_wanted:
        if not start_iteration <= j <= config.iterations:
            raise ContractError(
                f"capture point {j} outside [{start_iteration}, {config.iterations}]"
            )
    if opt is None:
        opt = OptimizerState.for_params(
            params, momentum=config.momentum, weight_decay=config.weight_decay
        )
    elif (opt.momentum, opt.weight_decay) != (config.momentum, config.weight_decay):
        raise ContractError(
            "optimizer constants disagree with the training config: "
            f"({opt.momentum}, {opt.weight_decay}) vs "
            f"({config.momentum}, {config.weight_decay})"
        )
    if mask is not None and not satisfies_mask(params, mask):
        raise ContractError("params do not satisfy the mask at the start of training")

    loss_fn = LOSSES[task.loss]
    split = dataset.train
    targets_all = task_targets(task, split)
    result = TrainResult(
        params=params,
        opt=opt,
        losses=[],
        evals=[],
        start_iteration=start_iteration,
        end_iteration=config.iterations,
    )

    def snapshot(j: int):
        result.captures[j] = (params.copy(), opt.copy())

    for t in range(start_iteration, config.iterations):
        if captures_wanted and captures_wanted[0] == t:
            snapshot(t)
            captures_wanted.pop(0)
        idx = batch_indices(seed, t, split.n, config.batch_size)
        xb = split.images[idx]
        yb = targets_all[idx]
        try:
            out, cache = forward(net, params, xb, task.head)
            loss, dout = loss_fn(out, yb)
        except NumericsError as e:
            raise TrainingError(f"training diverged at iteration {t}: {e}") from e
        if not math.isfinite(loss):
            raise TrainingError(f"non-finite loss {loss} at iteration {t}")
        grads = backward(cache, dout)
        lr = lr_at(config.schedule, t)
        if mask is None:
            sgd_step(params, grads, opt, lr)
        else:
            masked_train_step(params, grads, opt, lr, mask)
        result.losses.append(float(loss))
        done = t + 1
        if probe is not None:
            probe(done, params, opt)
        if config.eval_interval and (
            done % config.eval_interval == 0 or done == config.iterations
        ):
            ev = evaluate(
                net, params, task, dataset.val, batch_size=config.eval_batch_size
            )
            result.evals.append(EvalPoint(iteration=done, value=ev.value, loss=ev.loss))

    if captures_wanted and captures_wanted[0] == config.iterations:
        snapshot(config.iterations)
        captures_wanted.pop(0)
    return result
