"""SGD with momentum and a warmup + step-decay learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ticketlab.errors import AlignmentError, ContractError, SpecError
from ticketlab.nn.network import ParameterSet


@dataclass
class OptimizerState:
    """Momentum buffers plus the fixed momentum/weight-decay constants.

    Buffers are float32 and start at zero, one per parameter id.
    """

    momentum: float = 0.9
    weight_decay: float = 5e-4
    buffers: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: ParameterSet, momentum: float = 0.9,
                   weight_decay: float = 5e-4) -> "OptimizerState":
        if not 0.0 <= momentum < 1.0:
            raise SpecError(f"momentum must be in [0, 1), got {momentum}")
        if weight_decay < 0.0:
            raise SpecError(f"weight_decay must be >= 0, got {weight_decay}")
        return cls(
            momentum=momentum,
            weight_decay=weight_decay,
            buffers={pid: np.zeros_like(arr) for pid, arr in params.items()},
        )

    def copy(self) -> "OptimizerState":
        return OptimizerState(
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            buffers={pid: arr.copy() for pid, arr in self.buffers.items()},
        )

    def bit_equal(self, other: "OptimizerState") -> bool:
        if (self.momentum, self.weight_decay) != (other.momentum, other.weight_decay):
            return False
        if self.buffers.keys() != other.buffers.keys():
            return False
        return all(
            self.buffers[pid].tobytes() == other.buffers[pid].tobytes()
            for pid in self.buffers
        )


def sgd_step(
    params: ParameterSet,
    grads: Mapping[str, np.ndarray],
    opt: OptimizerState,
    lr: float,
) -> ParameterSet:
    """One momentum-SGD update, in place.

    v <- momentum * v + g + weight_decay * w
    w <- w - lr * v

    Only ids present in `grads` are touched: parameters of heads that
    did not run receive neither momentum updates nor weight decay.
    Returns `params` (the same, now-updated object).
    """
    if not (np.isfinite(lr) and lr >= 0.0):
        raise ContractError(f"lr must be finite and >= 0, got {lr}")
    for pid, g in grads.items():
        if pid not in params:
            raise AlignmentError(f"gradient for unknown parameter {pid!r}")
        w = params[pid]
        if g.shape != w.shape:
            raise AlignmentError(
                f"gradient shape {g.shape} != parameter shape {w.shape} at {pid!r}"
            )
        v = opt.buffers[pid]
        v *= opt.momentum
        v += g
        if opt.weight_decay:
            v += opt.weight_decay * w
        w -= lr * v
    return params


@dataclass(frozen=True)
class LrSchedule:
    """Linear warmup followed by step decay.

    For iteration t (0-based):
      t <  warmup_iters: base_lr * (t + 1) / warmup_iters
      t >= warmup_iters: base_lr * decay_factor ** (number of milestones <= t)

    A milestone takes effect at its own iteration.
    """

    base_lr: float
    warmup_iters: int = 0
    milestones: tuple[int, ...] = ()
    decay_factor: float = 0.1

    def __post_init__(self):
        if not (np.isfinite(self.base_lr) and self.base_lr > 0):
            raise SpecError(f"base_lr must be positive, got {self.base_lr}")
        if self.warmup_iters < 0:
            raise SpecError("warmup_iters must be >= 0")
        ms = tuple(int(m) for m in self.milestones)
        if any(m2 <= m1 for m1, m2 in zip(ms, ms[1:])) or any(m < 0 for m in ms):
            raise SpecError(f"milestones must be strictly increasing and >= 0: {ms}")
        if not (np.isfinite(self.decay_factor) and self.decay_factor > 0):
            raise SpecError(f"decay_factor must be positive, got {self.decay_factor}")
        object.__setattr__(self, "milestones", ms)


def lr_at(schedule: LrSchedule, iteration: int) -> float:
    """Learning rate at a 0-based iteration index."""
    if iteration < 0:
        raise ContractError(f"iteration must be >= 0, got {iteration}")
    if iteration < schedule.warmup_iters:
        return schedule.base_lr * (iteration + 1) / schedule.warmup_iters
    passed = sum(1 for m in schedule.milestones if m <= iteration)
    return schedule.base_lr * schedule.decay_factor**passed
