"""Frozen desk-scale benchmark presets.

One network per task, all sharing an identical trunk (groups "base" and
"top", four convs in the small preset, eight doubled-channel convs in
the large one) so trunk parameter ids line up one-to-one across tasks.
Each net carries a single head named after its task: a "neck" group
(flatten + hidden dense) and an "out" group (output dense, excluded
from pruning by default).

The numbers here are calibrated for laptop-core runtimes; treat them as
part of the benchmark definition and change them only together with the
expectations in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from ticketlab.errors import ConfigError
from ticketlab.nn.network import (
    GroupSpec,
    HeadSpec,
    NetworkSpec,
    conv2d,
    dense,
    flatten,
    maxpool2x2,
    relu,
)
from ticketlab.nn.optim import LrSchedule
from ticketlab.tasks import ShapesConfig, TaskSpec, get_task
from ticketlab.training import TrainConfig

SIZES = ("small", "large")

# trunk channel progressions; the large preset doubles every width and
# stacks two convs per stage
_SMALL_CHANNELS = (8, 16, 24, 32)
_LARGE_CHANNELS = (16, 32, 48, 64)

_HEAD_WIDTH = {"small": 32, "large": 64}
_OUT_FEATURES = {"classify": 4, "detect_grid": 16, "keypoint": 2}


def _trunk(size: str) -> tuple[GroupSpec, GroupSpec]:
    if size == "small":
        c1, c2, c3, c4 = _SMALL_CHANNELS
        base = GroupSpec(
            "base",
            (conv2d(3, c1, 3), relu(), maxpool2x2(),
             conv2d(c1, c2, 3), relu(), maxpool2x2()),
        )
        top = GroupSpec(
            "top",
            (conv2d(c2, c3, 3), relu(), maxpool2x2(),
             conv2d(c3, c4, 3), relu(), maxpool2x2()),
        )
        return base, top
    if size == "large":
        c1, c2, c3, c4 = _LARGE_CHANNELS
        base = GroupSpec(
            "base",
            (conv2d(3, c1, 3), relu(), conv2d(c1, c1, 3), relu(), maxpool2x2(),
             conv2d(c1, c2, 3), relu(), conv2d(c2, c2, 3), relu(), maxpool2x2()),
        )
        top = GroupSpec(
            "top",
            (conv2d(c2, c3, 3), relu(), conv2d(c3, c3, 3), relu(), maxpool2x2(),
             conv2d(c3, c4, 3), relu(), conv2d(c4, c4, 3), relu(), maxpool2x2()),
        )
        return base, top
    raise ConfigError(f"unknown size {size!r}; choose from {SIZES}")


def make_net(task_name: str, size: str = "small") -> NetworkSpec:
    """Single-task network: shared-trunk groups plus one task head."""
    task = get_task(task_name)
    base, top = _trunk(size)
    last_c = (_SMALL_CHANNELS if size == "small" else _LARGE_CHANNELS)[-1]
    hidden = _HEAD_WIDTH[size]
    flat = last_c * 2 * 2  # trunk ends at 2x2 spatial
    head = HeadSpec(
        name=task.head,
        groups=(
            GroupSpec("neck", (flatten(), dense(flat, hidden), relu())),
            GroupSpec("out", (dense(hidden, _OUT_FEATURES[task.name]),)),
        ),
    )
    return NetworkSpec(
        input_shape=(3, 32, 32),
        trunk=(base, top),
        heads=(head,),
    )


TRUNK_GROUPS = ("base", "top")
DEFAULT_PRUNE_GROUPS = ("base", "top", "neck")


@dataclass(frozen=True)
class Bench:
    """Everything one experiment run needs, minus the seed."""

    size: str
    task: TaskSpec
    net: NetworkSpec
    data: ShapesConfig
    train: TrainConfig

    @property
    def iterations(self) -> int:
        return self.train.iterations

    @property
    def milestone(self) -> int:
        return self.train.schedule.milestones[0]

    @property
    def rewind_iter(self) -> int:
        # 10% of training, past warmup
        return self.train.iterations // 10


_DATA = ShapesConfig(
    img_size=32,
    n_train=640,
    n_val=512,
    class_freqs=(0.25, 0.25, 0.25, 0.25),
    noise_sigma=0.02,
    max_extra_shapes=2,
    grid=4,
)

_TRAIN = TrainConfig(
    iterations=1000,
    batch_size=24,
    schedule=LrSchedule(base_lr=0.03, warmup_iters=50, milestones=(450,), decay_factor=0.05),
    momentum=0.9,
    weight_decay=1e-4,
    eval_interval=50,
)


def make_bench(
    task_name: str,
    size: str = "small",
    iterations: int | None = None,
    **overrides,
) -> Bench:
    """Preset bundle.

    Passing `iterations` rescales the schedule shape (5% warmup, decay
    milestone at 45%, evals every 5%); further keyword overrides patch
    the TrainConfig directly.
    """
    task = get_task(task_name)
    train = _TRAIN
    if iterations is not None:
        if iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {iterations}")
        train = replace(
            train,
            iterations=iterations,
            eval_interval=max(1, iterations // 20),
            schedule=LrSchedule(
                base_lr=train.schedule.base_lr,
                warmup_iters=max(1, iterations // 20),
                milestones=(iterations * 9 // 20,),
                decay_factor=train.schedule.decay_factor,
            ),
        )
    if overrides:
        train = replace(train, **overrides)
    return Bench(
        size=size,
        task=task,
        net=make_net(task_name, size),
        data=_DATA,
        train=train,
    )
