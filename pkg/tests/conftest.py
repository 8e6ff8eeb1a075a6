"""Shared fixtures: a small dataset, short training configs, toy nets."""

from __future__ import annotations

import numpy as np
import pytest

from ticketlab.bench import make_net
from ticketlab.nn.network import (
    GroupSpec,
    HeadSpec,
    NetworkSpec,
    dense,
    init_network,
)
from ticketlab.nn.optim import LrSchedule
from ticketlab.tasks import ShapesConfig, generate
from ticketlab.training import TrainConfig

TINY_CFG = ShapesConfig(
    img_size=32,
    n_train=96,
    n_val=64,
    class_freqs=(0.25, 0.25, 0.25, 0.25),
    noise_sigma=0.02,
    max_extra_shapes=2,
    grid=4,
)


@pytest.fixture(scope="session")
def tiny_ds():
    return generate(TINY_CFG, 777)


@pytest.fixture(scope="session")
def net_classify():
    return make_net("classify")


@pytest.fixture(scope="session")
def net_detect():
    return make_net("detect_grid")


def vector_net(n: int = 4) -> NetworkSpec:
    """Single dense trunk layer on an n-vector; one maskable tensor."""
    return NetworkSpec(
        input_shape=(n,),
        trunk=(GroupSpec("base", (dense(n, 1),)),),
        heads=(HeadSpec("h", (GroupSpec("out", (dense(1, 1),)),)),),
    )


def vector_params(weights):
    w = np.asarray(weights, dtype=np.float32)
    net = vector_net(w.size)
    params = init_network(net, 0)
    params["base/0/weight"][...] = w.reshape(w.size, 1)
    return net, params


def tiny_train(iterations: int = 40, **overrides) -> TrainConfig:
    defaults = dict(
        iterations=iterations,
        batch_size=16,
        schedule=LrSchedule(base_lr=0.02, warmup_iters=5,
                            milestones=(iterations * 3 // 4,),
                            decay_factor=0.1),
        momentum=0.9,
        weight_decay=1e-4,
        eval_interval=0,
    )
    defaults.update(overrides)
    return TrainConfig(**defaults)
