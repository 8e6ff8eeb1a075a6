"""Finite-difference gradient verification.

Central differences around the current parameters, compared against the
analytic backward pass. All arithmetic runs in float64 regardless of
the parameter dtype; float32 rounding would otherwise dominate the
difference quotient and make tight tolerances meaningless.

The network is piecewise linear in any single parameter because of relu
and max-pool. A central difference is only meaningful when w-eps, w and
w+eps sit inside one linear piece, so coordinates whose perturbation
flips a relu sign or reroutes a pool window are skipped and replaced by
fresh draws. Sampling is seed-deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from ticketlab.errors import ContractError
from ticketlab.nn import layers as L
from ticketlab.nn.losses import LOSSES
from ticketlab.nn.network import NetworkSpec, backward, forward, head_plan

_SAMPLE_STREAM = 0x6C


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_err: float
    num_checked: int
    num_skipped: int  # coordinates rejected for sitting across a relu/pool kink
    worst_id: str
    worst_index: int
    worst_analytic: float
    worst_numeric: float


def _loss_and_pattern(net, params64, x64, targets, head, loss_fn):
    """Loss plus a signature of every relu sign pattern and pool routing."""
    x = x64
    sig = []
    for e in head_plan(net, head):
        kind = e.layer.kind
        if kind == "dense":
            x, _ = L.dense_forward(x, params64[e.weight_id], params64[e.bias_id])
        elif kind == "conv2d":
            x, _ = L.conv2d_forward(x, params64[e.weight_id], params64[e.bias_id])
        elif kind == "relu":
            sig.append((x > 0).tobytes())
            x, _ = L.relu_forward(x)
        elif kind == "maxpool2x2":
            x, (idx, _) = L.maxpool2x2_forward(x)
            sig.append(idx.tobytes())
        else:
            x, _ = L.flatten_forward(x)
    value, _ = loss_fn(x, targets)
    return value, tuple(sig)


def grad_check(
    net: NetworkSpec,
    params: Mapping[str, np.ndarray],
    inputs: np.ndarray,
    targets: np.ndarray,
    head: str,
    loss: str = "cross_entropy",
    eps: float = 1e-3,
    num_samples: int = 200,
    seed: int = 0,
) -> GradCheckReport:
    """Compare analytic gradients with central differences.

    Checks `num_samples` coordinates drawn without replacement across
    all parameters on the executed path (every coordinate if there are
    fewer), skipping kink-crossing draws. Relative error uses
    max(|analytic|, |numeric|, 1e-8) as the denominator.
    """
    if not (np.isfinite(eps) and eps > 0):
        raise ContractError(f"eps must be positive, got {eps}")
    if num_samples < 1:
        raise ContractError("num_samples must be >= 1")
    loss_fn = LOSSES[loss]

    params64 = {pid: np.asarray(arr, dtype=np.float64) for pid, arr in params.items()}
    x64 = np.asarray(inputs, dtype=np.float64)

    out, cache = forward(net, params64, x64, head)
    _, dout = loss_fn(out, targets)
    analytic = backward(cache, dout)
    _, sig0 = _loss_and_pattern(net, params64, x64, targets, head, loss_fn)

    ids = list(analytic.keys())
    sizes = np.array([params64[pid].size for pid in ids])
    offsets = np.concatenate(([0], np.cumsum(sizes)))
    total = int(sizes.sum())

    rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence((seed, _SAMPLE_STREAM)))
    )
    order = rng.permutation(total)

    checked = 0
    skipped = 0
    worst = (-1.0, "", 0, 0.0, 0.0)
    for c in order:
        if checked >= num_samples:
            break
        slot = int(np.searchsorted(offsets, c, side="right") - 1)
        pid = ids[slot]
        idx = int(c - offsets[slot])
        flat = params64[pid].reshape(-1)
        orig = flat[idx]

        flat[idx] = orig + eps
        lp, sigp = _loss_and_pattern(net, params64, x64, targets, head, loss_fn)
        flat[idx] = orig - eps
        lm, sigm = _loss_and_pattern(net, params64, x64, targets, head, loss_fn)
        flat[idx] = orig

        if sigp != sig0 or sigm != sig0:
            skipped += 1
            continue
        checked += 1

        numeric = (lp - lm) / (2.0 * eps)
        a = float(analytic[pid].reshape(-1)[idx])
        rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        if rel > worst[0]:
            worst = (rel, pid, idx, a, numeric)

    return GradCheckReport(
        max_rel_err=worst[0],
        num_checked=checked,
        num_skipped=skipped,
        worst_id=worst[1],
        worst_index=worst[2],
        worst_analytic=worst[3],
        worst_numeric=worst[4],
    )


def relu_margin(
    net: NetworkSpec,
    params: Mapping[str, np.ndarray],
    inputs: np.ndarray,
    head: str,
) -> float:
    """Distance from the nearest consequential nondifferentiable point.

    Minimum over relu layers of min |pre-activation| and over max-pool
    windows of (top value - second value); pool windows whose max is
    <= 0 are ignored because the upstream relu gate zeroes both routes.
    Diagnostic companion to grad_check's kink skipping.
    """
    x = np.asarray(inputs, dtype=np.float64)
    margin = np.inf
    params64 = {pid: np.asarray(a, dtype=np.float64) for pid, a in params.items()}
    for e in head_plan(net, head):
        kind = e.layer.kind
        if kind == "dense":
            x, _ = L.dense_forward(x, params64[e.weight_id], params64[e.bias_id])
        elif kind == "conv2d":
            x, _ = L.conv2d_forward(x, params64[e.weight_id], params64[e.bias_id])
        elif kind == "relu":
            margin = min(margin, float(np.abs(x).min()))
            x, _ = L.relu_forward(x)
        elif kind == "maxpool2x2":
            b, c, h, w = x.shape
            win = (
                x.reshape(b, c, h // 2, 2, w // 2, 2)
                .transpose(0, 1, 2, 4, 3, 5)
                .reshape(b, c, h // 2, w // 2, 4)
            )
            top2 = np.sort(win, axis=-1)[..., -2:]
            gap = top2[..., 1] - top2[..., 0]
            live = top2[..., 1] > 0
            if live.any():
                margin = min(margin, float(gap[live].min()))
            x, _ = L.maxpool2x2_forward(x)
        else:
            x, _ = L.flatten_forward(x)
    return margin
