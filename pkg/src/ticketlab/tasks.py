"""Synthetic shapes benchmark: generator, task definitions, evaluation.

Images are 32x32 RGB in [0, 1] containing one primary shape and up to
two smaller secondary shapes from {circle, square, triangle, cross}.
The primary is drawn last and its scale range is disjoint from the
secondaries', so it strictly dominates by rendered area; generation
asserts this. Targets are computed from exact geometry masks before
pixel noise is added:

- classify:    dominant shape class (4-way)
- detect_grid: 4x4 occupancy bits over 8x8-pixel cells (union of shapes)
- keypoint:    centroid of the largest shape, normalized to [0, 1]^2

A fixed seed reproduces the dataset bit for bit. Train and val splits
come from disjoint draws of the same stream.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from ticketlab import checkpoint
from ticketlab.errors import ConfigError
from ticketlab.masking import PruneMask, apply_mask
from ticketlab.nn.losses import LOSSES
from ticketlab.nn.network import NetworkSpec, ParameterSet, forward

CLASSES = ("circle", "square", "triangle", "cross")
BUCKETS = ("small", "medium", "large")

_DATA_STREAM = 0xDA7A

# primary radii sit strictly above secondary radii so the primary's
# pixel area always wins even against occluded secondaries
_PRIMARY_RADIUS = (5.0, 7.5)
_SECONDARY_RADIUS = (2.2, 3.2)


@dataclass(frozen=True)
class ShapesConfig:
    img_size: int = 32
    n_train: int = 512
    n_val: int = 256
    class_freqs: tuple[float, float, float, float] = (0.25, 0.25, 0.25, 0.25)
    noise_sigma: float = 0.02
    max_extra_shapes: int = 2
    grid: int = 4

    def __post_init__(self):
        if self.img_size < 8 or self.img_size % self.grid:
            raise ConfigError(
                f"img_size must be >= 8 and divisible by grid, got {self.img_size}"
            )
        if self.n_train < 1 or self.n_val < 1:
            raise ConfigError("n_train and n_val must be positive")
        freqs = tuple(float(f) for f in self.class_freqs)
        if len(freqs) != len(CLASSES) or any(f < 0 for f in freqs):
            raise ConfigError(f"class_freqs must be {len(CLASSES)} nonnegative values")
        if abs(sum(freqs) - 1.0) > 1e-6:
            raise ConfigError(f"class_freqs must sum to 1, got {sum(freqs)}")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        if not 0 <= self.max_extra_shapes <= 4:
            raise ConfigError("max_extra_shapes must be in [0, 4]")
        object.__setattr__(self, "class_freqs", freqs)


def _shape_mask(kind: int, cx: float, cy: float, r: float, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    dx, dy = xx - cx, yy - cy
    if kind == 0:  # circle
        return dx * dx + dy * dy <= r * r
    if kind == 1:  # square
        h = 0.9 * r
        return (np.abs(dx) <= h) & (np.abs(dy) <= h)
    if kind == 2:  # triangle, apex up
        top, bottom = cy - r, cy + r
        inside_y = (yy >= top) & (yy <= bottom)
        halfwidth = (yy - top) / 2.0
        return inside_y & (np.abs(dx) <= halfwidth)
    if kind == 3:  # cross
        t = 0.35 * r
        horiz = (np.abs(dy) <= t) & (np.abs(dx) <= r)
        vert = (np.abs(dx) <= t) & (np.abs(dy) <= r)
        return horiz | vert
    raise ConfigError(f"unknown shape kind {kind}")


@dataclass
class Split:
    images: np.ndarray  # (N, 3, S, S) float32 in [0, 1]
    labels: np.ndarray  # (N,) int64 dominant class
    cells: np.ndarray  # (N, grid*grid) float32 occupancy bits
    centroids: np.ndarray  # (N, 2) float32 (x, y) in [0, 1]
    buckets: np.ndarray  # (N,) int64 primary size bucket

    @property
    def n(self) -> int:
        return len(self.labels)


@dataclass
class ShapesDataset:
    config: ShapesConfig
    seed: int
    train: Split
    val: Split

    def split(self, name: str) -> Split:
        if name == "train":
            return self.train
        if name == "val":
            return self.val
        raise ConfigError(f"unknown split {name!r}")


def _render_sample(rng: np.random.Generator, cfg: ShapesConfig, freqs: np.ndarray):
    s = cfg.img_size
    img = np.zeros((3, s, s), dtype=np.float64)
    occupancy = np.zeros((s, s), dtype=bool)

    label = int(rng.choice(len(CLASSES), p=freqs))
    n_extra = int(rng.integers(0, cfg.max_extra_shapes + 1))

    # secondaries first so the primary overdraws them
    secondary_masks = []
    for _ in range(n_extra):
        kind = int(rng.integers(0, len(CLASSES)))
        r = float(rng.uniform(*_SECONDARY_RADIUS))
        cx = float(rng.uniform(r, s - 1 - r))
        cy = float(rng.uniform(r, s - 1 - r))
        m = _shape_mask(kind, cx, cy, r, s)
        color = rng.uniform(0.4, 1.0, size=3)
        img[:, m] = color[:, None]
        occupancy |= m
        secondary_masks.append(m)

    r = float(rng.uniform(*_PRIMARY_RADIUS))
    cx = float(rng.uniform(r, s - 1 - r))
    cy = float(rng.uniform(r, s - 1 - r))
    primary = _shape_mask(label, cx, cy, r, s)
    color = rng.uniform(0.4, 1.0, size=3)
    img[:, primary] = color[:, None]
    occupancy |= primary

    # per-shape dominance must hold exactly: each secondary's visible
    # pixel count is bounded by its footprint outside the primary, and
    # the primary keeps its full footprint by drawing last
    primary_area = int(primary.sum())
    worst = max((int((m & ~primary).sum()) for m in secondary_masks), default=0)
    if primary_area <= 0 or worst >= primary_area:
        raise AssertionError("primary shape lost area dominance; scale ranges broken")

    cell = s // cfg.grid
    occ = occupancy.reshape(cfg.grid, cell, cfg.grid, cell)
    cells = occ.any(axis=(1, 3)).astype(np.float32).reshape(-1)

    ys, xs = np.nonzero(primary)
    centroid = np.array(
        [xs.mean() / (s - 1), ys.mean() / (s - 1)], dtype=np.float32
    )

    lo, hi = _PRIMARY_RADIUS
    edges = (lo + (hi - lo) / 3, lo + 2 * (hi - lo) / 3)
    bucket = 0 if r < edges[0] else (1 if r < edges[1] else 2)

    if cfg.noise_sigma:
        img = img + rng.normal(0.0, cfg.noise_sigma, size=img.shape)
    img = np.clip(img, 0.0, 1.0)
    return img.astype(np.float32), label, cells, centroid, bucket


def _render_split(rng: np.random.Generator, cfg: ShapesConfig, n: int) -> Split:
    images = np.empty((n, 3, cfg.img_size, cfg.img_size), dtype=np.float32)
    labels = np.empty(n, dtype=np.int64)
    cells = np.empty((n, cfg.grid * cfg.grid), dtype=np.float32)
    centroids = np.empty((n, 2), dtype=np.float32)
    buckets = np.empty(n, dtype=np.int64)
    freqs = np.asarray(cfg.class_freqs, dtype=np.float64)
    freqs = freqs / freqs.sum()
    for i in range(n):
        images[i], labels[i], cells[i], centroids[i], buckets[i] = _render_sample(
            rng, cfg, freqs
        )
    return Split(images, labels, cells, centroids, buckets)


def generate(cfg: ShapesConfig, seed: int) -> ShapesDataset:
    """Render a dataset. Same (cfg, seed) -> bit-identical arrays."""
    rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence((seed, _DATA_STREAM)))
    )
    train = _render_split(rng, cfg, cfg.n_train)
    val = _render_split(rng, cfg, cfg.n_val)
    return ShapesDataset(config=cfg, seed=seed, train=train, val=val)


# ---------------------------------------------------------------------------
# task definitions


@dataclass(frozen=True)
class TaskSpec:
    name: str
    head: str
    loss: str
    metric: str
    target_field: str
    higher_is_better: bool


TASKS: dict[str, TaskSpec] = {
    "classify": TaskSpec(
        "classify", "classify", "cross_entropy", "accuracy", "labels", True
    ),
    "detect_grid": TaskSpec(
        "detect_grid", "detect_grid", "bce_logits", "cell_f1", "cells", True
    ),
    "keypoint": TaskSpec(
        "keypoint", "keypoint", "squared_error", "centroid_error", "centroids", False
    ),
}


def task_targets(task: TaskSpec, split: Split) -> np.ndarray:
    return getattr(split, task.target_field)


def get_task(name: str) -> TaskSpec:
    if name not in TASKS:
        raise ConfigError(f"unknown task {name!r}; have {sorted(TASKS)}")
    return TASKS[name]


# ---------------------------------------------------------------------------
# evaluation


@dataclass(frozen=True)
class BreakdownRow:
    label: str
    value: float
    count: int


@dataclass(frozen=True)
class EvalResult:
    task: str
    metric_name: str
    value: float
    loss: float
    n: int
    breakdown: tuple[BreakdownRow, ...]


def _batched_outputs(net, params, images, head, batch_size):
    outs = []
    for i in range(0, len(images), batch_size):
        out, _ = forward(net, params, images[i : i + batch_size], head)
        outs.append(out)
    return np.concatenate(outs, axis=0)


def _bucket_rows(values_ok: np.ndarray, buckets: np.ndarray, as_mean_of: np.ndarray | None = None):
    rows = []
    for b, name in enumerate(BUCKETS):
        sel = buckets == b
        cnt = int(sel.sum())
        if cnt == 0:
            rows.append(BreakdownRow(f"bucket_{name}", 0.0, 0))
            continue
        src = values_ok if as_mean_of is None else as_mean_of
        rows.append(BreakdownRow(f"bucket_{name}", float(src[sel].mean()), cnt))
    return rows


def score_outputs(task: TaskSpec, outputs: np.ndarray, split: Split) -> tuple[float, tuple[BreakdownRow, ...]]:
    """Metric value plus breakdown rows for raw head outputs.

    Split out from evaluate() so predictions from any source (including
    oracle stubs) can be scored identically.
    """
    targets = task_targets(task, split)
    rows: list[BreakdownRow] = []
    if task.metric == "accuracy":
        preds = outputs.argmax(axis=1)
        correct = preds == split.labels
        # overall accuracy recomposes exactly from per-class counts
        per_class_correct = np.zeros(len(CLASSES), dtype=np.int64)
        per_class_count = np.zeros(len(CLASSES), dtype=np.int64)
        for c in range(len(CLASSES)):
            sel = split.labels == c
            per_class_count[c] = sel.sum()
            per_class_correct[c] = correct[sel].sum()
            acc_c = per_class_correct[c] / per_class_count[c] if per_class_count[c] else 0.0
            rows.append(BreakdownRow(f"class_{CLASSES[c]}", float(acc_c), int(per_class_count[c])))
        rows.extend(_bucket_rows(correct, split.buckets))
        value = float(per_class_correct.sum() / per_class_count.sum())
    elif task.metric == "cell_f1":
        preds = outputs > 0  # sigmoid(x) > 0.5  <=>  x > 0
        truth = targets > 0.5
        tp = int((preds & truth).sum())
        fp = int((preds & ~truth).sum())
        fn = int((~preds & truth).sum())
        denom = 2 * tp + fp + fn
        value = 1.0 if denom == 0 else 2 * tp / denom
        for j in range(targets.shape[1]):
            p, t = preds[:, j], truth[:, j]
            d = 2 * int((p & t).sum()) + int((p & ~t).sum()) + int((~p & t).sum())
            f1 = 1.0 if d == 0 else 2 * int((p & t).sum()) / d
            rows.append(BreakdownRow(f"cell_{j}", float(f1), len(p)))
    elif task.metric == "centroid_error":
        err = np.sqrt(((outputs - targets) ** 2).sum(axis=1))
        value = float(err.mean())
        rows.extend(_bucket_rows(err, split.buckets, as_mean_of=err))
    else:
        raise ConfigError(f"unknown metric {task.metric!r}")
    return float(value), tuple(rows)


def evaluate(
    net: NetworkSpec,
    params: ParameterSet,
    task: TaskSpec,
    split: Split,
    mask: PruneMask | None = None,
    batch_size: int = 256,
) -> EvalResult:
    """Metric, loss, and per-class / per-size breakdowns on one split.

    When a mask is given it is applied to a copy of the parameters, so
    evaluation never mutates training state.
    """
    if mask is not None:
        params = apply_mask(params.copy(), mask)
    outputs = _batched_outputs(net, params, split.images, task.head, batch_size)
    loss, _ = LOSSES[task.loss](outputs, task_targets(task, split))
    value, rows = score_outputs(task, outputs, split)
    return EvalResult(
        task=task.name,
        metric_name=task.metric,
        value=value,
        loss=float(loss),
        n=split.n,
        breakdown=rows,
    )


def better(task: TaskSpec, a: float, b: float) -> bool:
    """True when metric value `a` beats `b` for this task."""
    return a > b if task.higher_is_better else a < b


# ---------------------------------------------------------------------------
# on-disk dataset cache


def _cache_key(cfg: ShapesConfig, seed: int) -> str:
    payload = json.dumps({"config": asdict(cfg), "seed": seed}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def cache_dataset(ds: ShapesDataset, cache_dir: str | Path) -> Path:
    """Write a dataset to the binary container; returns the file path."""
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    path = cache_dir / f"shapes-{_cache_key(ds.config, ds.seed)}.ckpt"
    tensors: dict[str, np.ndarray] = {}
    for name in ("train", "val"):
        split = ds.split(name)
        tensors[f"{name}/images"] = split.images
        tensors[f"{name}/labels"] = split.labels.astype(np.float32)
        tensors[f"{name}/cells"] = split.cells
        tensors[f"{name}/centroids"] = split.centroids
        tensors[f"{name}/buckets"] = split.buckets.astype(np.float32)
    checkpoint.save_with_sidecar(
        tensors, path, {"config": asdict(ds.config), "seed": ds.seed}
    )
    return path


def load_cached(cfg: ShapesConfig, seed: int, cache_dir: str | Path) -> ShapesDataset | None:
    """Load a previously cached dataset, or None when absent."""
    path = Path(cache_dir) / f"shapes-{_cache_key(cfg, seed)}.ckpt"
    if not path.exists():
        return None
    loaded = checkpoint.load(path).tensors

    def split_of(name: str) -> Split:
        return Split(
            images=loaded[f"{name}/images"],
            labels=loaded[f"{name}/labels"].astype(np.int64),
            cells=loaded[f"{name}/cells"],
            centroids=loaded[f"{name}/centroids"],
            buckets=loaded[f"{name}/buckets"].astype(np.int64),
        )

    return ShapesDataset(config=cfg, seed=seed, train=split_of("train"), val=split_of("val"))


def dataset_for(cfg: ShapesConfig, seed: int, cache_dir: str | Path | None = None) -> ShapesDataset:
    """generate() with optional read-through caching."""
    if cache_dir is not None:
        hit = load_cached(cfg, seed, cache_dir)
        if hit is not None:
            return hit
    ds = generate(cfg, seed)
    if cache_dir is not None:
        cache_dataset(ds, cache_dir)
    return ds
