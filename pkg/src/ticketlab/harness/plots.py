"""Recipe-shaped figures rendered to SVG files.

One figure per recipe, written next to the results table. Shaded bands
cover mean plus/minus three sample standard deviations.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

BAND_SIGMA = 3.0


def _stats(rows, key=lambda r: r.cell_id):
    """cell key -> (mean, std, n) of metric_value over seeds."""
    groups = defaultdict(list)
    for r in rows:
        if r.error or r.metric_value is None or math.isnan(r.metric_value):
            continue
        groups[key(r)].append(r.metric_value)
    out = {}
    for k, vals in groups.items():
        n = len(vals)
        mean = sum(vals) / n
        std = math.sqrt(sum((v - mean) ** 2 for v in vals) / (n - 1)) if n > 1 else 0.0
        out[k] = (mean, std, n)
    return out


def _band(ax, xs, means, stds, label, color=None):
    line, = ax.plot(xs, means, marker="o", label=label, color=color)
    lo = [m - BAND_SIGMA * s for m, s in zip(means, stds)]
    hi = [m + BAND_SIGMA * s for m, s in zip(means, stds)]
    ax.fill_between(xs, lo, hi, alpha=0.15, color=line.get_color())
    return line


def _metric_label(rows):
    for r in rows:
        if r.metric_name and r.metric_name not in ("stop_iteration", "val_loss_final",
                                                   "iters_to_dense_loss"):
            return r.metric_name
    return "metric"


def _sparsity_of(rows, cell):
    for r in rows:
        if r.cell_id == cell and not r.error and r.sparsity_exact is not None:
            return r.sparsity_exact
    return None


def _plot_sparsity_sweep(rows, out_dir, ax):
    stats = _stats(rows)
    cells = sorted((c for c in stats if c != "dense"),
                   key=lambda c: _sparsity_of(rows, c) or 0.0)
    xs = [_sparsity_of(rows, c) for c in cells]
    means = [stats[c][0] for c in cells]
    stds = [stats[c][1] for c in cells]
    if "dense" in stats:
        dm, dstd, _ = stats["dense"]
        ax.axhline(dm, linestyle="--", color="gray", label="dense")
        ax.axhspan(dm - dstd, dm + dstd, alpha=0.1, color="gray")
    _band(ax, xs, means, stds, "ticket")
    ax.set_xlabel("network sparsity")
    ax.set_ylabel(_metric_label(rows))
    ax.legend()


def _plot_resetting_sweep(rows, out_dir, ax):
    stats = _stats(rows)

    def rewind_of(cell):
        for r in rows:
            if r.cell_id == cell and r.rewind_iter is not None:
                return r.rewind_iter
        return 0

    cells = sorted((c for c in stats if c != "dense"), key=rewind_of)
    xs = [rewind_of(c) for c in cells]
    means = [stats[c][0] for c in cells]
    stds = [stats[c][1] for c in cells]
    if "dense" in stats:
        ax.axhline(stats["dense"][0], linestyle="--", color="gray", label="dense")
    _band(ax, xs, means, stds, "rewound ticket")
    ax.set_xlabel("rewind iteration")
    ax.set_ylabel(_metric_label(rows))
    ax.legend()


def _plot_bars(rows, out_dir, ax, xlabel):
    stats = _stats(rows)
    cells = sorted(stats)
    means = [stats[c][0] for c in cells]
    stds = [stats[c][1] for c in cells]
    ax.bar(range(len(cells)), means,
           yerr=[BAND_SIGMA * s for s in stds], capsize=3)
    ax.set_xticks(range(len(cells)))
    ax.set_xticklabels(cells, rotation=45, ha="right", fontsize=7)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(_metric_label(rows))


def _plot_rounds_sweep(rows, out_dir, ax):
    stats = _stats(rows)
    cells = sorted(stats, key=lambda c: int(c.lstrip("T")))
    xs = [int(c.lstrip("T")) for c in cells]
    means = [stats[c][0] for c in cells]
    stds = [stats[c][1] for c in cells]
    _band(ax, xs, means, stds, "ticket")
    ax.set_xlabel("pruning rounds")
    ax.set_ylabel(_metric_label(rows))
    ax.set_xticks(xs)


def _plot_scope_compare(rows, out_dir, ax):
    stats = _stats(rows)
    for scope in ("global", "layerwise"):
        cells = sorted((c for c in stats if c.startswith(scope + "-p")),
                       key=lambda c: float(c.split("-p")[1]))
        if not cells:
            continue
        xs = [float(c.split("-p")[1]) for c in cells]
        means = [stats[c][0] for c in cells]
        stds = [stats[c][1] for c in cells]
        _band(ax, xs, means, stds, scope)
    ax.set_xlabel("prune fraction")
    ax.set_ylabel(_metric_label(rows))
    ax.legend()

    fracs = sorted(out_dir.glob("layer_fractions-s*.csv"))
    if fracs:
        per_layer = defaultdict(list)
        for path in fracs:
            with open(path, newline="") as fh:
                for rec in csv.DictReader(fh):
                    per_layer[rec["param_id"]].append(float(rec["pruned_fraction"]))
        ax2 = ax.figure.add_subplot(1, 2, 2)
        ids = sorted(per_layer)
        means = [sum(per_layer[i]) / len(per_layer[i]) for i in ids]
        ax2.bar(range(len(ids)), means)
        ax2.set_xticks(range(len(ids)))
        ax2.set_xticklabels(ids, rotation=60, ha="right", fontsize=6)
        ax2.set_ylabel("pruned fraction (global scope)")


def _plot_early_bird(rows, out_dir, ax):
    hist = sorted(out_dir.glob("iou_history-s*.csv"))
    for path in hist:
        xs, ys = [], []
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                v = rec["iou_prev"]
                if v and v != "nan":
                    xs.append(int(rec["iteration"]))
                    ys.append(float(v))
        ax.plot(xs, ys, alpha=0.6, linewidth=1)
    ax.set_xlabel("probe iteration")
    ax.set_ylabel("mask IoU vs previous probe")
    ax.axhline(0.95, linestyle=":", color="gray")

    stats = _stats(rows)
    ax2 = ax.figure.add_subplot(1, 2, 2)
    cells = [c for c in ("early", "final") if c in stats]
    means = [stats[c][0] for c in cells]
    stds = [stats[c][1] for c in cells]
    ax2.bar(range(len(cells)), means,
            yerr=[BAND_SIGMA * s for s in stds], capsize=3)
    ax2.set_xticks(range(len(cells)))
    ax2.set_xticklabels(cells)
    ax2.set_ylabel(_metric_label(rows))


def _plot_convergence(rows, out_dir, ax):
    curves = sorted(out_dir.glob("loss_curves-s*.csv"))
    series = defaultdict(lambda: defaultdict(list))
    for path in curves:
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                key = (rec["task"], rec["variant"])
                series[key][int(rec["iteration"])].append(float(rec["val_loss"]))
    styles = {"dense": "--", "ticket": "-"}
    for (task, variant), pts in sorted(series.items()):
        xs = sorted(pts)
        means = [sum(pts[x]) / len(pts[x]) for x in xs]
        ax.plot(xs, means, styles.get(variant, "-"), label=f"{task} {variant}",
                linewidth=1.2)
    ax.set_xlabel("iteration")
    ax.set_ylabel("validation loss")
    ax.set_yscale("log")
    ax.legend(fontsize=7)


_WIDE = {"scope_compare", "early_bird"}


def render_recipe(recipe: str, rows, out_dir: Path, svg_path: Path) -> Path:
    if recipe in _WIDE:
        fig = plt.figure(figsize=(11, 4.5))
        ax = fig.add_subplot(1, 2, 1)
    else:
        fig = plt.figure(figsize=(6.5, 4.5))
        ax = fig.add_subplot(1, 1, 1)
    try:
        if recipe == "sparsity_sweep":
            _plot_sparsity_sweep(rows, out_dir, ax)
        elif recipe == "resetting_sweep":
            _plot_resetting_sweep(rows, out_dir, ax)
        elif recipe == "module_pruning":
            _plot_bars(rows, out_dir, ax, "pruned groups")
        elif recipe == "rounds_sweep":
            _plot_rounds_sweep(rows, out_dir, ax)
        elif recipe == "scope_compare":
            _plot_scope_compare(rows, out_dir, ax)
        elif recipe == "early_bird":
            _plot_early_bird(rows, out_dir, ax)
        elif recipe in ("transfer_compare", "cross_task"):
            _plot_bars(rows, out_dir, ax, "variant")
        elif recipe == "convergence":
            _plot_convergence(rows, out_dir, ax)
        else:
            _plot_bars(rows, out_dir, ax, "cell")
        ax.set_title(recipe.replace("_", " "))
        fig.tight_layout()
        fig.savefig(svg_path, format="svg")
    finally:
        plt.close(fig)
    return svg_path
