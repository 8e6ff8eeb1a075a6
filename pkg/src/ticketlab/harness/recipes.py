"""Named experiment recipes over the desk benchmark.

Each recipe maps to one ablation family: a grid of cells, executed for
every replicate seed (seed = base_seed + r, used for init and data
order alike). A failing cell produces a row with the error column
filled and never aborts the rest of the grid. Seed jobs are independent
and can run in parallel processes.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ticketlab.bench import DEFAULT_PRUNE_GROUPS, TRUNK_GROUPS, Bench, make_bench
from ticketlab.earlybird import EarlyBirdConfig, early_bird_run
from ticketlab.errors import ConfigError
from ticketlab.harness.config import CSV_COLUMNS, ExperimentConfig, output_root
from ticketlab.masking import full_mask, group_of, sparsity
from ticketlab.metrics import network_cost
from ticketlab.nn.network import NetworkSpec, init_network, layer_plan, param_shape
from ticketlab.nn.optim import OptimizerState
from ticketlab.pruning import (
    CheckpointStore,
    PruneConfig,
    Ticket,
    TicketProvenance,
    masked_state,
    imp,
    magnitude_mask,
    train_ticket,
)
from ticketlab.tasks import TASKS, dataset_for, evaluate, get_task
from ticketlab.training import train
from ticketlab.transfer import (
    mask_transfer,
    ticket_transfer,
    transfer_momentum,
    trunk_mapping,
)

HEAD_GROUPS = ("neck", "out")


@dataclass
class ResultRow:
    recipe: str
    cell_id: str
    seed: int
    task: str
    metric_name: str = ""
    metric_value: float | None = None
    p_target: float | None = None
    sparsity_exact: float | None = None
    rounds: int | None = None
    scope: str = ""
    rewind_iter: int | None = None
    groups: str = ""
    bytes: int | None = None
    macs_adjusted: float | None = None
    error: str = ""
    wall_time_s: float = 0.0
    breakdown_ref: str = ""

    def as_csv(self) -> dict[str, str]:
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, float):
                return repr(v)
            return str(v)

        return {col: fmt(getattr(self, col)) for col in CSV_COLUMNS}


@dataclass
class Artifact:
    """Auxiliary CSV emitted next to the results table."""

    name: str  # relative file name, forward slashes
    columns: tuple[str, ...]
    rows: list[tuple] = field(default_factory=list)


@dataclass(frozen=True)
class ModuleCell:
    groups: tuple[str, ...]
    param_fraction: float


def module_grid(net: NetworkSpec, groups: tuple[str, ...]) -> tuple[ModuleCell, ...]:
    """Every subset of the given groups (bitmask order, empty first),
    each with its exact parameter fraction."""
    if not 1 <= len(groups) <= 6:
        raise ConfigError(f"module_grid supports 1..6 groups, got {len(groups)}")
    counts = {g: 0 for g in groups}
    total = 0
    for e in layer_plan(net):
        if not e.layer.has_params:
            continue
        wshape, bshape = param_shape(e)
        n = int(np.prod(wshape)) + int(np.prod(bshape))
        total += n
        if e.group in counts:
            counts[e.group] += n
    known = {e.group for e in layer_plan(net)}
    for g in groups:
        if g not in known:
            raise ConfigError(f"unknown group {g!r}")
    cells = []
    for bitmask in range(2 ** len(groups)):
        subset = tuple(g for i, g in enumerate(groups) if bitmask >> i & 1)
        frac = sum(counts[g] for g in subset) / total
        cells.append(ModuleCell(groups=subset, param_fraction=frac))
    return tuple(cells)


# ---------------------------------------------------------------------------
# per-seed building blocks


def _bench_for(config: ExperimentConfig, task: str | None = None) -> Bench:
    return make_bench(task or config.task, config.size, iterations=config.iterations)


def _dense_store(bench: Bench, ds, seed: int, captures: tuple[int, ...]):
    params = init_network(bench.net, seed)
    opt0 = OptimizerState.for_params(
        params, momentum=bench.train.momentum, weight_decay=bench.train.weight_decay
    )
    store = CheckpointStore()
    store.capture(0, params, opt0)
    res = train(
        bench.net, params, bench.task, ds, bench.train, seed,
        opt=opt0, capture_at=captures,
    )
    for j in captures:
        store.capture(j, *res.captures[j])
    return store, res


def _one_shot(bench: Bench, store: CheckpointStore, j: int, p: float,
              scope: str, groups: tuple[str, ...], seed: int,
              include_head_output: bool = False) -> Ticket:
    trained, _ = store.rewind(bench.train.iterations)
    mask = magnitude_mask(
        trained,
        full_mask(bench.net, include_head_output=include_head_output),
        p, scope, groups,
    )
    rewound, opt = masked_state(store, j, mask)
    return Ticket(
        mask=mask, rewind_weights=rewound, momentum=opt,
        provenance=TicketProvenance(
            task=bench.task.name, p=p, rounds=1, scope=scope, groups=groups,
            rewind_iter=j, seed=seed, creation_iteration=bench.train.iterations,
        ),
    )


def _cost(bench: Bench, params, mask):
    report = network_cost(bench.net, bench.task.head, params, mask)
    return report.checkpoint_bytes, report.total_adjusted_macs


def _breakdown_artifact(name: str, ev) -> Artifact:
    art = Artifact(name=name, columns=("label", "value", "count"))
    art.rows = [(r.label, repr(r.value), r.count) for r in ev.breakdown]
    return art


def _evaluate_row(config, bench, ds, cell, seed, params, mask, *,
                  p=None, rounds=None, scope="", rewind_iter=None, groups=(),
                  t0=None, artifacts=None) -> ResultRow:
    ev = evaluate(bench.net, params, bench.task, ds.val)
    nbytes, macs = _cost(bench, params, mask)
    ref = ""
    if artifacts is not None:
        ref = f"breakdown-{cell.replace('/', '_')}-s{seed}.csv"
        artifacts.append(_breakdown_artifact(ref, ev))
    return ResultRow(
        recipe=config.recipe, cell_id=cell, seed=seed, task=bench.task.name,
        metric_name=ev.metric_name, metric_value=ev.value,
        p_target=p, sparsity_exact=(sparsity(mask).network_sparsity if mask else 0.0),
        rounds=rounds, scope=scope, rewind_iter=rewind_iter,
        groups="+".join(groups), bytes=nbytes, macs_adjusted=macs,
        wall_time_s=(0.0 if t0 is None else time.perf_counter() - t0),
        breakdown_ref=ref,
    )


def _error_row(config, cell, seed, task, exc, t0) -> ResultRow:
    return ResultRow(
        recipe=config.recipe, cell_id=cell, seed=seed, task=task,
        metric_value=None, error=f"{type(exc).__name__}: {exc}",
        wall_time_s=time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# recipe bodies (one seed each)


def _cells_sparsity_sweep(config, seed, rows, artifacts):
    bench = _bench_for(config)
    ds = dataset_for(bench.data, config.data_seed)
    j = bench.rewind_iter
    t0 = time.perf_counter()
    store, _ = _dense_store(bench, ds, seed, (j, bench.train.iterations))
    dense, _ = store.rewind(bench.train.iterations)
    rows.append(_evaluate_row(config, bench, ds, "dense", seed, dense, None,
                              rewind_iter=j, t0=t0, artifacts=artifacts))
    for p in config.p_grid or (0.5, 0.8, 0.9):
        t0 = time.perf_counter()
        try:
            ticket = _one_shot(bench, store, j, p, "global", DEFAULT_PRUNE_GROUPS, seed)
            res = train_ticket(bench.net, ticket, bench.task, ds, bench.train, seed)
            rows.append(_evaluate_row(
                config, bench, ds, f"p{p}", seed, res.params, ticket.mask,
                p=p, rounds=1, scope="global", rewind_iter=j,
                groups=DEFAULT_PRUNE_GROUPS, t0=t0, artifacts=artifacts))
        except Exception as e:  # error isolation per cell
            rows.append(_error_row(config, f"p{p}", seed, bench.task.name, e, t0))


def _cells_resetting_sweep(config, seed, rows, artifacts):
    bench = _bench_for(config)
    ds = dataset_for(bench.data, config.data_seed)
    n = bench.train.iterations
    fractions = config.rewind_fractions or (0.0, 0.1, 0.3)
    js = sorted({int(n * f) for f in fractions})
    post = min(bench.milestone + 1, n)
    captures = tuple(sorted({*js, post, n}))
    t0 = time.perf_counter()
    store, _ = _dense_store(bench, ds, seed, captures)
    dense, _ = store.rewind(n)
    rows.append(_evaluate_row(config, bench, ds, "dense", seed, dense, None, t0=t0))
    p = config.p_grid[0] if config.p_grid else 0.8
    for label, j in [(f"j{j}", j) for j in js] + [("post_milestone", post)]:
        t0 = time.perf_counter()
        try:
            ticket = _one_shot(bench, store, j, p, "global", DEFAULT_PRUNE_GROUPS, seed)
            res = train_ticket(bench.net, ticket, bench.task, ds, bench.train, seed)
            rows.append(_evaluate_row(
                config, bench, ds, label, seed, res.params, ticket.mask,
                p=p, rounds=1, scope="global", rewind_iter=j,
                groups=DEFAULT_PRUNE_GROUPS, t0=t0))
        except Exception as e:
            rows.append(_error_row(config, label, seed, bench.task.name, e, t0))


def _cells_module_pruning(config, seed, rows, artifacts):
    bench = _bench_for(config)
    ds = dataset_for(bench.data, config.data_seed)
    j = bench.rewind_iter
    all_groups = TRUNK_GROUPS + HEAD_GROUPS
    grid = module_grid(bench.net, all_groups)
    t0 = time.perf_counter()
    store, _ = _dense_store(bench, ds, seed, (j, bench.train.iterations))
    p = config.p_grid[0] if config.p_grid else 0.8
    for cell in grid:
        if not cell.groups:
            dense, _ = store.rewind(bench.train.iterations)
            rows.append(_evaluate_row(config, bench, ds, "dense", seed, dense, None, t0=t0))
            continue
        label = "+".join(cell.groups)
        t0 = time.perf_counter()
        try:
            ticket = _one_shot(bench, store, j, p, "global", cell.groups, seed,
                               include_head_output=True)
            res = train_ticket(bench.net, ticket, bench.task, ds, bench.train, seed)
            rows.append(_evaluate_row(
                config, bench, ds, label, seed, res.params, ticket.mask,
                p=p, rounds=1, scope="global", rewind_iter=j,
                groups=cell.groups, t0=t0))
        except Exception as e:
            rows.append(_error_row(config, label, seed, bench.task.name, e, t0))


def _cells_rounds_sweep(config, seed, rows, artifacts):
    bench = _bench_for(config)
    ds = dataset_for(bench.data, config.data_seed)
    j = bench.rewind_iter
    p = config.p_grid[0] if config.p_grid else 0.8
    store = None
    for rounds in config.rounds_grid or (1, 2, 4):
        t0 = time.perf_counter()
        try:
            pc = PruneConfig(p=p, rounds=rounds, scope="global",
                             groups=DEFAULT_PRUNE_GROUPS, rewind_iter=j)
            ticket, store = imp(bench.net, bench.task, ds, bench.train, pc, seed,
                                store=store)
            res = train_ticket(bench.net, ticket, bench.task, ds, bench.train, seed)
            rows.append(_evaluate_row(
                config, bench, ds, f"T{rounds}", seed, res.params, ticket.mask,
                p=p, rounds=rounds, scope="global", rewind_iter=j,
                groups=DEFAULT_PRUNE_GROUPS, t0=t0))
        except Exception as e:
            rows.append(_error_row(config, f"T{rounds}", seed, bench.task.name, e, t0))


def _cells_scope_compare(config, seed, rows, artifacts):
    bench = _bench_for(config)
    ds = dataset_for(bench.data, config.data_seed)
    j = bench.rewind_iter
    t0 = time.perf_counter()
    store, _ = _dense_store(bench, ds, seed, (j, bench.train.iterations))
    ps = config.p_grid or (0.8, 0.9)
    for p in ps:
        for scope in ("global", "layerwise"):
            t0 = time.perf_counter()
            try:
                ticket = _one_shot(bench, store, j, p, scope, DEFAULT_PRUNE_GROUPS, seed)
                if scope == "global" and p == max(ps):
                    art = Artifact(
                        name=f"layer_fractions-s{seed}.csv",
                        columns=("param_id", "pruned_fraction"),
                    )
                    for pid in sorted(ticket.mask.maskable):
                        bits = ticket.mask.bits[pid]
                        art.rows.append((pid, repr(1.0 - float(bits.mean()))))
                    artifacts.append(art)
                res = train_ticket(bench.net, ticket, bench.task, ds, bench.train, seed)
                rows.append(_evaluate_row(
                    config, bench, ds, f"{scope}-p{p}", seed, res.params, ticket.mask,
                    p=p, rounds=1, scope=scope, rewind_iter=j,
                    groups=DEFAULT_PRUNE_GROUPS, t0=t0))
            except Exception as e:
                rows.append(_error_row(config, f"{scope}-p{p}", seed, bench.task.name, e, t0))


def _cells_early_bird(config, seed, rows, artifacts):
    bench = _bench_for(config)
    ds = dataset_for(bench.data, config.data_seed)
    n = bench.train.iterations
    j = bench.rewind_iter
    p = config.p_grid[0] if config.p_grid else 0.8
    eb = EarlyBirdConfig(
        p=p, probe_interval=max(1, n // 20), iou_threshold=0.95, stable_window=3,
        scope="global", groups=DEFAULT_PRUNE_GROUPS,
    )
    t0 = time.perf_counter()
    try:
        ticket, report, stop = early_bird_run(
            bench.net, bench.task, ds, bench.train, eb, seed, rewind_iter=j)
    except Exception as e:
        rows.append(_error_row(config, "early", seed, bench.task.name, e, t0))
        return
    art = Artifact(name=f"iou_history-s{seed}.csv",
                   columns=("iteration", "iou_prev", "iou_final"))
    art.rows = [(it, repr(a), repr(b)) for it, a, b in report.csv_rows()]
    artifacts.append(art)
    rows.append(ResultRow(
        recipe=config.recipe, cell_id="stop", seed=seed, task=bench.task.name,
        metric_name="stop_iteration", metric_value=float(stop),
        p_target=p, rewind_iter=j, wall_time_s=time.perf_counter() - t0))
    for cell, tk in (("early", ticket), ("final", None)):
        t0 = time.perf_counter()
        try:
            if tk is None:
                store = CheckpointStore()
                params0 = init_network(bench.net, seed)
                opt0 = OptimizerState.for_params(
                    params0, momentum=bench.train.momentum,
                    weight_decay=bench.train.weight_decay)
                store.capture(0, params0, opt0)
                res0 = train(bench.net, params0, bench.task, ds, bench.train, seed,
                             opt=opt0, capture_at=(j, n))
                store.capture(j, *res0.captures[j])
                store.capture(n, *res0.captures[n])
                tk = _one_shot(bench, store, j, p, "global", DEFAULT_PRUNE_GROUPS, seed)
            res = train_ticket(bench.net, tk, bench.task, ds, bench.train, seed)
            rows.append(_evaluate_row(
                config, bench, ds, cell, seed, res.params, tk.mask,
                p=p, rounds=1, scope="global", rewind_iter=j,
                groups=DEFAULT_PRUNE_GROUPS, t0=t0))
        except Exception as e:
            rows.append(_error_row(config, cell, seed, bench.task.name, e, t0))


def _matched_ps(target_sparsity: float, bench_target: Bench):
    """Prune fractions that land direct and trunk-transfer runs on the
    same network sparsity."""
    params = init_network(bench_target.net, 0)
    total = params.total_elements()
    maskable = full_mask(bench_target.net).maskable
    n_direct = sum(params[pid].size for pid in maskable)
    n_trunk = sum(params[pid].size for pid in maskable if group_of(pid) in TRUNK_GROUPS)
    p_direct = target_sparsity * total / n_direct
    p_src = target_sparsity * total / n_trunk
    if not (0 < p_direct < 1 and 0 < p_src < 1):
        raise ConfigError(
            f"target sparsity {target_sparsity} unattainable "
            f"(p_direct={p_direct:.3f}, p_trunk={p_src:.3f})"
        )
    return p_direct, p_src


def _cells_transfer_compare(config, seed, rows, artifacts):
    target = _bench_for(config)
    source = _bench_for(config, task="classify")
    ds = dataset_for(target.data, config.data_seed)
    j = target.rewind_iter
    s_target = config.p_grid[0] if config.p_grid else 0.5
    p_direct, p_src = _matched_ps(s_target, target)
    mapping = trunk_mapping(source.net, target.net)

    t0 = time.perf_counter()
    src_store = None
    try:
        pc = PruneConfig(p=p_direct, rounds=2, scope="global",
                         groups=DEFAULT_PRUNE_GROUPS, rewind_iter=j)
        tdir, _ = imp(target.net, target.task, ds, target.train, pc, seed)
        res = train_ticket(target.net, tdir, target.task, ds, target.train, seed)
        rows.append(_evaluate_row(
            config, target, ds, "direct", seed, res.params, tdir.mask,
            p=p_direct, rounds=2, scope="global", rewind_iter=j,
            groups=DEFAULT_PRUNE_GROUPS, t0=t0))
    except Exception as e:
        rows.append(_error_row(config, "direct", seed, target.task.name, e, t0))

    t0 = time.perf_counter()
    try:
        pc_src = PruneConfig(p=p_src, rounds=1, scope="global",
                             groups=TRUNK_GROUPS, rewind_iter=j)
        tsrc, src_store = imp(source.net, source.task, ds, source.train, pc_src, seed)
        tparams, tmask = ticket_transfer(tsrc, target.net, mapping, target_seed=seed)
        opt = transfer_momentum(tparams, target.train.momentum, target.train.weight_decay)
        res = train(target.net, tparams, target.task, ds, target.train, seed,
                    opt=opt, mask=tmask)
        rows.append(_evaluate_row(
            config, target, ds, "ticket_transfer", seed, res.params, tmask,
            p=p_src, rounds=1, scope="global", rewind_iter=j,
            groups=TRUNK_GROUPS, t0=t0))
    except Exception as e:
        rows.append(_error_row(config, "ticket_transfer", seed, target.task.name, e, t0))

    t0 = time.perf_counter()
    try:
        if src_store is None:
            raise RuntimeError("source pretraining failed; no pretrained weights")
        pretrained, _ = src_store.rewind(source.train.iterations)
        mparams, mmask = mask_transfer(pretrained, target.net, p_src, mapping,
                                       target_seed=seed)
        opt = transfer_momentum(mparams, target.train.momentum, target.train.weight_decay)
        res = train(target.net, mparams, target.task, ds, target.train, seed,
                    opt=opt, mask=mmask)
        rows.append(_evaluate_row(
            config, target, ds, "mask_transfer", seed, res.params, mmask,
            p=p_src, rounds=1, scope="layerwise", rewind_iter=0,
            groups=TRUNK_GROUPS, t0=t0))
    except Exception as e:
        rows.append(_error_row(config, "mask_transfer", seed, target.task.name, e, t0))


def _cells_cross_task(config, seed, rows, artifacts):
    from ticketlab.transfer import cross_task_transfer

    source = _bench_for(config)
    ds = dataset_for(source.data, config.data_seed)
    j = source.rewind_iter
    p = config.p_grid[0] if config.p_grid else 0.8
    t0 = time.perf_counter()
    try:
        pc = PruneConfig(p=p, rounds=1, scope="global",
                         groups=TRUNK_GROUPS, rewind_iter=j)
        tsrc, _ = imp(source.net, source.task, ds, source.train, pc, seed)
    except Exception as e:
        for dst in sorted(TASKS):
            if dst != config.task:
                rows.append(_error_row(config, f"{config.task}->{dst}", seed, dst, e, t0))
        return
    for dst in sorted(TASKS):
        if dst == config.task:
            continue
        cell = f"{config.task}->{dst}"
        target = _bench_for(config, task=dst)
        t0 = time.perf_counter()
        try:
            mapping = trunk_mapping(source.net, target.net)
            tparams, tmask, srep = cross_task_transfer(tsrc, target.net, mapping,
                                                       target_seed=seed)
            opt = transfer_momentum(tparams, target.train.momentum,
                                    target.train.weight_decay)
            res = train(target.net, tparams, target.task, ds, target.train, seed,
                        opt=opt, mask=tmask)
            row = _evaluate_row(
                config, target, ds, cell, seed, res.params, tmask,
                p=p, rounds=1, scope="global", rewind_iter=j,
                groups=TRUNK_GROUPS, t0=t0)
            row.sparsity_exact = srep.network_sparsity
            rows.append(row)
        except Exception as e:
            rows.append(_error_row(config, cell, seed, dst, e, t0))


def _cells_convergence(config, seed, rows, artifacts):
    p = config.p_grid[0] if config.p_grid else 0.8
    curves = Artifact(name=f"loss_curves-s{seed}.csv",
                      columns=("task", "variant", "iteration", "val_loss"))
    for task_name in sorted(TASKS):
        bench = _bench_for(config, task=task_name)
        ds = dataset_for(bench.data, config.data_seed)
        j = bench.rewind_iter
        n = bench.train.iterations
        t0 = time.perf_counter()
        try:
            store, dres = _dense_store(bench, ds, seed, (j, n))
            dense_final = dres.evals[-1].loss
            for e in dres.evals:
                curves.rows.append((task_name, "dense", e.iteration, repr(e.loss)))
            dense, _ = store.rewind(n)
            row = _evaluate_row(config, bench, ds, f"{task_name}-dense", seed,
                                dense, None, rewind_iter=j, t0=t0)
            row.metric_name = "val_loss_final"
            row.metric_value = dense_final
            rows.append(row)
            t0 = time.perf_counter()
            # two rounds: one-shot tickets at this sparsity are noticeably
            # weaker, which muddies the iters-to-dense-loss readout
            pc = PruneConfig(p=p, rounds=2, scope="global",
                             groups=DEFAULT_PRUNE_GROUPS, rewind_iter=j)
            ticket, _ = imp(bench.net, bench.task, ds, bench.train, pc, seed,
                            store=store)
            res = train_ticket(bench.net, ticket, bench.task, ds, bench.train, seed)
            for e in res.evals:
                curves.rows.append((task_name, "ticket", e.iteration, repr(e.loss)))
            reached = [e.iteration for e in res.evals if e.loss <= dense_final]
            row = _evaluate_row(config, bench, ds, f"{task_name}-ticket", seed,
                                res.params, ticket.mask, p=p, rounds=2,
                                scope="global", rewind_iter=j,
                                groups=DEFAULT_PRUNE_GROUPS, t0=t0)
            rows.append(row)
            rows.append(ResultRow(
                recipe=config.recipe, cell_id=f"{task_name}-iters_to_dense_loss",
                seed=seed, task=task_name, metric_name="iters_to_dense_loss",
                metric_value=(float(reached[0]) if reached else math.nan),
                p_target=p, rewind_iter=j))
        except Exception as e:
            rows.append(_error_row(config, f"{task_name}-ticket", seed, task_name, e, t0))
    artifacts.append(curves)


_RECIPE_BODIES = {
    "sparsity_sweep": _cells_sparsity_sweep,
    "resetting_sweep": _cells_resetting_sweep,
    "module_pruning": _cells_module_pruning,
    "rounds_sweep": _cells_rounds_sweep,
    "scope_compare": _cells_scope_compare,
    "early_bird": _cells_early_bird,
    "transfer_compare": _cells_transfer_compare,
    "cross_task": _cells_cross_task,
    "convergence": _cells_convergence,
}


def _seed_job(config: ExperimentConfig, seed: int):
    rows: list[ResultRow] = []
    artifacts: list[Artifact] = []
    t0 = time.perf_counter()
    try:
        _RECIPE_BODIES[config.recipe](config, seed, rows, artifacts)
    except Exception as e:  # whole-seed failure still yields a row
        rows.append(_error_row(config, "seed", seed, config.task, e, t0))
    return rows, artifacts


@dataclass
class RunOutput:
    out_dir: Path
    csv_path: Path
    svg_path: Path
    rows: list[ResultRow]


def run(config: ExperimentConfig) -> RunOutput:
    """Execute a recipe's full grid and write CSV + SVG + artifacts."""
    out = output_root(config.out_dir) / config.recipe
    out.mkdir(parents=True, exist_ok=True)

    seeds = config.seeds()
    results: list[tuple[list[ResultRow], list[Artifact]]] = []
    if config.workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_seed_job, [config] * len(seeds), seeds))
    else:
        results = [_seed_job(config, s) for s in seeds]

    rows: list[ResultRow] = []
    for seed_rows, artifacts in results:
        rows.extend(seed_rows)
        for art in artifacts:
            _write_artifact(out, art)
    rows.sort(key=lambda r: (r.cell_id, r.seed))

    csv_path = out / "results.csv"
    _write_rows(csv_path, rows)
    (out / "config.json").write_text(config.to_json())

    from ticketlab.harness.plots import render_recipe

    svg_path = out / f"{config.recipe}.svg"
    render_recipe(config.recipe, rows, out, svg_path)
    return RunOutput(out_dir=out, csv_path=csv_path, svg_path=svg_path, rows=rows)


def _write_rows(path: Path, rows: list[ResultRow]):
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(CSV_COLUMNS))
        writer.writeheader()
        for row in rows:
            writer.writerow(row.as_csv())


def _write_artifact(out: Path, art: Artifact):
    import csv

    path = out / art.name
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(art.columns)
        writer.writerows(art.rows)
