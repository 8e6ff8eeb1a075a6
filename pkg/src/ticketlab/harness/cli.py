"""Command line front end.

Subcommands cover the one-off operations (train, prune, earlybird,
transfer) and the batch paths (run <recipe>, report). Batch runs write
a results.csv plus one SVG figure per recipe; the output root comes
from --out, then $TICKETLAB_OUT, then ./ticketlab_out.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ticketlab.bench import DEFAULT_PRUNE_GROUPS, SIZES, TRUNK_GROUPS, make_bench
from ticketlab.earlybird import EarlyBirdConfig, early_bird_run
from ticketlab.errors import TicketLabError
from ticketlab.harness.config import OUTPUT_ENV, RECIPES, load_config
from ticketlab.checkpoint import save_with_sidecar
from ticketlab.nn.network import init_network
from ticketlab.nn.optim import OptimizerState
from ticketlab.pruning import PruneConfig, imp, load_ticket, save_ticket, train_ticket
from ticketlab.tasks import TASKS, dataset_for, evaluate
from ticketlab.training import train
from ticketlab.transfer import ticket_transfer, transfer_momentum, trunk_mapping


def _add_bench_flags(p: argparse.ArgumentParser):
    p.add_argument("--task", default="classify", choices=sorted(TASKS))
    p.add_argument("--size", default="small", choices=list(SIZES))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--data-seed", type=int, default=777)
    p.add_argument("--iterations", type=int, default=None,
                   help="override training length")
    p.add_argument("--out", default=None, help=f"output root (or ${OUTPUT_ENV})")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x)


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ticketlab")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a dense network")
    _add_bench_flags(p)
    p.add_argument("--save", default=None, help="checkpoint path for final weights")

    p = sub.add_parser("prune", help="find a ticket by magnitude pruning")
    _add_bench_flags(p)
    p.add_argument("--p", type=float, default=0.8, help="overall prune fraction")
    p.add_argument("--rounds", type=int, default=1)
    p.add_argument("--scope", default="global", choices=("global", "layerwise"))
    p.add_argument("--rewind-fraction", type=float, default=0.1)
    p.add_argument("--retrain", action="store_true",
                   help="also retrain the ticket and report its metric")
    p.add_argument("--save", default=None, help="ticket output path")

    p = sub.add_parser("earlybird", help="probe for an early stable mask")
    _add_bench_flags(p)
    p.add_argument("--p", type=float, default=0.8)
    p.add_argument("--probe-interval", type=int, default=None)
    p.add_argument("--iou-threshold", type=float, default=0.95)
    p.add_argument("--stable-window", type=int, default=3)
    p.add_argument("--save", default=None, help="ticket output path")

    p = sub.add_parser("transfer", help="move a ticket's trunk to another task")
    _add_bench_flags(p)
    p.add_argument("--ticket", required=True, help="saved source ticket")
    p.add_argument("--source-task", default="classify", choices=sorted(TASKS))

    p = sub.add_parser("run", help="execute a named recipe grid")
    p.add_argument("recipe", choices=RECIPES)
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--task", default=None, choices=sorted(TASKS))
    p.add_argument("--size", default=None, choices=list(SIZES))
    p.add_argument("--replicates", type=int, default=None)
    p.add_argument("--base-seed", type=int, default=None)
    p.add_argument("--data-seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--p-grid", type=_floats, default=None,
                   help="comma separated prune fractions")
    p.add_argument("--rounds-grid", type=_ints, default=None)
    p.add_argument("--rewind-fractions", type=_floats, default=None)
    p.add_argument("--out", default=None)

    p = sub.add_parser("report", help="aggregate results into mean/std tables")
    p.add_argument("results_dir")
    return parser


def _bench_and_data(args):
    bench = make_bench(args.task, args.size, iterations=args.iterations)
    ds = dataset_for(bench.data, args.data_seed)
    return bench, ds


def _print_eval(bench, ds, params, mask=None):
    ev = evaluate(bench.net, params, bench.task, ds.val, mask=mask)
    print(f"{bench.task.name} val {ev.metric_name} = {ev.value:.4f} "
          f"(loss {ev.loss:.4f}, n={ev.n})")
    return ev


def _cmd_train(args) -> int:
    bench, ds = _bench_and_data(args)
    params = init_network(bench.net, args.seed)
    opt = OptimizerState.for_params(params, momentum=bench.train.momentum,
                                    weight_decay=bench.train.weight_decay)
    res = train(bench.net, params, bench.task, ds, bench.train, args.seed, opt=opt)
    _print_eval(bench, ds, res.params)
    if args.save:
        save_with_sidecar(dict(res.params.items()), Path(args.save),
                          provenance={"task": args.task, "seed": args.seed,
                                      "iterations": bench.train.iterations})
        print(f"saved weights to {args.save}")
    return 0


def _cmd_prune(args) -> int:
    bench, ds = _bench_and_data(args)
    j = int(bench.train.iterations * args.rewind_fraction)
    pc = PruneConfig(p=args.p, rounds=args.rounds, scope=args.scope,
                     groups=DEFAULT_PRUNE_GROUPS, rewind_iter=j)
    ticket, _ = imp(bench.net, bench.task, ds, bench.train, pc, args.seed)
    rep = ticket.sparsity()
    print(f"ticket sparsity {rep.network_sparsity:.4f} "
          f"({rep.zeros}/{rep.total} weights pruned), rewind iter {j}")
    if args.retrain:
        res = train_ticket(bench.net, ticket, bench.task, ds, bench.train, args.seed)
        _print_eval(bench, ds, res.params)
    if args.save:
        path = save_ticket(ticket, Path(args.save))
        print(f"saved ticket to {path}")
    return 0


def _cmd_earlybird(args) -> int:
    bench, ds = _bench_and_data(args)
    n = bench.train.iterations
    eb = EarlyBirdConfig(
        p=args.p,
        probe_interval=args.probe_interval or max(1, n // 20),
        iou_threshold=args.iou_threshold,
        stable_window=args.stable_window,
        scope="global", groups=DEFAULT_PRUNE_GROUPS,
    )
    ticket, report, stop = early_bird_run(
        bench.net, bench.task, ds, bench.train, eb, args.seed,
        rewind_iter=bench.rewind_iter)
    tag = "stable early" if report.stopped_early else "never stabilized"
    print(f"mask {tag}: stop iteration {stop} of {n}")
    for it, iou_prev, iou_final in report.csv_rows():
        prev = "  --- " if iou_prev != iou_prev else f"{iou_prev:.4f}"
        print(f"  probe @{it:>5}: iou_prev {prev}  iou_final {iou_final:.4f}")
    if args.save:
        path = save_ticket(ticket, Path(args.save))
        print(f"saved ticket to {path}")
    return 0


def _cmd_transfer(args) -> int:
    bench, ds = _bench_and_data(args)
    source_net = make_bench(args.source_task, args.size,
                            iterations=args.iterations).net
    ticket = load_ticket(args.ticket)
    mapping = trunk_mapping(source_net, bench.net)
    params, mask = ticket_transfer(ticket, bench.net, mapping,
                                   target_seed=args.seed)
    opt = transfer_momentum(params, bench.train.momentum,
                            bench.train.weight_decay)
    res = train(bench.net, params, bench.task, ds, bench.train, args.seed,
                opt=opt, mask=mask)
    print(f"transferred {args.source_task} ticket over groups "
          f"{'+'.join(TRUNK_GROUPS)}")
    _print_eval(bench, ds, res.params, mask)
    return 0


def _cmd_run(args) -> int:
    from ticketlab.harness.recipes import run

    base = {}
    if args.config:
        base = json.loads(Path(args.config).read_text())
    base["recipe"] = args.recipe
    for name in ("task", "size", "replicates", "base_seed", "data_seed",
                 "workers", "iterations", "p_grid", "rounds_grid",
                 "rewind_fractions"):
        flag = getattr(args, name)
        if flag is not None:
            base[name] = list(flag) if isinstance(flag, tuple) else flag
    if args.out is not None:
        base["out_dir"] = args.out
    config = load_config(base)
    result = run(config)
    errors = sum(1 for r in result.rows if r.error)
    print(f"{len(result.rows)} rows ({errors} errors) -> {result.csv_path}")
    print(f"figure -> {result.svg_path}")
    return 1 if errors else 0


def _cmd_report(args) -> int:
    from ticketlab.harness.report import report

    out = report(args.results_dir)
    print(f"summary -> {out}")
    print((out.parent / "summary.md").read_text())
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "prune": _cmd_prune,
    "earlybird": _cmd_earlybird,
    "transfer": _cmd_transfer,
    "run": _cmd_run,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except TicketLabError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
