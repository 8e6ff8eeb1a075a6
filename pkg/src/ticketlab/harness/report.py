"""Aggregate per-seed result tables into summary statistics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

from ticketlab.errors import FormatError
from ticketlab.harness.config import CSV_COLUMNS


@dataclass(frozen=True)
class CellSummary:
    recipe: str
    cell_id: str
    task: str
    metric_name: str
    n: int
    mean: float
    std: float  # sample std (ddof=1); 0.0 when n == 1
    single_replicate: bool
    errors: int


def _load_rows(path: Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = tuple(reader.fieldnames or ())
        if header != CSV_COLUMNS:
            raise FormatError(
                f"{path}: unexpected columns {header!r}, expected {CSV_COLUMNS!r}"
            )
        return list(reader)


def summarize(rows: list[dict[str, str]]) -> list[CellSummary]:
    """Mean and sample std of metric_value per (recipe, cell_id)."""
    cells: dict[tuple[str, str], list[dict[str, str]]] = {}
    for row in rows:
        cells.setdefault((row["recipe"], row["cell_id"]), []).append(row)
    out = []
    for (recipe, cell_id), group in sorted(cells.items()):
        values = []
        errors = 0
        for row in group:
            if row["error"]:
                errors += 1
                continue
            if row["metric_value"] != "":
                values.append(float(row["metric_value"]))
        values = [v for v in values if not math.isnan(v)]
        n = len(values)
        mean = sum(values) / n if n else math.nan
        if n > 1:
            var = sum((v - mean) ** 2 for v in values) / (n - 1)
            std = math.sqrt(var)
        else:
            std = 0.0
        out.append(CellSummary(
            recipe=recipe, cell_id=cell_id,
            task=group[0]["task"], metric_name=group[0]["metric_name"],
            n=n, mean=mean, std=std, single_replicate=(n == 1), errors=errors,
        ))
    return out


def report(results_dir: str | Path) -> Path:
    """Write summary.csv and summary.md for every results.csv under a
    directory (a single recipe dir or a root holding several)."""
    results_dir = Path(results_dir)
    if (results_dir / "results.csv").exists():
        paths = [results_dir / "results.csv"]
    else:
        paths = sorted(results_dir.glob("*/results.csv"))
    if not paths:
        raise FormatError(f"no results.csv under {results_dir}")
    rows: list[dict[str, str]] = []
    for p in paths:
        rows.extend(_load_rows(p))
    summaries = summarize(rows)

    out_csv = results_dir / "summary.csv"
    with open(out_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("recipe", "cell_id", "task", "metric_name",
                         "n", "mean", "std", "single_replicate", "errors"))
        for s in summaries:
            writer.writerow((s.recipe, s.cell_id, s.task, s.metric_name,
                             s.n, repr(s.mean), repr(s.std),
                             int(s.single_replicate), s.errors))

    lines = ["# Summary", ""]
    recipes = sorted({s.recipe for s in summaries})
    if recipes:
        lines.append("Recipes: " + ", ".join(f"`{r}`" for r in recipes))
        lines.append("")
    lines.append("| recipe | cell | task | metric | n | mean | std | errors |")
    lines.append("|---|---|---|---|---|---|---|---|")
    for s in summaries:
        flag = " (single replicate)" if s.single_replicate else ""
        mean = "nan" if math.isnan(s.mean) else f"{s.mean:.6g}"
        lines.append(
            f"| {s.recipe} | {s.cell_id} | {s.task} | {s.metric_name} | {s.n} "
            f"| {mean} | {s.std:.6g}{flag} | {s.errors} |"
        )
    (results_dir / "summary.md").write_text("\n".join(lines) + "\n")
    return out_csv
