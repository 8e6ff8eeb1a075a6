"""Experiment harness: named recipes, CSV/plot emission, aggregation."""

from ticketlab.harness.config import (
    CONFIG_SCHEMA,
    CSV_COLUMNS,
    RECIPES,
    ExperimentConfig,
    load_config,
    output_root,
)
from ticketlab.harness.recipes import ModuleCell, module_grid, run
from ticketlab.harness.report import report

__all__ = [
    "CONFIG_SCHEMA",
    "CSV_COLUMNS",
    "RECIPES",
    "ExperimentConfig",
    "ModuleCell",
    "load_config",
    "module_grid",
    "output_root",
    "report",
    "run",
]
