"""Experiment configuration: JSON schema, defaults, output locations."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import jsonschema

from ticketlab.errors import ConfigError
from ticketlab.tasks import TASKS

RECIPES = (
    "sparsity_sweep",
    "resetting_sweep",
    "module_pruning",
    "rounds_sweep",
    "scope_compare",
    "early_bird",
    "transfer_compare",
    "cross_task",
    "convergence",
)

OUTPUT_ENV = "TICKETLAB_OUT"

# fixed result schema; recipes fill irrelevant fields with blanks
CSV_COLUMNS = (
    "recipe",
    "cell_id",
    "seed",
    "p_target",
    "sparsity_exact",
    "rounds",
    "scope",
    "rewind_iter",
    "groups",
    "task",
    "metric_name",
    "metric_value",
    "bytes",
    "macs_adjusted",
    "error",
    "wall_time_s",
    "breakdown_ref",
)

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["recipe"],
    "properties": {
        "recipe": {"enum": list(RECIPES)},
        "size": {"enum": ["small", "large"]},
        "task": {"enum": sorted(TASKS)},
        "replicates": {"type": "integer", "minimum": 1},
        "base_seed": {"type": "integer", "minimum": 0},
        "data_seed": {"type": "integer", "minimum": 0},
        "workers": {"type": "integer", "minimum": 1},
        "out_dir": {"type": "string"},
        "p_grid": {
            "type": "array",
            "minItems": 1,
            "items": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        },
        "rounds_grid": {
            "type": "array",
            "minItems": 1,
            "items": {"type": "integer", "minimum": 1},
        },
        "rewind_fractions": {
            "type": "array",
            "minItems": 1,
            "items": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        },
        "iterations": {"type": "integer", "minimum": 1},
    },
}


@dataclass(frozen=True)
class ExperimentConfig:
    recipe: str
    size: str = "small"
    task: str = "classify"
    replicates: int = 5
    base_seed: int = 0
    data_seed: int = 777
    workers: int = 1
    out_dir: str | None = None
    p_grid: tuple[float, ...] = ()
    rounds_grid: tuple[int, ...] = ()
    rewind_fractions: tuple[float, ...] = ()
    iterations: int | None = None

    def __post_init__(self):
        if self.recipe not in RECIPES:
            raise ConfigError(f"unknown recipe {self.recipe!r}; have {RECIPES}")
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        object.__setattr__(self, "p_grid", tuple(self.p_grid))
        object.__setattr__(self, "rounds_grid", tuple(self.rounds_grid))
        object.__setattr__(self, "rewind_fractions", tuple(self.rewind_fractions))
        for p in self.p_grid:
            if not 0.0 < p < 1.0:
                raise ConfigError(f"p_grid entries must be in (0,1), got {p}")

    def seeds(self) -> tuple[int, ...]:
        return tuple(self.base_seed + r for r in range(self.replicates))

    def to_json(self) -> str:
        doc = {k: v for k, v in asdict(self).items() if v not in (None, ())}
        for key in ("p_grid", "rounds_grid", "rewind_fractions"):
            if key in doc:
                doc[key] = list(doc[key])
        return json.dumps(doc, indent=2, sort_keys=True)


def load_config(source: str | Path | dict) -> ExperimentConfig:
    """Parse and schema-validate an experiment config document."""
    if isinstance(source, (str, Path)):
        doc = json.loads(Path(source).read_text())
    else:
        doc = source
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as e:
        raise ConfigError(f"invalid experiment config: {e.message}") from e
    doc = dict(doc)
    for key in ("p_grid", "rounds_grid", "rewind_fractions"):
        if key in doc:
            doc[key] = tuple(doc[key])
    return ExperimentConfig(**doc)


def output_root(explicit: str | None = None) -> Path:
    """Resolve the output root: explicit flag > env var > ./ticketlab_out."""
    if explicit:
        return Path(explicit)
    env = os.environ.get(OUTPUT_ENV)
    if env:
        return Path(env)
    return Path("ticketlab_out")
