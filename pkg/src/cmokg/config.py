"""Experiment configuration files (YAML, validated, unknown keys rejected)."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .acquisition import OptimizerConfig
from .hyperfit import FitConfig
from .loop import RUN_MODES, RunConfig, RunSeeds
from .pareto import Nsga2Config


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class OptimizerSection(_Strict):
    restarts: int = Field(10, ge=1)
    max_iterations: int = Field(50, ge=1)
    coarse_grid: int = Field(21, ge=2)
    finite_difference_step: float = Field(1e-4, gt=0)
    fantasy_count: int = Field(64, ge=1)
    fantasy_seed: int = 0


class FitSection(_Strict):
    restarts: int = Field(8, ge=1)
    max_iterations: int = Field(200, ge=1)
    local_searches: int | None = Field(1, ge=1)


class NsgaSection(_Strict):
    population: int = Field(100, ge=4)
    generations: int = Field(100, ge=0)
    crossover_prob: float = Field(0.9, ge=0, le=1)
    crossover_eta: float = Field(15.0, gt=0)
    mutation_prob: float | None = Field(None, ge=0, le=1)
    mutation_eta: float = Field(20.0, gt=0)

    @field_validator("population")
    @classmethod
    def _even(cls, v):
        if v % 2:
            raise ValueError("population must be even")
        return v


class ExperimentConfig(_Strict):
    master_seed: int = 0
    families: list[Literal[1, 2]] = [1]
    modes: list[Literal["cmokg-expectation", "cmokg-random", "benchmark-both"]] = list(RUN_MODES)
    repeats: int = Field(20, ge=1)
    budget: float = Field(400.0, gt=0)
    initial_points: int = Field(6, ge=1)
    Q: int = Field(16, ge=1)
    costs: list[float] = [1.0, 10.0]
    checkpoint_every: float = Field(25.0, gt=0)
    inner_grid: int = Field(11, ge=1)
    metric_lambdas: int = Field(1024, ge=1)
    threads: int = Field(1, ge=1)
    output_dir: str = "results"
    problems_dir: str | None = None
    optimizer: OptimizerSection = OptimizerSection()
    fit: FitSection = FitSection()
    nsga: NsgaSection = NsgaSection()

    @field_validator("costs")
    @classmethod
    def _costs(cls, v):
        if len(v) != 2 or any(c <= 0 for c in v):
            raise ValueError("costs must be two positive numbers")
        return v

    def run_config(self, mode: str, repeat: int) -> RunConfig:
        return RunConfig(
            mode=mode, budget=self.budget, initial_points=self.initial_points, Q=self.Q,
            costs=tuple(self.costs), seeds=RunSeeds.from_master(self.master_seed, repeat),
            checkpoint_every=self.checkpoint_every, inner_grid_size=self.inner_grid,
            metric_lambdas=self.metric_lambdas,
            fit=FitConfig(self.fit.restarts, self.fit.max_iterations, 0, self.fit.local_searches),
            optimizer=OptimizerConfig(**self.optimizer.model_dump()),
            nsga=Nsga2Config(**self.nsga.model_dump()),
        )

    def base_run_config(self) -> RunConfig:
        return self.run_config(self.modes[0], 0)

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def _line_of(node, loc) -> int | None:
    """Source line of the YAML node at path ``loc``, or of its nearest ancestor."""
    line = node.start_mark.line + 1 if node is not None else None
    for key in loc:
        if isinstance(node, yaml.MappingNode):
            nxt = next((v for k, v in node.value if k.value == key), None)
            if nxt is None:
                nxt = next((k for k, _ in node.value if k.value == key), None)
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            nxt = node.value[key]
        else:
            nxt = None
        if nxt is None:
            break
        node = nxt
        line = node.start_mark.line + 1
    return line


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    try:
        data = yaml.safe_load(text)
        root = yaml.compose(text)
    except yaml.YAMLError as err:
        raise ConfigError(f"{source}: invalid YAML: {err}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as err:
        lines = []
        for e in err.errors():
            loc = [p for p in e["loc"] if not (isinstance(p, str) and p.startswith("function-"))]
            field = ".".join(str(p) for p in loc) or "<root>"
            line = _line_of(root, loc)
            where = f"{source}:{line}" if line else source
            lines.append(f"{where}: {field}: {e['msg']}")
        raise ConfigError("\n".join(lines)) from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"{path}: {err.strerror}") from None
    return parse_config(text, str(path))
