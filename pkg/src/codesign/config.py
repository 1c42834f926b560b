"""Run configuration: network bounds, hardware target, objectives, search and worker settings."""

from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .dataset import load_csv
from .evolution import MUTATION_OPS, Bounds, Objective
from .mlp import ACTIVATIONS


class ConfigError(ValueError):
    pass


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DatasetSection(_Section):
    path: Optional[str] = None
    label_column: Union[str, int] = -1
    has_header: bool = True
    name: Optional[str] = None


class NnaSection(_Section):
    input_size: int = Field(ge=1)
    output_size: int = Field(ge=1)
    min_layers: int = Field(1, ge=0)
    max_layers: int = 3
    min_neurons: int = Field(4, ge=1)
    max_neurons: int = 128
    activations: List[str] = list(ACTIVATIONS)
    bias_choices: List[bool] = [True, False]

    @field_validator("activations")
    @classmethod
    def _known(cls, v):
        bad = [a for a in v if a not in ACTIVATIONS]
        if bad or not v:
            raise ValueError(f"activations must be a non-empty subset of {list(ACTIVATIONS)}, got {v}")
        return v


class GridBounds(_Section):
    rows: Tuple[int, int] = (1, 32)
    cols: Tuple[int, int] = (1, 32)
    vec_width: Tuple[int, int] = (1, 16)
    interleave_rows: Tuple[int, int] = (1, 16)
    interleave_cols: Tuple[int, int] = (1, 16)


class HardwareSection(_Section):
    target: str
    catalog: Optional[str] = None
    ddr_banks: Optional[int] = None
    clock_hz: Optional[float] = None
    grid: GridBounds = GridBounds()
    batch_m: Tuple[int, int] = (1, 64)
    total_inputs: int = Field(10000, ge=1)


class ObjectiveSection(_Section):
    name: str
    sense: str = "max"
    weight: float = 1.0
    scale: float = 1.0


class EvolutionSection(_Section):
    population: int = Field(32, ge=1)
    rates: Dict[str, float] = {op: 0.2 for op in MUTATION_OPS}
    tournament: int = Field(3, ge=1)
    steps: int = Field(200, ge=0)
    max_evaluations: Optional[int] = None
    max_seconds: Optional[float] = None
    seed: int = 0
    parallelism: int = Field(1, ge=1)
    mode: str = "auto"
    fitness: str = "weighted_sum"

    @field_validator("rates")
    @classmethod
    def _ops(cls, v):
        bad = [k for k in v if k not in MUTATION_OPS]
        if bad:
            raise ValueError(f"unknown mutation operators {bad}; known: {list(MUTATION_OPS)}")
        return v


class EvaluationSection(_Section):
    mode: str = "split"
    test_fraction: float = 0.2
    k: int = 10
    seed: int = 0
    finalists_kfold: int = 0

    @field_validator("mode")
    @classmethod
    def _mode(cls, v):
        if v not in ("split", "kfold"):
            raise ValueError("evaluation.mode must be 'split' or 'kfold'")
        return v

    def split_spec(self) -> dict:
        if self.mode == "kfold":
            return {"mode": "kfold", "k": self.k, "seed": self.seed}
        return {"mode": "split", "test_fraction": self.test_fraction, "seed": self.seed}


class TrainingSection(_Section):
    epochs: int = Field(50, ge=1)
    batch_size: int = Field(32, ge=1)
    learning_rate: float = Field(1e-3, ge=0)
    optimizer: str = "adam"
    seed: int = 0


class WorkersSection(_Section):
    transport: str = "inprocess"
    listen: str = "127.0.0.1:0"
    simulation: int = Field(1, ge=0)
    hardware_db: int = Field(1, ge=0)
    remote_simulation: int = Field(0, ge=0)
    remote_hardware_db: int = Field(0, ge=0)
    wait_s: float = 60.0
    retries: int = Field(2, ge=0)
    heartbeat_s: float = 5.0
    lease_timeout_s: float = 15.0


class OutputSection(_Section):
    dir: str = "out"


class RunConfig(_Section):
    dataset: DatasetSection = DatasetSection()
    nna: NnaSection
    hardware: HardwareSection
    objectives: List[ObjectiveSection]
    evolution: EvolutionSection = EvolutionSection()
    evaluation: EvaluationSection = EvaluationSection()
    training: TrainingSection = TrainingSection()
    workers: WorkersSection = WorkersSection()
    output: OutputSection = OutputSection()

    @model_validator(mode="after")
    def _consistent(self):
        if not self.objectives:
            raise ValueError("at least one objective is required")
        if any(o.name == "accuracy" for o in self.objectives) and not self.dataset.path:
            raise ValueError("dataset.path is required when accuracy is an objective")
        self.bounds()  # raises on inconsistent ranges
        for o in self.objectives:
            Objective(o.name, o.sense, o.weight, o.scale)
        return self

    def bounds(self) -> Bounds:
        n, g = self.nna, self.hardware.grid
        return Bounds(n.input_size, n.output_size, n.min_layers, n.max_layers, n.min_neurons, n.max_neurons,
                      tuple(n.activations), tuple(n.bias_choices), g.rows, g.cols, g.vec_width, g.interleave_rows,
                      g.interleave_cols, self.hardware.batch_m)

    def objective_list(self) -> Tuple[Objective, ...]:
        return tuple(Objective(o.name, o.sense, o.weight, o.scale) for o in self.objectives)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.model_dump(mode="json"), sort_keys=False)


def parse_config(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        problems = []
        for err in e.errors():
            loc = ".".join(str(p) for p in err["loc"]) or "<root>"
            problems.append(f"{loc}: {err['msg']}")
        raise ConfigError("invalid configuration: " + "; ".join(problems)) from None
    except ValueError as e:
        raise ConfigError(f"invalid configuration: {e}") from None


def load_config(path: Union[str, Path]) -> RunConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} is not a mapping")
    return parse_config(data)


def default_template() -> dict:
    return yaml.safe_load(resources.files("codesign").joinpath("template.yaml").read_text())


def generate_config(dataset_path: Union[str, Path], template: Optional[dict] = None,
                    label_column: Union[str, int, None] = None, has_header: Optional[bool] = None) -> RunConfig:
    """Fill a template with the dataset's name, path and inferred input/output sizes."""
    data = yaml.safe_load(yaml.safe_dump(template if template is not None else default_template()))
    ds_section = dict(data.get("dataset") or {})
    if label_column is not None:
        ds_section["label_column"] = label_column
    if has_header is not None:
        ds_section["has_header"] = has_header
    ds = load_csv(dataset_path, ds_section.get("label_column", -1), ds_section.get("has_header", True))
    ds_section.update(path=str(dataset_path), name=ds.name)
    data["dataset"] = ds_section
    nna = dict(data.get("nna") or {})
    nna.update(input_size=ds.n_features, output_size=ds.n_classes)
    data["nna"] = nna
    return parse_config(data)
