"""Pipeline configuration: dataclasses mirroring the JSON config file.

The parser is strict — unknown keys are rejected so typos fail loudly — and
every section round-trips through to_dict/from_dict, which the metrics
reports rely on for their config echo.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .ot_align import GwConfig
from .reward_model import RrlConfig
from .synthetic_tasks import TaskSpec

VALID_MODES = ("zero_shot", "few_shot")
VALID_LABEL_SOURCES = ("transferred", "scripted")
SWEEPABLE = (
    "metric",
    "noise_fraction",
    "robust_weight",
    "reg_weight",
    "entropy_margin",
    "group_size",
)


def _check_keys(section: str, data: dict, allowed) -> None:
    unknown = set(data) - set(allowed)
    if unknown:
        raise ValueError(f"unknown {section} config keys: {sorted(unknown)}")


@dataclass
class TaskGenConfig:
    """Synthetic task generation section: a TaskSpec plus the set sizes."""

    spec: TaskSpec = field(default_factory=TaskSpec)
    num_source: int = 8
    num_target: int = 8

    def __post_init__(self) -> None:
        if self.num_source < 2 or self.num_target < 2:
            raise ValueError("num_source and num_target must be >= 2")

    @classmethod
    def from_dict(cls, data: dict) -> "TaskGenConfig":
        data = dict(data)
        num_source = data.pop("num_source", 8)
        num_target = data.pop("num_target", 8)
        _check_keys("tasks", data, TaskSpec.__dataclass_fields__)
        return cls(spec=TaskSpec(**data), num_source=num_source, num_target=num_target)

    def to_dict(self) -> dict:
        out = self.spec.to_dict()
        out["num_source"] = self.num_source
        out["num_target"] = self.num_target
        return out


@dataclass
class SamplingConfig:
    """Balanced-sampling loop: cluster the target pool, then repeatedly
    draw group_size segments (half per cluster) and transfer labels."""

    group_size: int = 4
    num_steps: int = 10
    kmeans_k: int = 2
    seed: int = 0
    holdout_fraction: float = 0.25

    def __post_init__(self) -> None:
        if self.group_size < 2 or self.group_size % 2 != 0:
            raise ValueError("group_size must be a positive even integer")
        if self.kmeans_k != 2:
            raise ValueError("balanced sampling is defined over exactly 2 clusters")
        if self.num_steps < 1:
            raise ValueError("num_steps must be >= 1")
        if not 0.0 <= self.holdout_fraction < 1.0:
            raise ValueError("holdout_fraction must lie in [0, 1)")

    @classmethod
    def from_dict(cls, data: dict) -> "SamplingConfig":
        _check_keys("sampling", data, cls.__dataclass_fields__)
        return cls(**data)

    def to_dict(self) -> dict:
        return {
            "group_size": self.group_size,
            "num_steps": self.num_steps,
            "kmeans_k": self.kmeans_k,
            "seed": self.seed,
            "holdout_fraction": self.holdout_fraction,
        }


@dataclass
class TrainingLabelConfig:
    """Where training labels come from and how much synthetic noise to add."""

    source: str = "transferred"
    noise_fraction: float = 0.0
    noise_seed: int = 0

    def __post_init__(self) -> None:
        if self.source not in VALID_LABEL_SOURCES:
            raise ValueError(f"label source must be one of {VALID_LABEL_SOURCES}")
        if not 0.0 <= self.noise_fraction <= 1.0:
            raise ValueError("noise_fraction must lie in [0, 1]")

    @classmethod
    def from_dict(cls, data: dict) -> "TrainingLabelConfig":
        _check_keys("training_labels", data, cls.__dataclass_fields__)
        return cls(**data)

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "noise_fraction": self.noise_fraction,
            "noise_seed": self.noise_seed,
        }


@dataclass
class SweepConfig:
    """One swept parameter and the values to run it at."""

    parameter: str
    values: list

    def __post_init__(self) -> None:
        if self.parameter not in SWEEPABLE:
            raise ValueError(f"sweep parameter must be one of {SWEEPABLE}")
        if not self.values:
            raise ValueError("sweep values must be nonempty")

    @classmethod
    def from_dict(cls, data: dict) -> "SweepConfig":
        _check_keys("sweep", data, cls.__dataclass_fields__)
        return cls(**data)

    def to_dict(self) -> dict:
        return {"parameter": self.parameter, "values": list(self.values)}


@dataclass
class PipelineConfig:
    """Everything the CLI subcommands need, mirrored 1:1 by the JSON file."""

    output_dir: str = "out"
    source_dataset: str | None = None
    target_dataset: str | None = None
    metric: str = "euclidean"
    mode: str = "zero_shot"
    few_shot_oracle_count: int = 0
    tasks: TaskGenConfig = field(default_factory=TaskGenConfig)
    gw: GwConfig = field(default_factory=GwConfig)
    rrl: RrlConfig = field(default_factory=RrlConfig)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    training_labels: TrainingLabelConfig = field(default_factory=TrainingLabelConfig)
    sweep: SweepConfig | None = None

    def __post_init__(self) -> None:
        if self.metric not in ("euclidean", "cosine"):
            raise ValueError("metric must be euclidean or cosine")
        if self.mode not in VALID_MODES:
            raise ValueError(f"mode must be one of {VALID_MODES}")
        if self.few_shot_oracle_count < 0:
            raise ValueError("few_shot_oracle_count must be nonnegative")

    @property
    def source_path(self) -> str:
        return self.source_dataset or f"{self.output_dir}/source.json"

    @property
    def target_path(self) -> str:
        return self.target_dataset or f"{self.output_dir}/target.json"

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        data = dict(data)
        _check_keys("pipeline", data, cls.__dataclass_fields__)
        kwargs: dict = {}
        for plain in (
            "output_dir",
            "source_dataset",
            "target_dataset",
            "metric",
            "mode",
            "few_shot_oracle_count",
        ):
            if plain in data:
                kwargs[plain] = data[plain]
        if "tasks" in data:
            kwargs["tasks"] = TaskGenConfig.from_dict(data["tasks"])
        if "gw" in data:
            gw_data = dict(data["gw"])
            _check_keys("gw", gw_data, GwConfig.__dataclass_fields__)
            kwargs["gw"] = GwConfig(**gw_data)
        if "rrl" in data:
            rrl_data = dict(data["rrl"])
            _check_keys("rrl", rrl_data, RrlConfig.__dataclass_fields__)
            kwargs["rrl"] = RrlConfig(**rrl_data)
        if "sampling" in data:
            kwargs["sampling"] = SamplingConfig.from_dict(data["sampling"])
        if "training_labels" in data:
            kwargs["training_labels"] = TrainingLabelConfig.from_dict(data["training_labels"])
        if data.get("sweep") is not None:
            kwargs["sweep"] = SweepConfig.from_dict(data["sweep"])
        return cls(**kwargs)

    def to_dict(self) -> dict:
        out = {
            "output_dir": self.output_dir,
            "source_dataset": self.source_dataset,
            "target_dataset": self.target_dataset,
            "metric": self.metric,
            "mode": self.mode,
            "few_shot_oracle_count": self.few_shot_oracle_count,
            "tasks": self.tasks.to_dict(),
            "gw": self.gw.to_dict(),
            "rrl": self.rrl.to_dict(),
            "sampling": self.sampling.to_dict(),
            "training_labels": self.training_labels.to_dict(),
        }
        if self.sweep is not None:
            out["sweep"] = self.sweep.to_dict()
        return out


def load_config(path) -> PipelineConfig:
    """Parse a JSON config file into a PipelineConfig."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config top level must be an object")
    return PipelineConfig.from_dict(data)
