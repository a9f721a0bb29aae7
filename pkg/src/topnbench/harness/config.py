"""Experiment configuration loaded from YAML or JSON."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from ..corpus import FORMATS
from ..models import REGISTRY
from ..models.base import ConfigurationError
from .presets import preset

OUTPUT_ENV = "TOPNBENCH_OUTPUT_DIR"


@dataclass
class DatasetSpec:
    path: str
    format: str = "tsv"
    threshold: float | None = 3
    p: int = 1
    name: str = ""
    header: bool = False
    columns: dict[str, int] | None = None
    unary: bool | None = None

    def __post_init__(self):
        if self.format not in FORMATS:
            raise ConfigurationError(f"unknown format {self.format!r}; expected one of {sorted(FORMATS)}")
        if self.p < 1:
            raise ConfigurationError("p must be >= 1")


@dataclass
class AlgorithmSpec:
    name: str
    params: dict[str, Any] = field(default_factory=dict)
    preset: str | None = None

    def resolved(self) -> dict[str, Any]:
        """Preset values overlaid with explicit ``params``."""
        out = preset(self.name, self.preset) if self.preset else {}
        out.update(self.params)
        return out


@dataclass
class ExperimentConfig:
    dataset: DatasetSpec
    algorithms: list[AlgorithmSpec]
    cutoffs: list[int] = field(default_factory=lambda: [10, 20])
    repeats: int = 5
    test_fraction: float = 0.2
    seed: int = 42
    output_dir: str = "results"

    def __post_init__(self):
        if not self.cutoffs or any(k < 1 for k in self.cutoffs):
            raise ConfigurationError("cutoffs must be positive")
        if self.repeats < 1:
            raise ConfigurationError("repeats must be >= 1")
        for a in self.algorithms:
            if a.name not in REGISTRY:
                raise ConfigurationError(f"unknown algorithm {a.name!r}")
            a.resolved()  # raises on a missing preset

    @property
    def output_path(self) -> Path:
        return Path(os.environ.get(OUTPUT_ENV) or self.output_dir)

    @classmethod
    def from_dict(cls, doc: dict, base_dir: Path | None = None) -> ExperimentConfig:
        doc = dict(doc)
        try:
            ds = dict(doc.pop("dataset"))
        except KeyError:
            raise ConfigurationError("config needs a 'dataset' section") from None
        if base_dir is not None and not Path(ds["path"]).is_absolute():
            ds["path"] = str(base_dir / ds["path"])
        algs = []
        for a in doc.pop("algorithms", []):
            a = {"name": a} if isinstance(a, str) else dict(a)
            algs.append(AlgorithmSpec(a.pop("name"), dict(a.pop("params", None) or {}), a.pop("preset", None)))
            if a:
                raise ConfigurationError(f"unknown algorithm keys {sorted(a)}")
        try:
            return cls(dataset=DatasetSpec(**ds), algorithms=algs, **doc)
        except TypeError as e:
            raise ConfigurationError(f"bad config: {e}") from None

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        path = Path(path)
        text = path.read_text()
        doc = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
        if not isinstance(doc, dict):
            raise ConfigurationError(f"{path}: top level must be a mapping")
        return cls.from_dict(doc, path.parent)
