from __future__ import annotations
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Literal, Optional, Type, TypeVar

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .encodings import SCHEMAS
from .errors import ConfigError, InputError
from .metamodels import resolve_kind
from .schema import LearnerConfig, OptimizerConfig, SyntheticSpec
from .utils import PathLike, atomic_write_text

logger = logging.getLogger(__name__)


class _FlatConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    reps: int = Field(default=100, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)
    out_dir: str = "results"
    n_jobs: int = 1
    learners: List[str] = Field(default_factory=lambda: ["LR"])
    max_depth: int = Field(default=100, ge=0)
    features_per_split: Optional[int] = Field(default=None, ge=1)
    l2_penalty: float = Field(default=1.0, ge=0)
    minority_rate: float = Field(default=1.0, gt=0, le=1)

    @field_validator("learners")
    @classmethod
    def _check_learners(cls, v: List[str]) -> List[str]:
        if not v:
            raise ValueError("at least one learner is required")
        for name in v:
            LearnerConfig.from_name(name)
        return v

    def learner_configs(self) -> List[LearnerConfig]:
        opt = OptimizerConfig(l2_penalty=self.l2_penalty)
        return [
            LearnerConfig.from_name(
                name,
                max_depth=self.max_depth,
                features_per_split=self.features_per_split,
                optimizer=opt,
                seed=self.seed,
            )
            for name in self.learners
        ]


class BenchConfig(_FlatConfig):
    """
    Uplift benchmark grid: every metamodel × learner cell runs repeated holdout.

    The data source is either `dataset` (+ `schema`, `target`) or the synthetic
    generator (`synthetic_n` with the logistic coefficients).
    """

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    dataset: Optional[str] = None
    schema_name: str = Field(default="generic", alias="schema")
    target: Optional[str] = None
    synthetic_n: Optional[int] = Field(default=None, ge=1)
    synthetic_p: int = Field(default=0, ge=0)
    beta_control: List[float] = Field(default_factory=list)
    beta_uplift: List[float] = Field(default_factory=list)
    treatment_share: float = Field(default=0.5, gt=0, lt=1)
    max_rows: Optional[int] = Field(default=None, ge=2)
    metamodels: List[str] = Field(default_factory=lambda: ["cvt", "stratified_cvt", "flipped_cvt"])
    train_frac: float = Field(default=0.7, gt=0, lt=1)
    grid_size: int = Field(default=101, ge=2)

    @field_validator("metamodels")
    @classmethod
    def _check_metamodels(cls, v: List[str]) -> List[str]:
        if not v:
            raise ValueError("at least one metamodel is required")
        try:
            return [resolve_kind(name) for name in v]
        except InputError as e:
            raise ValueError(str(e)) from e

    @field_validator("schema_name")
    @classmethod
    def _check_schema(cls, v: str) -> str:
        if v != "generic" and v not in SCHEMAS:
            raise ValueError(f"unknown schema {v}; choose generic or one of {list(SCHEMAS)}")
        return v

    @model_validator(mode="after")
    def _one_source(self) -> "BenchConfig":
        if (self.dataset is None) == (self.synthetic_n is None):
            raise ValueError("set exactly one of dataset or synthetic_n")
        if self.synthetic_n is not None:
            self.synthetic_spec()
        return self

    def synthetic_spec(self) -> SyntheticSpec:
        return SyntheticSpec(
            p=self.synthetic_p,
            beta_control=self.beta_control,
            beta_uplift=self.beta_uplift,
            treatment_share=self.treatment_share,
            seed=self.seed,
        )


class ClassifConfig(_FlatConfig):
    """Imbalanced classification experiment: learners × corrections under repeated stratified CV."""

    dataset: Optional[str] = None
    target: str = "y"
    n: int = Field(default=1000, ge=2)
    n_minority: int = Field(default=20, ge=1)
    n_features: int = Field(default=20, ge=1)
    n_informative: int = Field(default=2, ge=1)
    n_redundant: int = Field(default=2, ge=0)
    class_sep: float = Field(default=1.0, gt=0)
    corrections: List[Literal["none", "flipping", "undersampling"]] = Field(
        default_factory=lambda: ["none", "flipping", "undersampling"]
    )
    folds: int = Field(default=5, ge=2)

    @model_validator(mode="after")
    def _check_sizes(self) -> "ClassifConfig":
        if self.dataset is None and not self.n_minority < self.n:
            raise ValueError("n_minority must be smaller than n")
        if self.n_informative + self.n_redundant > self.n_features:
            raise ValueError("n_informative + n_redundant exceeds n_features")
        return self


C = TypeVar("C", bound=_FlatConfig)


def parse_overrides(pairs: Iterable[str]) -> Dict[str, Any]:
    """`key=value` strings; values are parsed as YAML scalars or flow lists."""
    out: Dict[str, Any] = {}
    for pair in pairs:
        key, sep, raw = pair.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"override '{pair}' is not key=value")
        try:
            out[key.strip()] = yaml.safe_load(raw) if raw.strip() else None
        except yaml.YAMLError as e:
            raise ConfigError(f"override '{pair}': {e}") from e
    return out


def load_config(path: PathLike, model: Type[C], overrides: Optional[Dict[str, Any]] = None) -> C:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            obj = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: {e}") from e
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: expected a key: value mapping")
    nested = [k for k, v in obj.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(f"{path}: config must be flat, nested keys: {nested}")
    obj.update(overrides or {})
    try:
        return model.model_validate(obj)
    except ValidationError as e:
        raise ConfigError(f"{path}: {e}") from e


def dump_config(config: _FlatConfig, path: Optional[PathLike] = None) -> str:
    text = yaml.safe_dump(config.model_dump(by_alias=True), sort_keys=False, default_flow_style=None)
    if path is not None:
        atomic_write_text(path, text)
    return text
