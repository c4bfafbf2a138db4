from __future__ import annotations
import json
import math
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .errors import DomainError
from .utils import PathLike, atomic_write_text

Group = Literal["T", "C"]
FlipMode = Literal["same_majority_0", "same_majority_1", "mixed"]
LearnerKind = Literal["logistic", "tree", "forest"]

ALPHA_BENCHMARKED = (0.001, 0.01, 0.05, 0.1)


class DatasetSummary(BaseModel):
    """Weighted empirical rates of an RCT dataset."""
    model_config = ConfigDict(frozen=True)

    n: int = Field(ge=1)
    p: int = Field(ge=0)
    total_weight: float = Field(gt=0)
    share_T: float = Field(ge=0, le=1)
    share_C: float = Field(ge=0, le=1)
    rate_T: float = Field(ge=0, le=1)
    rate_C: float = Field(ge=0, le=1)
    majority_T: Literal[0, 1]
    majority_C: Literal[0, 1]

    @model_validator(mode="after")
    def _check(self) -> "DatasetSummary":
        if abs(self.share_T + self.share_C - 1.0) > 1e-12:
            raise ValueError("group shares must sum to 1")
        for rate, maj in ((self.rate_T, self.majority_T), (self.rate_C, self.majority_C)):
            if maj != majority_of(rate):
                raise ValueError("majority label inconsistent with class rate")
        return self

    def majority(self, group: Group) -> int:
        return self.majority_T if group == "T" else self.majority_C

    def majority_rate(self, group: Group) -> float:
        """P(Y = m^g | W = g)."""
        rate = self.rate_T if group == "T" else self.rate_C
        return rate if self.majority(group) == 1 else 1.0 - rate

    @property
    def positive_rate(self) -> float:
        return self.share_T * self.rate_T + self.share_C * self.rate_C


def majority_of(rate_1: float) -> int:
    # tie goes to class 0
    return 1 if rate_1 > 0.5 else 0


class SyntheticSpec(BaseModel):
    """Logistic two-arm generator: P(Y=1|x,C)=σ(β_c·x̃), P(Y=1|x,T)=σ((β_c+β_u)·x̃)."""
    p: int = Field(ge=0)
    beta_control: List[float]
    beta_uplift: List[float]
    treatment_share: float = Field(default=0.5, gt=0, lt=1)
    seed: int = Field(default=0, ge=0, lt=2**64)

    @model_validator(mode="after")
    def _check_lengths(self) -> "SyntheticSpec":
        for name in ("beta_control", "beta_uplift"):
            if len(getattr(self, name)) != self.p + 1:
                raise ValueError(f"{name} must have p+1={self.p + 1} entries (intercept first)")
        return self


class FlipPlan(BaseModel):
    """Per-group flip factors; a factor below one flips that class with probability 1-k."""
    model_config = ConfigDict(frozen=True)

    k0_C: float = Field(gt=0, le=1)
    k1_C: float = Field(gt=0, le=1)
    k0_T: float = Field(gt=0, le=1)
    k1_T: float = Field(gt=0, le=1)
    mode: FlipMode

    @model_validator(mode="after")
    def _check(self) -> "FlipPlan":
        if self.k0_C != 1.0 and self.k1_C != 1.0:
            raise ValueError("control group flips both classes")
        if self.k0_T != 1.0 and self.k1_T != 1.0:
            raise ValueError("treatment group flips both classes")
        if self.mode == "same_majority_0":
            ok = self.k0_C == self.k0_T and self.k1_C == self.k1_T == 1.0
        elif self.mode == "same_majority_1":
            ok = self.k1_C == self.k1_T and self.k0_C == self.k0_T == 1.0
        else:
            ok = (self.k1_T == self.k0_C and self.k0_T == self.k1_C == 1.0) or (
                self.k0_T == self.k1_C and self.k1_T == self.k0_C == 1.0
            )
        if not ok:
            raise ValueError(f"factors inconsistent with mode {self.mode}")
        return self

    @classmethod
    def identity(cls, mode: FlipMode = "same_majority_0") -> "FlipPlan":
        return cls(k0_C=1.0, k1_C=1.0, k0_T=1.0, k1_T=1.0, mode=mode)

    @classmethod
    def for_majorities(cls, k: float, majority_T: int, majority_C: int) -> "FlipPlan":
        """Plan flipping the majority class of each group with the shared factor k."""
        factors = {"k0_C": 1.0, "k1_C": 1.0, "k0_T": 1.0, "k1_T": 1.0}
        factors[f"k{majority_T}_T"] = k
        factors[f"k{majority_C}_C"] = k
        if majority_T == majority_C:
            mode: FlipMode = "same_majority_0" if majority_T == 0 else "same_majority_1"
        else:
            mode = "mixed"
        return cls(mode=mode, **factors)

    def factor(self, cls_: int, group: Group) -> float:
        return getattr(self, f"k{cls_}_{group}")

    def flipped_class(self, group: Group) -> Optional[int]:
        if self.factor(0, group) < 1.0:
            return 0
        if self.factor(1, group) < 1.0:
            return 1
        return None

    @property
    def k(self) -> float:
        return min(self.k0_C, self.k1_C, self.k0_T, self.k1_T)

    @property
    def is_identity(self) -> bool:
        return self.k == 1.0


class RecoveryTransform(BaseModel):
    """τ = scale·τ̆ + offset."""
    model_config = ConfigDict(frozen=True)

    scale: float = Field(gt=0)
    offset: float = 0.0

    @classmethod
    def from_plan(cls, plan: FlipPlan) -> "RecoveryTransform":
        # τ̆ = kτ + c_T - c_C, where c_g = 1-k when group g flips class 0, else 0
        k = plan.k
        const = 0.0
        if plan.flipped_class("T") == 0:
            const += 1.0 - k
        if plan.flipped_class("C") == 0:
            const -= 1.0 - k
        return cls(scale=1.0 / k, offset=-const / k)


class OptimizerConfig(BaseModel):
    tolerance: float = Field(default=1e-8, gt=0)
    max_iterations: int = Field(default=1000, ge=1)
    l2_penalty: float = Field(default=1.0, ge=0)


class LearnerConfig(BaseModel):
    """Base classifier settings; `name` follows the LR / DT_<alpha> / RF_<n>_<alpha> scheme."""
    kind: LearnerKind = "logistic"
    min_leaf_weight_frac: float = Field(default=0.01, gt=0, le=0.5)
    max_depth: int = Field(default=100, ge=0)
    n_trees: int = Field(default=10, ge=1)
    features_per_split: Optional[int] = Field(default=None, ge=1)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    seed: int = Field(default=0, ge=0, lt=2**64)
    n_jobs: int = 1

    @property
    def name(self) -> str:
        if self.kind == "logistic":
            return "LR"
        alpha = f"{self.min_leaf_weight_frac:g}"
        if self.kind == "tree":
            return f"DT_{alpha}"
        return f"RF_{self.n_trees}_{alpha}"

    @classmethod
    def from_name(cls, name: str, **overrides: Any) -> "LearnerConfig":
        parts = name.strip().split("_")
        try:
            if parts == ["LR"]:
                return cls(kind="logistic", **overrides)
            if parts[0] == "DT" and len(parts) == 2:
                return cls(kind="tree", min_leaf_weight_frac=float(parts[1]), **overrides)
            if parts[0] == "RF" and len(parts) == 3:
                return cls(kind="forest", n_trees=int(parts[1]), min_leaf_weight_frac=float(parts[2]), **overrides)
        except ValueError as e:
            raise ValueError(f"Invalid learner name '{name}': {e}") from e
        raise ValueError(f"Invalid learner name '{name}'. Expected LR, DT_<alpha> or RF_<n>_<alpha>")

    def resolved_features_per_split(self, p: int) -> int:
        if p == 0:
            return 0
        m = self.features_per_split if self.features_per_split is not None else math.ceil(math.sqrt(p))
        if m > p:
            raise DomainError(f"features_per_split={m} exceeds the number of features p={p}")
        return m


class UpliftCurve(BaseModel):
    fractions: List[float]
    gains: List[float]

    @model_validator(mode="after")
    def _check(self) -> "UpliftCurve":
        if len(self.fractions) != len(self.gains) or len(self.fractions) < 2:
            raise ValueError("fractions and gains must be aligned and hold at least two points")
        if self.fractions[0] != 0.0 or self.fractions[-1] != 1.0:
            raise ValueError("fraction grid must start at 0 and end at 1")
        if any(b <= a for a, b in zip(self.fractions, self.fractions[1:])):
            raise ValueError("fractions must be strictly increasing")
        if self.gains[0] != 0.0:
            raise ValueError("gain at fraction 0 must be 0")
        return self


class EvalReport(BaseModel):
    metamodel: str
    learner: str
    seed: int
    reps: int
    train_frac: float
    mauuc_values: List[float] = Field(default_factory=list)
    mean: float = float("nan")
    std: float = float("nan")
    curve: Optional[UpliftCurve] = None
    retries: int = 0
    absent_group_points: int = 0
    provenance: Dict[str, Any] = Field(default_factory=dict)
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None


class ClassifReport(BaseModel):
    learner: str
    correction: Literal["none", "flipping", "undersampling"]
    folds: int
    reps: int
    seed: int
    values: List[float] = Field(default_factory=list)
    mean: float = float("nan")
    std: float = float("nan")

    @field_validator("values")
    @classmethod
    def _in_unit(cls, v: List[float]) -> List[float]:
        if any(not (0.0 <= x <= 1.0) for x in v):
            raise ValueError("AUROC values must lie in [0, 1]")
        return v


def load_json(path: PathLike) -> Dict[str, Any]:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def save_json(path: PathLike, obj: Dict[str, Any]) -> None:
    atomic_write_text(path, json.dumps(obj, ensure_ascii=False, indent=2))
