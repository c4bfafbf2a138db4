"""
Uplift metamodels built from weighted base classifiers.

Three prediction structures exist:

- two_model: τ̆(x) = p̂_T(x) - p̂_C(x)
- ddr:       τ̆(x) = p̂_T(x, p̂_C(x)) - p̂_C(x)
- cvt:       τ̆(x) = 2·p̂(x) - 1, p̂ fitted on Ỹ = Y in T and 1-Y in C

Every `CateModel` maps τ̆ through its `RecoveryTransform` and clamps to
[-1, 1]. The provenance dict records the full training-time transform chain
(treatment balancing factor, undersampling factor, flip plan, recovery).
"""
from __future__ import annotations
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Literal, Optional

import numpy as np

from .errors import FlipRefusalError, InputError
from .learners import ConstantModel, ProbModel, fit_prob_model, model_from_dict
from .rct_data import RctDataset, summarize
from .rebalance import (
    compute_flip_factor,
    flip_expand_weights,
    recover_tau,
    transformed_response_rates,
    treatment_balance_factor,
    treatment_balance_weights,
    undersample_weights,
)
from .schema import LearnerConfig, RecoveryTransform, load_json, save_json
from .utils import PathLike

logger = logging.getLogger(__name__)

CATE_FORMAT = "flipuplift.cate_model"
CATE_VERSION = 1

Structure = Literal["two_model", "ddr", "cvt"]

IDENTITY = RecoveryTransform(scale=1.0, offset=0.0)


@dataclass(frozen=True, eq=False)
class CateModel:
    kind: str
    structure: Structure
    models: Dict[str, ProbModel]
    transform: RecoveryTransform = IDENTITY
    provenance: Dict[str, Any] = field(default_factory=dict)

    @property
    def display_name(self) -> str:
        return display_name(self.kind)

    def raw_predict(self, features: np.ndarray) -> np.ndarray:
        """τ̆(x) before recovery and clamping."""
        if self.structure == "cvt":
            return 2.0 * self.models["single"].predict_proba(features) - 1.0
        p_c = self.models["control"].predict_proba(features)
        if self.structure == "ddr":
            x = np.asarray(features, dtype=float)
            x = x.reshape(-1, 1) if x.ndim == 1 else x
            p_t = self.models["treatment"].predict_proba(np.hstack([x, p_c[:, None]]))
        else:
            p_t = self.models["treatment"].predict_proba(features)
        return p_t - p_c

    def predict_cate(self, features: np.ndarray) -> np.ndarray:
        return np.atleast_1d(recover_tau(self.raw_predict(features), self.transform))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "format": CATE_FORMAT,
            "version": CATE_VERSION,
            "kind": self.kind,
            "structure": self.structure,
            "models": {role: m.to_dict() for role, m in self.models.items()},
            "transform": self.transform.model_dump(),
            "provenance": self.provenance,
        }


# ---------------------------------------------------------------- helpers


def _fit_arm(arm: RctDataset, config: LearnerConfig, features: Optional[np.ndarray] = None) -> ProbModel:
    x = arm.features if features is None else features
    w1 = float((arm.weight * arm.response).sum())
    if w1 <= 0.0 or w1 >= arm.total_weight:
        logger.warning("arm holds a single class (rate %.3f); using a constant model", w1 / arm.total_weight)
        return ConstantModel.fit(x, arm.response, arm.weight)
    return fit_prob_model(x, arm.response, arm.weight, config)


def _cvt_response(dataset: RctDataset) -> np.ndarray:
    return np.where(dataset.treated, dataset.response, 1 - dataset.response)


def _fit_cvt_core(dataset: RctDataset, config: LearnerConfig, provenance: Dict[str, Any]) -> ProbModel:
    l, group = treatment_balance_factor(summarize(dataset))
    balanced = treatment_balance_weights(dataset)
    provenance.setdefault("balance_factor", l)
    provenance.setdefault("balance_group", group)
    y_tilde = _cvt_response(balanced)
    rate_t, rate_c = transformed_response_rates(balanced)
    provenance["cvt_rate_T"] = rate_t
    provenance["cvt_rate_C"] = rate_c
    single = balanced.replace(response=y_tilde)
    return _fit_arm(single, config)


def _base_provenance(kind: str, config: LearnerConfig) -> Dict[str, Any]:
    return {"metamodel": display_name(kind), "learner": config.name}


# ---------------------------------------------------------------- metamodels


def fit_two_model(dataset: RctDataset, learner_config: LearnerConfig) -> CateModel:
    summarize(dataset)
    models = {
        "treatment": _fit_arm(dataset.arm(True), learner_config),
        "control": _fit_arm(dataset.arm(False), learner_config),
    }
    return CateModel("two_model", "two_model", models, IDENTITY, _base_provenance("two_model", learner_config))


def fit_ddr(dataset: RctDataset, learner_config: LearnerConfig) -> CateModel:
    summarize(dataset)
    control = _fit_arm(dataset.arm(False), learner_config)
    treated = dataset.arm(True)
    extra = control.predict_proba(treated.features)[:, None]
    treatment = _fit_arm(treated, learner_config, np.hstack([treated.features, extra]))
    models = {"treatment": treatment, "control": control}
    return CateModel("ddr", "ddr", models, IDENTITY, _base_provenance("ddr", learner_config))


def fit_cvt(dataset: RctDataset, learner_config: LearnerConfig) -> CateModel:
    provenance = _base_provenance("cvt", learner_config)
    model = _fit_cvt_core(dataset, learner_config, provenance)
    return CateModel("cvt", "cvt", {"single": model}, IDENTITY, provenance)


def fit_stratified_cvt(dataset: RctDataset, learner_config: LearnerConfig) -> CateModel:
    """
    CVT after undersampling the majority class of both groups with the shared factor k.

    Groups are balanced before k is computed; the undersampled weights are
    balanced again by the CVT step. No correction of τ̆ is applied.
    """
    provenance = _base_provenance("stratified_cvt", learner_config)
    l, group = treatment_balance_factor(summarize(dataset))
    provenance["balance_factor"], provenance["balance_group"] = l, group
    balanced = treatment_balance_weights(dataset)
    summary = summarize(balanced)
    k = compute_flip_factor(summary)[0].k
    provenance["undersample_factor"] = k
    provenance["undersample_classes"] = {"T": summary.majority_T, "C": summary.majority_C}
    if summary.majority_T == summary.majority_C:
        weighted = undersample_weights(balanced, k, summary.majority_T)
    else:
        logger.warning("majority classes differ between groups; undersampling each group's own majority")
        weighted = undersample_weights(balanced, k, summary.majority_T, group="T")
        weighted = undersample_weights(weighted, k, summary.majority_C, group="C")
    model = _fit_cvt_core(weighted, learner_config, provenance)
    return CateModel("stratified_cvt", "cvt", {"single": model}, IDENTITY, provenance)


def fit_flipped_cvt(dataset: RctDataset, learner_config: LearnerConfig) -> CateModel:
    """
    CVT on the class-flipped response, with k making Ỹ̆ independent of the group.

    Order: balance groups, flip the common majority class, CVT-transform, fit.
    τ̂ = (2·p̂ - 1) / k.
    """
    provenance = _base_provenance("flipped_cvt", learner_config)
    l, group = treatment_balance_factor(summarize(dataset))
    provenance["balance_factor"], provenance["balance_group"] = l, group
    balanced = treatment_balance_weights(dataset)
    summary = summarize(balanced)
    if summary.majority_T != summary.majority_C:
        raise FlipRefusalError(
            "FlippedCVT needs the same majority class in both groups "
            f"(treatment: {summary.majority_T}, control: {summary.majority_C}); with differing majorities "
            "the dependence between the transformed response and the group only vanishes as k -> 0"
        )
    plan, transform = compute_flip_factor(summary)
    provenance["plan"] = plan.model_dump()
    provenance["transform"] = transform.model_dump()
    flipped = flip_expand_weights(balanced, plan)
    model = _fit_cvt_core(flipped, learner_config, provenance)
    gap = abs(provenance["cvt_rate_T"] - provenance["cvt_rate_C"])
    logger.info("flipped CVT: k=%.6f, training independence gap %.2e", plan.k, gap)
    return CateModel("flipped_cvt", "cvt", {"single": model}, transform, provenance)


def fit_flipped(dataset: RctDataset, inner: Literal["two_model", "ddr"], learner_config: LearnerConfig) -> CateModel:
    """Flip the majority classes, fit `inner`, and recover τ with the plan's linear transform."""
    if inner not in ("two_model", "ddr"):
        raise InputError(f"flipped wrapper supports two_model and ddr, not {inner}")
    plan, transform = compute_flip_factor(summarize(dataset))
    flipped = flip_expand_weights(dataset, plan)
    inner_model = METAMODELS[inner][1](flipped, learner_config)
    kind = f"flipped_{inner}"
    provenance = _base_provenance(kind, learner_config)
    provenance["plan"] = plan.model_dump()
    provenance["transform"] = transform.model_dump()
    return CateModel(kind, inner_model.structure, inner_model.models, transform, provenance)


def _flipped(inner: Literal["two_model", "ddr"]) -> Callable[[RctDataset, LearnerConfig], CateModel]:
    def fit(dataset: RctDataset, learner_config: LearnerConfig) -> CateModel:
        return fit_flipped(dataset, inner, learner_config)
    return fit


METAMODELS: Dict[str, tuple] = {
    "two_model": ("TwoModel", fit_two_model),
    "ddr": ("DDR", fit_ddr),
    "cvt": ("CVT", fit_cvt),
    "stratified_cvt": ("StratifiedCVT", fit_stratified_cvt),
    "flipped_cvt": ("FlippedCVT", fit_flipped_cvt),
    "flipped_two_model": ("Flipped(TwoModel)", _flipped("two_model")),
    "flipped_ddr": ("Flipped(DDR)", _flipped("ddr")),
}


def display_name(kind: str) -> str:
    return METAMODELS[kind][0] if kind in METAMODELS else kind


def resolve_kind(name: str) -> str:
    """Accept either a kind (`flipped_cvt`) or its display name (`FlippedCVT`)."""
    key = name.strip()
    if key in METAMODELS:
        return key
    for kind, (label, _) in METAMODELS.items():
        if label.lower() == key.lower():
            return kind
    raise InputError(f"Unknown metamodel: {name}. Must be one of: {list(METAMODELS)}")


def fit_metamodel(kind: str, dataset: RctDataset, learner_config: LearnerConfig) -> CateModel:
    kind = resolve_kind(kind)
    logger.info("fitting %s with %s on n=%d", display_name(kind), learner_config.name, dataset.n)
    return METAMODELS[kind][1](dataset, learner_config)


# ---------------------------------------------------------------- persistence


def cate_model_from_dict(state: Dict[str, Any]) -> CateModel:
    if state.get("format") != CATE_FORMAT or state.get("version") != CATE_VERSION:
        raise InputError(f"unsupported CATE model format {state.get('format')} v{state.get('version')}")
    return CateModel(
        kind=state["kind"],
        structure=state["structure"],
        models={role: model_from_dict(m) for role, m in state["models"].items()},
        transform=RecoveryTransform(**state["transform"]),
        provenance=dict(state.get("provenance", {})),
    )


def save_cate_model(model: CateModel, path: PathLike) -> None:
    save_json(path, model.to_dict())


def load_cate_model(path: PathLike) -> CateModel:
    return cate_model_from_dict(load_json(path))


__all__ = [
    "CateModel",
    "METAMODELS",
    "fit_two_model",
    "fit_ddr",
    "fit_cvt",
    "fit_stratified_cvt",
    "fit_flipped_cvt",
    "fit_flipped",
    "fit_metamodel",
    "display_name",
    "resolve_kind",
    "save_cate_model",
    "load_cate_model",
]
