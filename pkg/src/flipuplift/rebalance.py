"""
Distribution-modifying transforms: class flipping, undersampling weights and
treatment-group balancing, plus the analytic maps used to undo them.

Flipping class c with factor k relabels a (1-k) share of class-c records to
1-c, which scales P(Y=c|x) by exactly k. The deterministic form replaces each
affected record with two weighted copies (k on the original label, 1-k on the
flipped one); the stochastic form draws U ~ Uniform[0,1] per record and flips
when U > k. Undersampling multiplies the weights of one class by k, which
distorts conditional probabilities non-linearly (see `undersampled_prob`).
"""
from __future__ import annotations
import logging
import math
from typing import Optional, Tuple, Union

import numpy as np

from .errors import DomainError, SummaryError
from .rct_data import RctDataset, summarize
from .schema import DatasetSummary, FlipPlan, Group, RecoveryTransform, majority_of

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


# ---------------------------------------------------------------- factors


def compute_flip_factor(summary: DatasetSummary) -> Tuple[FlipPlan, RecoveryTransform]:
    """k = 1 / (P(Y=m^C|C) + P(Y=m^T|T)), flipping the majority class of each group."""
    denom = summary.majority_rate("C") + summary.majority_rate("T")
    k = 1.0 / denom
    if k >= 1.0:
        k = 1.0
    plan = FlipPlan.for_majorities(k, summary.majority_T, summary.majority_C)
    transform = RecoveryTransform.from_plan(plan)
    logger.info("flip factor k=%.6f mode=%s", k, plan.mode)
    return plan, transform


def flip_probability(p1, k0, k1):
    """P(Y̆=1|x) for P(Y=1|x)=p1 under class factors (k0, k1)."""
    return p1 * k1 + (1 - p1) * (1 - k0)


def recover_tau(breve_tau: ArrayLike, transform: RecoveryTransform) -> ArrayLike:
    tau = np.clip(transform.scale * np.asarray(breve_tau, dtype=float) + transform.offset, -1.0, 1.0)
    return float(tau) if tau.ndim == 0 else tau


def undersampled_prob(p0: ArrayLike, k: float) -> ArrayLike:
    """P*(Y=0|x) after keeping a share k of class 0: k·p0 / ((1-p0) + k·p0)."""
    if not 0.0 < k <= 1.0:
        raise DomainError("k must lie in (0, 1]")
    p0 = np.asarray(p0, dtype=float)
    out = k * p0 / ((1.0 - p0) + k * p0)
    return float(out) if out.ndim == 0 else out


def classification_prob_recovery(p_breve: ArrayLike, k: float) -> ArrayLike:
    """Undo a flip of one class: P(Y=c|x) = P(Y̆=c|x) / k, clamped to [0, 1]."""
    if not 0.0 < k <= 1.0:
        raise DomainError("k must lie in (0, 1]")
    out = np.clip(np.asarray(p_breve, dtype=float) / k, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def log_odds_dependence(a: float, b: float, k: float) -> float:
    """
    |log odds ratio| between the flipped CVT response and the group, mixed majorities.

    a = P*(Y=1|T), b = P*(Y=0|C), with class 1 flipped in T and class 0 in C,
    both by k. Zero iff a == b; strictly increasing in k otherwise.
    """
    if not (0.0 < a < 1.0 and 0.0 < b < 1.0):
        raise DomainError(f"a and b must lie in (0, 1), got a={a}, b={b}")
    if not 0.0 < k < 1.0:
        raise DomainError(f"k must lie in (0, 1), got {k}")
    if k * a >= 1.0 or k * b >= 1.0:
        raise DomainError("k·a and k·b must stay below 1")
    return abs(math.log(a / (1.0 - k * a)) - math.log(b / (1.0 - k * b)))


def classification_flip_factor(response: np.ndarray, weights: Optional[np.ndarray] = None) -> Tuple[float, int]:
    """Factor 1 / (2·P(Y=m)) that balances the classes when the majority m is flipped."""
    rate_1, majority = _class_rate(response, weights)
    p_major = rate_1 if majority == 1 else 1.0 - rate_1
    return min(1.0, 1.0 / (2.0 * p_major)), majority


def classification_undersample_factor(response: np.ndarray, weights: Optional[np.ndarray] = None) -> Tuple[float, int]:
    """Majority weight factor P(minority) / P(majority) giving equal class weights."""
    rate_1, majority = _class_rate(response, weights)
    p_major = rate_1 if majority == 1 else 1.0 - rate_1
    if p_major >= 1.0:
        raise DomainError("single-class data cannot be rebalanced")
    return (1.0 - p_major) / p_major, majority


def _class_rate(response: np.ndarray, weights: Optional[np.ndarray]) -> Tuple[float, int]:
    response = np.asarray(response)
    w = np.ones(response.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    rate_1 = float((w * response).sum() / w.sum())
    return rate_1, majority_of(rate_1)


# ---------------------------------------------------------------- flipping


def _record_factors(dataset: RctDataset, plan: FlipPlan) -> np.ndarray:
    y0 = dataset.response == 0
    k_t = np.where(y0, plan.k0_T, plan.k1_T)
    k_c = np.where(y0, plan.k0_C, plan.k1_C)
    return np.where(dataset.treated, k_t, k_c)


def _expand(k_rec: np.ndarray, response: np.ndarray, weight: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Source index, response and weight after splitting every record with k < 1 in two."""
    split = k_rec < 1.0
    counts = 1 + split.astype(np.int64)
    index = np.repeat(np.arange(k_rec.shape[0]), counts)
    dup = np.zeros(index.shape[0], dtype=bool)
    dup[np.cumsum(counts)[split] - 1] = True
    y = response[index].copy()
    y[dup] = 1 - y[dup]
    w_src = weight[index]
    kept = w_src * k_rec[index]
    w = np.where(dup, w_src - kept, kept)
    return index, y, w


def flip_expand_weights(dataset: RctDataset, plan: FlipPlan) -> RctDataset:
    """Deterministic flip: (x, c, w) -> (x, c, w·k) and (x, 1-c, w·(1-k)) for flipped classes."""
    if plan.is_identity:
        return dataset
    k_rec = _record_factors(dataset, plan)
    index, y, w = _expand(k_rec, dataset.response, dataset.weight)
    logger.debug("flip expansion: %d -> %d records", dataset.n, index.shape[0])
    return RctDataset(dataset.features[index], y, dataset.treatment[index], w, dataset.feature_names)


def flip_expand_arrays(
    features: np.ndarray, response: np.ndarray, weights: np.ndarray, k: float, target_class: int
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Deterministic flip of `target_class` for ordinary (single-group) classification data."""
    response = np.asarray(response)
    k_rec = np.where(response == target_class, k, 1.0)
    index, y, w = _expand(k_rec, response, np.asarray(weights, dtype=float))
    return np.asarray(features)[index], y, w


def flip_stochastic(dataset: RctDataset, plan: FlipPlan, seed: int) -> RctDataset:
    """Random flip: a record of a flipped class keeps its label iff U <= k."""
    u = np.random.default_rng(seed).random(dataset.n)
    k_rec = _record_factors(dataset, plan)
    flip = u > k_rec
    y = np.where(flip, 1 - dataset.response, dataset.response)
    return dataset.replace(response=y)


# ---------------------------------------------------------------- weighting


def undersample_weights(dataset: RctDataset, k: float, target_class: int, group: Optional[Group] = None) -> RctDataset:
    """Multiply the weights of `target_class` records (optionally within one group) by k."""
    if not 0.0 < k <= 1.0:
        raise DomainError("k must lie in (0, 1]")
    if k == 1.0:
        return dataset
    mask = dataset.response == target_class
    if group is not None:
        mask &= dataset.treated if group == "T" else dataset.control
    w = np.where(mask, dataset.weight * k, dataset.weight)
    return dataset.replace(weight=w)


def treatment_balance_factor(summary: DatasetSummary) -> Tuple[float, Optional[Group]]:
    """(l, group): multiplying the larger group's weights by l equalises the group shares."""
    if summary.share_T <= 0.0 or summary.share_C <= 0.0:
        raise SummaryError("both groups must carry positive weight")
    if abs(summary.share_T - summary.share_C) <= 1e-12:
        return 1.0, None
    if summary.share_T > summary.share_C:
        return summary.share_C / summary.share_T, "T"
    return summary.share_T / summary.share_C, "C"


def treatment_balance_weights(dataset: RctDataset) -> RctDataset:
    l, group = treatment_balance_factor(summarize(dataset))
    if group is None:
        return dataset
    mask = dataset.treated if group == "T" else dataset.control
    logger.info("treatment balancing: l=%.6f on group %s", l, group)
    return dataset.replace(weight=np.where(mask, dataset.weight * l, dataset.weight))


def transformed_response_rates(dataset: RctDataset) -> Tuple[float, float]:
    """Weighted P(Ỹ=1|T), P(Ỹ=1|C) for the CVT response Ỹ = Y in T, 1-Y in C."""
    y_tilde = np.where(dataset.treated, dataset.response, 1 - dataset.response)
    w = dataset.weight
    t, c = dataset.treated, dataset.control
    return float((w * y_tilde)[t].sum() / w[t].sum()), float((w * y_tilde)[c].sum() / w[c].sum())
