"""
Uplift curves, mAUUC, weighted AUROC and the two evaluation protocols.

Curve convention: records are ranked by τ̂ (descending, ties kept in original
order); at fraction ρ the top ⌈ρn⌉ records give

    g(ρ) = ρ · (R̄_T(ρ) - R̄_C(ρ))

with R̄_g the weighted response rate of group g inside the top set (0 when the
group is absent there). The diagonal from (0, 0) to (1, g(1)) is the random
targeting baseline, and mAUUC = 1000 · (area under curve - g(1)/2).
"""
from __future__ import annotations
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.integrate import trapezoid
from sklearn.metrics import roc_auc_score
from sklearn.model_selection import StratifiedKFold

from .errors import DegenerateFitError, InputError
from .learners import fit_prob_model
from .metamodels import display_name, fit_metamodel, resolve_kind
from .rct_data import RctDataset, summarize
from .rebalance import (
    classification_flip_factor,
    classification_prob_recovery,
    classification_undersample_factor,
    flip_expand_arrays,
)
from .schema import ClassifReport, EvalReport, LearnerConfig, UpliftCurve
from .utils import PathLike, atomic_write_text, derive_seed, make_rng, sample_std

logger = logging.getLogger(__name__)

DEFAULT_GRID = 101
MAX_SPLIT_RETRIES = 20

Correction = Literal["none", "flipping", "undersampling"]


# ---------------------------------------------------------------- curves


def _curve(tau_hat, dataset: RctDataset, grid_size: int) -> Tuple[UpliftCurve, int]:
    tau_hat = np.asarray(tau_hat, dtype=float)
    if tau_hat.shape != (dataset.n,):
        raise InputError(f"tau_hat has shape {tau_hat.shape}, dataset has {dataset.n} records")
    if not np.isfinite(tau_hat).all():
        raise InputError("tau_hat contains non-finite values")
    if grid_size < 2:
        raise InputError("grid_size must be at least 2")
    summarize(dataset)
    order = np.argsort(-tau_hat, kind="stable")
    w = dataset.weight[order]
    y = dataset.response[order]
    t = dataset.treated[order]
    cw_t = np.cumsum(np.where(t, w, 0.0))
    cy_t = np.cumsum(np.where(t, w * y, 0.0))
    cw_c = np.cumsum(np.where(t, 0.0, w))
    cy_c = np.cumsum(np.where(t, 0.0, w * y))

    n, last = dataset.n, grid_size - 1
    fractions = [i / last for i in range(grid_size)]
    gains = [0.0]
    absent = 0
    for i in range(1, grid_size):
        m = -(-i * n // last) - 1
        if cw_t[m] > 0 and cw_c[m] > 0:
            diff = cy_t[m] / cw_t[m] - cy_c[m] / cw_c[m]
        else:
            absent += 1
            r_t = cy_t[m] / cw_t[m] if cw_t[m] > 0 else 0.0
            r_c = cy_c[m] / cw_c[m] if cw_c[m] > 0 else 0.0
            diff = r_t - r_c
        gains.append(float(fractions[i] * diff))
    return UpliftCurve(fractions=fractions, gains=gains), absent


def uplift_curve(tau_hat, dataset: RctDataset, grid_size: int = DEFAULT_GRID) -> UpliftCurve:
    return _curve(tau_hat, dataset, grid_size)[0]


def mauuc(curve: UpliftCurve) -> float:
    area = trapezoid(curve.gains, curve.fractions)
    return float(1000.0 * (area - curve.gains[-1] / 2.0))


def average_curves(curves: Sequence[UpliftCurve]) -> UpliftCurve:
    if not curves:
        raise InputError("no curves to average")
    fractions = curves[0].fractions
    if any(c.fractions != fractions for c in curves):
        raise InputError("curves must share the same fraction grid")
    gains = np.mean([c.gains for c in curves], axis=0)
    return UpliftCurve(fractions=list(fractions), gains=[float(g) for g in gains])


# ---------------------------------------------------------------- holdout


def _split(dataset: RctDataset, train_frac: float, seed: int, rep: int, attempt: int):
    perm = make_rng(seed, rep, attempt).permutation(dataset.n)
    n_train = min(max(int(round(train_frac * dataset.n)), 1), dataset.n - 1)
    return dataset.take(np.sort(perm[:n_train])), dataset.take(np.sort(perm[n_train:]))


def _degenerate(train: RctDataset, test: RctDataset) -> Optional[str]:
    for name, part in (("training", train), ("test", test)):
        w = part.weight
        if not (w[part.treated].sum() > 0 and w[part.control].sum() > 0):
            return f"a group is missing from the {name} set"
    w1 = float((train.weight * train.response).sum())
    if not 0.0 < w1 < train.total_weight:
        return "a class is missing from the training set"
    return None


def _holdout_rep(dataset, kind, learner_config, train_frac, seed, rep, grid_size) -> Dict[str, Any]:
    retries = 0
    for attempt in range(MAX_SPLIT_RETRIES + 1):
        train, test = _split(dataset, train_frac, seed, rep, attempt)
        reason = _degenerate(train, test)
        if reason is None:
            break
        retries += 1
        logger.warning("repetition %d: %s, retrying with the next derived seed", rep, reason)
    else:
        raise DegenerateFitError(f"repetition {rep}: no valid split after {MAX_SPLIT_RETRIES} retries")
    config = learner_config.model_copy(update={"seed": derive_seed(learner_config.seed, seed, rep)})
    model = fit_metamodel(kind, train, config)
    curve, absent = _curve(model.predict_cate(test.features), test, grid_size)
    if absent:
        logger.warning("repetition %d: %d curve points with a group absent from the top set", rep, absent)
    return {"mauuc": mauuc(curve), "curve": curve, "retries": retries, "absent": absent,
            "provenance": model.provenance}


def repeated_holdout(
    dataset: RctDataset,
    kind: str,
    learner_config: LearnerConfig,
    reps: int = 100,
    train_frac: float = 0.7,
    seed: int = 0,
    grid_size: int = DEFAULT_GRID,
    n_jobs: int = 1,
) -> EvalReport:
    """
    Repeated random train/test holdout of one (metamodel, learner) cell.

    Repetition r splits with seeds derived from (seed, r, attempt); a split that
    loses a group or a class from training (or a group from test) is redrawn
    and counted in `retries`.
    """
    if reps < 1:
        raise InputError("reps must be at least 1")
    if not 0.0 < train_frac < 1.0:
        raise InputError("train_frac must lie in (0, 1)")
    kind = resolve_kind(kind)
    results = Parallel(n_jobs=n_jobs)(
        delayed(_holdout_rep)(dataset, kind, learner_config, train_frac, seed, rep, grid_size) for rep in range(reps)
    )
    values = [r["mauuc"] for r in results]
    report = EvalReport(
        metamodel=display_name(kind),
        learner=learner_config.name,
        seed=seed,
        reps=reps,
        train_frac=train_frac,
        mauuc_values=values,
        mean=float(np.mean(values)),
        std=sample_std(values),
        curve=average_curves([r["curve"] for r in results]),
        retries=sum(r["retries"] for r in results),
        absent_group_points=sum(r["absent"] for r in results),
        provenance=results[0]["provenance"],
    )
    logger.info("%s/%s: mAUUC %.3f ± %.3f over %d reps", report.metamodel, report.learner, report.mean, report.std, reps)
    return report


# ---------------------------------------------------------------- classification


def weighted_auroc(scores, labels, weights=None) -> float:
    """Weighted ROC AUC; tied scores count one half."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    w = np.ones(scores.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    if not (scores.shape == labels.shape == w.shape) or scores.ndim != 1:
        raise InputError("scores, labels and weights must be aligned vectors")
    pos = labels == 1
    if float(w[pos].sum()) <= 0 or float(w[~pos].sum()) <= 0:
        raise InputError("AUROC needs both classes with positive weight")
    return float(roc_auc_score(pos.astype(np.int8), scores, sample_weight=w))


def stratified_folds(y: np.ndarray, folds: int, seed: int) -> np.ndarray:
    """Fold id per record from a shuffled `StratifiedKFold`."""
    y = np.asarray(y)
    fold = np.empty(y.shape[0], dtype=np.int64)
    splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
    for f, (_, test) in enumerate(splitter.split(np.zeros((y.shape[0], 1)), y)):
        fold[test] = f
    return fold


def _corrected_scores(x_tr, y_tr, w_tr, x_te, config: LearnerConfig, correction: Correction) -> np.ndarray:
    if correction == "flipping":
        k, major = classification_flip_factor(y_tr, w_tr)
        x_f, y_f, w_f = flip_expand_arrays(x_tr, y_tr, w_tr, k, major)
        p1 = fit_prob_model(x_f, y_f, w_f, config).predict_proba(x_te)
        if major == 1:
            return classification_prob_recovery(p1, k)
        # 1 - (1 - p1) / k, kept exact at k = 1
        return np.clip((p1 - (1.0 - k)) / k, 0.0, 1.0)
    if correction == "undersampling":
        k, major = classification_undersample_factor(y_tr, w_tr)
        w_tr = np.where(y_tr == major, w_tr * k, w_tr)
    return fit_prob_model(x_tr, y_tr, w_tr, config).predict_proba(x_te)


def _cv_rep(x, y, w, config, folds, correction, seed, rep) -> List[float]:
    fold = stratified_folds(y, folds, derive_seed(seed, rep))
    values = []
    for f in range(folds):
        test = fold == f
        scores = _corrected_scores(x[~test], y[~test], w[~test], x[test], config, correction)
        values.append(weighted_auroc(scores, y[test], w[test]))
    return values


def stratified_cv_auroc(
    features,
    y,
    weights,
    learner_config: LearnerConfig,
    folds: int = 5,
    reps: int = 1,
    seed: int = 0,
    correction: Correction = "none",
    n_jobs: int = 1,
) -> ClassifReport:
    """
    Repeated class-stratified k-fold AUROC of one learner under one imbalance correction.

    The report holds one AUROC per (repetition, fold), repetition-major.
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(y).astype(np.int8)
    w = np.ones(y.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    if folds < 2:
        raise InputError("folds must be at least 2")
    counts = np.bincount(y, minlength=2)
    if counts.min() == 0:
        raise InputError("stratified cross-validation needs both classes")
    if counts.min() < folds:
        raise InputError(f"each class needs at least {folds} records, got {counts.tolist()}")
    per_rep = Parallel(n_jobs=n_jobs)(
        delayed(_cv_rep)(x, y, w, learner_config, folds, correction, seed, rep) for rep in range(reps)
    )
    values = [v for rep_values in per_rep for v in rep_values]
    return ClassifReport(
        learner=learner_config.name,
        correction=correction,
        folds=folds,
        reps=reps,
        seed=seed,
        values=values,
        mean=float(np.mean(values)),
        std=sample_std(values),
    )


# ---------------------------------------------------------------- files


def write_curve_csv(curve: UpliftCurve, path: PathLike) -> None:
    df = pd.DataFrame({"fraction": curve.fractions, "gain": curve.gains})
    atomic_write_text(path, df.to_csv(index=False, lineterminator="\n"))


def read_curve_csv(path: PathLike) -> UpliftCurve:
    df = pd.read_csv(path, float_precision="round_trip")
    if list(df.columns) != ["fraction", "gain"]:
        raise InputError(f"{path}: expected columns fraction,gain")
    return UpliftCurve(fractions=df["fraction"].astype(float).tolist(), gains=df["gain"].astype(float).tolist())


_REPORT_SCALARS = ("metamodel", "learner", "seed", "reps", "train_frac", "mean", "std", "retries", "absent_group_points")


def _flatten(prefix: str, value: Any, out: Dict[str, str]) -> None:
    if isinstance(value, dict):
        for k, v in value.items():
            _flatten(f"{prefix}.{k}", v, out)
    else:
        out[prefix] = json.dumps(value)


def _unflatten(items: Dict[str, str]) -> Dict[str, Any]:
    root: Dict[str, Any] = {}
    for key, raw in items.items():
        node = root
        *parents, leaf = key.split(".")
        for part in parents:
            node = node.setdefault(part, {})
        node[leaf] = json.loads(raw)
    return root


def format_report(report: EvalReport) -> str:
    lines = {name: repr(getattr(report, name)) if isinstance(getattr(report, name), float) else str(getattr(report, name))
             for name in _REPORT_SCALARS}
    lines["mauuc_values"] = ",".join(repr(v) for v in report.mauuc_values)
    if report.error is not None:
        lines["error"] = " ".join(report.error.split())
    for k, v in report.provenance.items():
        _flatten(f"provenance.{k}", v, lines)
    return "".join(f"{k}={v}\n" for k, v in lines.items())


def write_report(report: EvalReport, path: PathLike) -> None:
    atomic_write_text(path, format_report(report))


def read_report(path: PathLike, curve_path: Optional[PathLike] = None) -> EvalReport:
    fields: Dict[str, Any] = {}
    provenance: Dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise InputError(f"{path}:{lineno}: expected key=value")
        if key.startswith("provenance."):
            provenance[key[len("provenance."):]] = value
        elif key == "mauuc_values":
            fields[key] = [float(v) for v in value.split(",")] if value else []
        else:
            fields[key] = value
    for name in ("seed", "reps", "retries", "absent_group_points"):
        fields[name] = int(fields[name])
    for name in ("train_frac", "mean", "std"):
        fields[name] = float(fields[name])
    fields["provenance"] = _unflatten(provenance)
    if curve_path is not None:
        fields["curve"] = read_curve_csv(curve_path)
    return EvalReport(**fields)


__all__ = [
    "uplift_curve",
    "mauuc",
    "average_curves",
    "repeated_holdout",
    "weighted_auroc",
    "stratified_folds",
    "stratified_cv_auroc",
    "write_curve_csv",
    "read_curve_csv",
    "format_report",
    "write_report",
    "read_report",
]
