"""
Weighted probabilistic base classifiers.

Every learner consumes (features, response, weights) and returns a fitted
`ProbModel` whose `predict_proba` gives P̂(Y=1|x). Fitted models are immutable
and serialise to self-describing JSON.

- logistic: L2-penalised logistic regression on weighted-standardised features,
  damped Newton with a gradient-descent fallback
- tree: binary Gini tree on midpoint thresholds with a minimum leaf weight of
  alpha times the total weight
- forest: trees on the full weighted data (no bootstrap) with per-node random
  feature subsets
"""
from __future__ import annotations
import logging
from abc import ABC, abstractmethod
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy.special import expit

from .errors import DegenerateFitError, InputError
from .rct_data import RctDataset
from .schema import LearnerConfig, OptimizerConfig, load_json, save_json
from .utils import PathLike

logger = logging.getLogger(__name__)

MODEL_FORMAT = "flipuplift.prob_model"
MODEL_VERSION = 1

TIE_TOL = 1e-12
LEAF_SLACK = 1e-12


def _check_features(features: np.ndarray, p: Optional[int] = None) -> np.ndarray:
    x = np.asarray(features, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1) if p in (None, 1) else x.reshape(1, -1)
    if x.ndim != 2:
        raise InputError("features must be an n x p matrix")
    if p is not None and x.shape[1] != p:
        raise InputError(f"expected {p} features, got {x.shape[1]}")
    if not np.isfinite(x).all():
        raise InputError("features contain non-finite values")
    return x


def _check_training(features, response, weights) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    x = _check_features(features)
    y = np.asarray(response, dtype=float)
    n = x.shape[0]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    if y.shape != (n,) or w.shape != (n,):
        raise InputError("features, response and weights must be aligned")
    if n < 1:
        raise InputError("no training records")
    if not np.isfinite(w).all() or (w < 0).any() or not w.sum() > 0:
        raise InputError("weights must be finite, non-negative and not all zero")
    return x, y, w


class ProbModel(ABC):
    """Fitted weighted classifier exposing P̂(Y=1|x)."""

    kind: str = ""
    n_features: int = 0

    @abstractmethod
    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def _state(self) -> Dict[str, Any]:
        ...

    def to_dict(self) -> Dict[str, Any]:
        return {"format": MODEL_FORMAT, "version": MODEL_VERSION, "kind": self.kind, **self._state()}


# ---------------------------------------------------------------- constant


class ConstantModel(ProbModel):
    """Weighted base-rate predictor; stands in for arms holding a single class."""

    kind = "constant"

    def __init__(self, rate: float, n_features: int):
        self.rate = float(min(max(rate, 0.0), 1.0))
        self.n_features = int(n_features)

    @classmethod
    def fit(cls, features, response, weights=None) -> "ConstantModel":
        x, y, w = _check_training(features, response, weights)
        return cls(float((w * y).sum() / w.sum()), x.shape[1])

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        x = _check_features(features, self.n_features)
        return np.full(x.shape[0], self.rate)

    def _state(self) -> Dict[str, Any]:
        return {"n_features": self.n_features, "rate": self.rate}


# ---------------------------------------------------------------- logistic


def _standardize(x: np.ndarray, w: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    total = w.sum()
    mean = (w[:, None] * x).sum(axis=0) / total
    var = (w[:, None] * (x - mean) ** 2).sum(axis=0) / total
    scale = np.sqrt(np.maximum(var, 0.0))
    # constant columns
    scale[scale <= 1e-12 * np.maximum(1.0, np.abs(mean))] = 0.0
    return mean, scale


def _design(x: np.ndarray, mean: np.ndarray, scale: np.ndarray) -> np.ndarray:
    z = np.divide(x - mean, scale, out=np.zeros_like(x), where=scale > 0)
    return np.hstack([np.ones((x.shape[0], 1)), z])


def _objective(beta, design, y, v, l2) -> Tuple[float, np.ndarray, np.ndarray]:
    z = design @ beta
    p = expit(z)
    pen = beta.copy()
    pen[0] = 0.0
    value = float((v * (np.logaddexp(0.0, z) - y * z)).sum() + 0.5 * l2 * (pen @ pen))
    grad = design.T @ (v * (p - y)) + l2 * pen
    reg = np.full(beta.shape[0], l2)
    reg[0] = 0.0
    hess = (design * (v * p * (1.0 - p))[:, None]).T @ design + np.diag(reg)
    return value, grad, hess


def penalized_logistic_loss(beta, design, response, weights, l2: float) -> float:
    """
    Objective minimised by `fit_logistic`.

    Weights are rescaled to mean one; the loss is summed over records and the
    intercept (first column of `design`) is not penalised.
    """
    w = np.asarray(weights, dtype=float)
    v = w / w.mean()
    value, _, _ = _objective(np.asarray(beta, dtype=float), np.asarray(design, dtype=float),
                             np.asarray(response, dtype=float), v, l2)
    return value


def _newton(design, y, v, opt: OptimizerConfig) -> Tuple[np.ndarray, int, bool]:
    n = design.shape[0]
    beta = np.zeros(design.shape[1])
    value, grad, hess = _objective(beta, design, y, v, opt.l2_penalty)
    for it in range(1, opt.max_iterations + 1):
        if np.max(np.abs(grad)) / n < opt.tolerance:
            return beta, it - 1, True
        try:
            step = -np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = -np.linalg.lstsq(hess, grad, rcond=None)[0]
        slope = float(grad @ step)
        if not np.isfinite(slope) or slope >= 0:
            step = -grad
            slope = float(grad @ step)
        t = 1.0
        while True:
            cand = beta + t * step
            cand_value, cand_grad, cand_hess = _objective(cand, design, y, v, opt.l2_penalty)
            if cand_value <= value + 1e-4 * t * slope:
                break
            t *= 0.5
            if t < 1e-14:
                # no further descent available at double precision
                return beta, it, np.max(np.abs(grad)) / n < opt.tolerance
        beta, value, grad, hess = cand, cand_value, cand_grad, cand_hess
    return beta, opt.max_iterations, np.max(np.abs(grad)) / n < opt.tolerance


class LogisticModel(ProbModel):
    kind = "logistic"

    def __init__(self, mean, scale, coef, n_iter: int = 0, converged: bool = True):
        self.mean = np.asarray(mean, dtype=float)
        self.scale = np.asarray(scale, dtype=float)
        self.coef = np.asarray(coef, dtype=float)
        self.n_features = int(self.mean.shape[0])
        self.n_iter = int(n_iter)
        self.converged = bool(converged)

    def design(self, features: np.ndarray) -> np.ndarray:
        """Standardised design matrix with a leading intercept column."""
        return _design(_check_features(features, self.n_features), self.mean, self.scale)

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        return expit(self.design(features) @ self.coef)

    def _state(self) -> Dict[str, Any]:
        return {
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
            "coef": self.coef.tolist(),
            "n_iter": self.n_iter,
            "converged": self.converged,
        }


def _fit_logistic_arrays(x, y, w, opt: OptimizerConfig) -> LogisticModel:
    if x.shape[0] < 2:
        raise DegenerateFitError("logistic regression needs at least two records")
    w1 = float((w * y).sum())
    if w1 <= 0.0 or w1 >= float(w.sum()):
        raise DegenerateFitError("logistic regression needs both classes with positive weight")
    mean, scale = _standardize(x, w)
    design = _design(x, mean, scale)
    v = w * (x.shape[0] / w.sum())
    coef, n_iter, converged = _newton(design, y, v, opt)
    if not converged:
        logger.warning("logistic fit stopped after %d iterations without reaching tolerance", n_iter)
    return LogisticModel(mean, scale, coef, n_iter, converged)


# ---------------------------------------------------------------- trees


class TreeModel(ProbModel):
    """Flat-array binary tree; `feature == -1` marks a leaf, records with x <= threshold go left."""

    kind = "tree"

    def __init__(self, n_features, feature, threshold, left, right, value, weight):
        self.n_features = int(n_features)
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=float)
        self.weight = np.asarray(weight, dtype=float)

    @property
    def node_count(self) -> int:
        return int(self.feature.shape[0])

    @property
    def depth(self) -> int:
        depth = np.zeros(self.node_count, dtype=np.int64)
        for i in range(self.node_count):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def leaf_weights(self) -> np.ndarray:
        return self.weight[self.feature < 0]

    def apply(self, features: np.ndarray) -> np.ndarray:
        """Leaf index reached by every record."""
        x = _check_features(features, self.n_features)
        node = np.zeros(x.shape[0], dtype=np.int64)
        active = np.flatnonzero(self.feature[node] >= 0)
        while active.size:
            cur = node[active]
            go_left = x[active, self.feature[cur]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
            active = active[self.feature[node[active]] >= 0]
        return node

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        return self.value[self.apply(features)]

    def _state(self) -> Dict[str, Any]:
        return {
            "n_features": self.n_features,
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "weight": self.weight.tolist(),
        }


def _best_split(x, y, w, idx, features, floor) -> Optional[Tuple[int, float, float]]:
    """(feature, threshold, weighted child Gini) of the best admissible split, or None."""
    node_w = w[idx].sum()
    best = None
    for j in features:
        order = idx[np.argsort(x[idx, j], kind="stable")]
        xs = x[order, j]
        ws = w[order]
        w1s = ws * y[order]
        wl = np.cumsum(ws)[:-1]
        w1l = np.cumsum(w1s)[:-1]
        wr = node_w - wl
        w1r = w1s.sum() - w1l
        ok = (xs[:-1] < xs[1:]) & (wl >= floor) & (wr >= floor)
        if not ok.any():
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            pl = np.where(wl > 0, w1l / wl, 0.0)
            pr = np.where(wr > 0, w1r / wr, 0.0)
        gini = (wl * 2.0 * pl * (1.0 - pl) + wr * 2.0 * pr * (1.0 - pr)) / node_w
        gini = np.where(ok, gini, np.inf)
        i = int(np.flatnonzero(gini <= gini.min() + TIE_TOL)[0])
        if best is None or gini[i] < best[2] - TIE_TOL:
            thr = 0.5 * (xs[i] + xs[i + 1])
            if thr >= xs[i + 1]:
                thr = xs[i]
            best = (int(j), float(thr), float(gini[i]))
    return best


def _grow_tree(x, y, w, alpha: float, max_depth: int, n_sub: Optional[int], rng) -> TreeModel:
    n, p = x.shape
    floor = alpha * w.sum() * (1.0 - LEAF_SLACK)
    feature: List[int] = []
    threshold: List[float] = []
    left: List[int] = []
    right: List[int] = []
    value: List[float] = []
    weight: List[float] = []

    def new_node(idx) -> int:
        wn = float(w[idx].sum())
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float((w[idx] * y[idx]).sum() / wn) if wn > 0 else 0.0)
        weight.append(wn)
        return len(feature) - 1

    stack = [(new_node(np.arange(n)), np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        rate, wn = value[node], weight[node]
        if depth >= max_depth or p == 0 or wn < 2.0 * floor or rate <= 0.0 or rate >= 1.0:
            continue
        if n_sub is None or n_sub >= p:
            candidates = range(p)
        else:
            candidates = np.sort(rng.choice(p, n_sub, replace=False))
        split = _best_split(x, y, w, idx, candidates, floor)
        if split is None or split[2] >= 2.0 * rate * (1.0 - rate) - TIE_TOL:
            continue
        j, thr, _ = split
        go_left = x[idx, j] <= thr
        li, ri = idx[go_left], idx[~go_left]
        feature[node], threshold[node] = j, thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))
    return TreeModel(p, feature, threshold, left, right, value, weight)


class ForestModel(ProbModel):
    kind = "forest"

    def __init__(self, trees: List[TreeModel]):
        if not trees:
            raise InputError("a forest needs at least one tree")
        self.trees = list(trees)
        self.n_features = trees[0].n_features

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        x = _check_features(features, self.n_features)
        return np.mean([t.predict_proba(x) for t in self.trees], axis=0)

    def _state(self) -> Dict[str, Any]:
        return {"n_features": self.n_features, "trees": [t._state() for t in self.trees]}


def _fit_forest_arrays(x, y, w, config: LearnerConfig) -> ForestModel:
    m = config.resolved_features_per_split(x.shape[1])
    jobs = (
        delayed(_grow_tree)(
            x, y, w, config.min_leaf_weight_frac, config.max_depth, m,
            np.random.default_rng(np.random.SeedSequence([config.seed, t])),
        )
        for t in range(config.n_trees)
    )
    trees = Parallel(n_jobs=config.n_jobs)(jobs)
    return ForestModel(trees)


# ---------------------------------------------------------------- entry points


def fit_prob_model(features, response, weights, config: LearnerConfig) -> ProbModel:
    x, y, w = _check_training(features, response, weights)
    if config.kind == "logistic":
        model: ProbModel = _fit_logistic_arrays(x, y, w, config.optimizer)
    elif config.kind == "tree":
        model = _grow_tree(x, y, w, config.min_leaf_weight_frac, config.max_depth, None, None)
    else:
        model = _fit_forest_arrays(x, y, w, config)
    logger.debug("fitted %s on n=%d p=%d", config.name, x.shape[0], x.shape[1])
    return model


def fit_logistic(dataset: RctDataset, config: LearnerConfig) -> LogisticModel:
    x, y, w = _check_training(dataset.features, dataset.response, dataset.weight)
    return _fit_logistic_arrays(x, y, w, config.optimizer)


def fit_tree(dataset: RctDataset, config: LearnerConfig) -> TreeModel:
    x, y, w = _check_training(dataset.features, dataset.response, dataset.weight)
    return _grow_tree(x, y, w, config.min_leaf_weight_frac, config.max_depth, None, None)


def fit_forest(dataset: RctDataset, config: LearnerConfig) -> ForestModel:
    x, y, w = _check_training(dataset.features, dataset.response, dataset.weight)
    return _fit_forest_arrays(x, y, w, config)


# ---------------------------------------------------------------- persistence


def model_from_dict(state: Dict[str, Any]) -> ProbModel:
    if state.get("format") not in (MODEL_FORMAT, None) or state.get("version", MODEL_VERSION) != MODEL_VERSION:
        raise InputError(f"unsupported model format {state.get('format')} v{state.get('version')}")
    kind = state.get("kind")
    if kind == "constant":
        return ConstantModel(state["rate"], state["n_features"])
    if kind == "logistic":
        return LogisticModel(state["mean"], state["scale"], state["coef"], state.get("n_iter", 0), state.get("converged", True))
    if kind == "tree":
        return TreeModel(
            state["n_features"], state["feature"], state["threshold"],
            state["left"], state["right"], state["value"], state["weight"],
        )
    if kind == "forest":
        return ForestModel([model_from_dict({"kind": "tree", **t}) for t in state["trees"]])
    raise InputError(f"unknown model kind: {kind}")


def save_model(model: ProbModel, path: PathLike) -> None:
    save_json(path, model.to_dict())


def load_model(path: PathLike) -> ProbModel:
    return model_from_dict(load_json(path))


__all__ = [
    "ProbModel",
    "ConstantModel",
    "LogisticModel",
    "TreeModel",
    "ForestModel",
    "fit_logistic",
    "fit_tree",
    "fit_forest",
    "fit_prob_model",
    "penalized_logistic_loss",
    "save_model",
    "load_model",
    "model_from_dict",
]
