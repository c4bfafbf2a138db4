"""
RCT dataset currency, CSV ingestion and synthetic generators.

An `RctDataset` holds the feature matrix X, binary response Y, treatment
indicator W (1 = treatment T, 0 = control C) and per-record weights. All
arrays are read-only after construction, so datasets can be shared across
workers. Every rebalancing step produces a new dataset.
"""
from __future__ import annotations
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.special import expit
from sklearn.datasets import make_classification

from .encodings import (
    GENERIC_RESPONSE,
    GENERIC_TREATMENT,
    GENERIC_WEIGHT,
    SchemaRule,
    feature_names,
    get_schema,
)
from .errors import DatasetError, IngestionError, SummaryError
from .schema import DatasetSummary, SyntheticSpec, majority_of
from .utils import PathLike, clean_text, derive_seed, make_rng

logger = logging.getLogger(__name__)

# stream tags; subsampling never reuses the draws that built the data
MINORITY_STREAM = 0x3A7
CAP_STREAM = 0xCA9


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RctDataset:
    features: np.ndarray
    response: np.ndarray
    treatment: np.ndarray
    weight: Optional[np.ndarray] = None
    feature_names: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        x = np.asarray(self.features, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if x.ndim != 2:
            raise DatasetError("features must be an n x p matrix")
        n = x.shape[0]
        if n < 1:
            raise DatasetError("dataset must contain at least one record")
        y = np.asarray(self.response)
        t = np.asarray(self.treatment)
        w = np.ones(n) if self.weight is None else np.asarray(self.weight, dtype=float)
        if not (y.shape == t.shape == w.shape == (n,)):
            raise DatasetError(
                f"length mismatch: features {n}, response {y.shape}, treatment {t.shape}, weight {w.shape}"
            )
        if not np.isin(y, (0, 1)).all():
            raise DatasetError("response values must be exactly 0 or 1")
        if not np.isin(t, (0, 1)).all():
            raise DatasetError("treatment values must be exactly 0 (C) or 1 (T)")
        if not np.isfinite(w).all() or (w < 0).any():
            raise DatasetError("weights must be finite and non-negative")
        if not w.sum() > 0:
            raise DatasetError("total weight must be positive")
        names = tuple(self.feature_names) or tuple(f"x{j}" for j in range(x.shape[1]))
        if len(names) != x.shape[1]:
            raise DatasetError(f"{len(names)} feature names for {x.shape[1]} features")
        object.__setattr__(self, "features", _frozen(x))
        object.__setattr__(self, "response", _frozen(y.astype(np.int8)))
        object.__setattr__(self, "treatment", _frozen(t.astype(np.int8)))
        object.__setattr__(self, "weight", _frozen(w))
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    @property
    def total_weight(self) -> float:
        return float(self.weight.sum())

    @property
    def treated(self) -> np.ndarray:
        return self.treatment == 1

    @property
    def control(self) -> np.ndarray:
        return self.treatment == 0

    def replace(self, **changes) -> "RctDataset":
        fields = {
            "features": self.features,
            "response": self.response,
            "treatment": self.treatment,
            "weight": self.weight,
            "feature_names": self.feature_names,
        }
        fields.update(changes)
        return RctDataset(**fields)

    def take(self, index: np.ndarray) -> "RctDataset":
        index = np.asarray(index)
        return RctDataset(
            self.features[index], self.response[index], self.treatment[index], self.weight[index], self.feature_names
        )

    def arm(self, treated: bool) -> "RctDataset":
        return self.take(np.flatnonzero(self.treatment == int(treated)))


# ---------------------------------------------------------------- ingestion


def _read_frame(path: PathLike) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"file not found: {path}")
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError as e:
        raise IngestionError(f"empty file: {path}") from e
    except pd.errors.ParserError as e:
        raise IngestionError(f"unparseable CSV {path}: {e}") from e
    if df.shape[0] == 0:
        raise IngestionError(f"no data rows in {path}")
    df.columns = [clean_text(c) for c in df.columns]
    return df


def _require(df: pd.DataFrame, columns: Sequence[str]) -> None:
    for col in columns:
        if col not in df.columns:
            raise IngestionError("missing column", column=col)


def _first_bad(mask: np.ndarray) -> int:
    # 1-based data row number (header excluded)
    return int(np.flatnonzero(mask)[0]) + 1


def _numeric(df: pd.DataFrame, col: str) -> np.ndarray:
    raw = df[col].str.strip()
    try:
        vals = np.asarray(raw.to_numpy(), dtype=float)
    except ValueError:
        vals = pd.to_numeric(raw, errors="coerce").to_numpy(dtype=float)
    bad = ~np.isfinite(vals)
    if bad.any():
        row = _first_bad(bad)
        raise IngestionError(f"unparseable value '{raw.iloc[row - 1]}'", row=row, column=col)
    return vals


def _binary(df: pd.DataFrame, col: str) -> np.ndarray:
    vals = _numeric(df, col)
    bad = ~np.isin(vals, (0.0, 1.0))
    if bad.any():
        row = _first_bad(bad)
        raise IngestionError(f"non-binary value '{df[col].iloc[row - 1]}'", row=row, column=col)
    return vals.astype(np.int8)


def _mapped(df: pd.DataFrame, col: str, mapping: dict) -> np.ndarray:
    raw = df[col].str.strip()
    bad = ~raw.isin(list(mapping)).to_numpy()
    if bad.any():
        row = _first_bad(bad)
        raise IngestionError(f"unexpected value '{raw.iloc[row - 1]}'", row=row, column=col)
    return raw.map(mapping).to_numpy().astype(np.int8)


def _one_hot(df: pd.DataFrame, col: str, categories: Sequence[str]) -> np.ndarray:
    raw = df[col].str.strip()
    bad = ~raw.isin(list(categories)).to_numpy()
    if bad.any():
        row = _first_bad(bad)
        raise IngestionError(f"unknown category '{raw.iloc[row - 1]}'", row=row, column=col)
    return np.column_stack([(raw == c).to_numpy(dtype=float) for c in categories])


def _load_generic(df: pd.DataFrame) -> RctDataset:
    _require(df, [GENERIC_RESPONSE, GENERIC_TREATMENT])
    y = _binary(df, GENERIC_RESPONSE)
    t = _binary(df, GENERIC_TREATMENT)
    w = _numeric(df, GENERIC_WEIGHT) if GENERIC_WEIGHT in df.columns else None
    if w is not None and (w < 0).any():
        row = _first_bad(w < 0)
        raise IngestionError("negative weight", row=row, column=GENERIC_WEIGHT)
    names = [c for c in df.columns if c not in (GENERIC_RESPONSE, GENERIC_TREATMENT, GENERIC_WEIGHT)]
    x = np.column_stack([_numeric(df, c) for c in names]) if names else np.empty((len(df), 0))
    return RctDataset(x, y, t, w, tuple(names))


def _load_benchmark(df: pd.DataFrame, rule: SchemaRule, target: str) -> RctDataset:
    if target not in rule.targets:
        raise IngestionError(f"schema '{rule.name}' has no target '{target}'; choose one of {list(rule.targets)}")
    _require(df, [rule.treatment_column, target, *rule.numeric, *rule.categorical, *rule.row_filter])
    for col, allowed in rule.row_filter.items():
        keep = df[col].str.strip().isin(allowed).to_numpy()
        logger.info("schema %s: keeping %d of %d rows by %s", rule.name, int(keep.sum()), len(df), col)
        df = df.loc[keep].reset_index(drop=True)
    if df.shape[0] == 0:
        raise IngestionError(f"no rows left after filtering for schema '{rule.name}'")
    if rule.treatment_values is None:
        t = _binary(df, rule.treatment_column)
    else:
        t = _mapped(df, rule.treatment_column, rule.treatment_values)
    y = _binary(df, target)
    blocks = [_numeric(df, c).reshape(-1, 1) for c in rule.numeric]
    blocks += [_one_hot(df, c, cats) for c, cats in rule.categorical.items()]
    x = np.hstack(blocks) if blocks else np.empty((len(df), 0))
    return RctDataset(x, y, t, None, tuple(feature_names(rule)))


def load_csv(path: PathLike, schema: str = "generic", target: Optional[str] = None) -> RctDataset:
    """
    Load an RCT CSV file.

    Args:
        path: CSV file (UTF-8, comma separated, header row)
        schema: "generic", "hillstrom", "criteo" or "starbucks"
        target: response column for benchmark schemas (defaults per schema)

    Returns:
        RctDataset; categorical columns one-hot encoded per the schema's fixed maps
    """
    df = _read_frame(path)
    if schema == "generic":
        ds = _load_generic(df)
    else:
        try:
            rule = get_schema(schema)
        except ValueError as e:
            raise IngestionError(str(e)) from e
        ds = _load_benchmark(df, rule, target or rule.default_target)
    logger.info("loaded %s: n=%d p=%d schema=%s", path, ds.n, ds.p, schema)
    return ds


def write_csv(dataset: RctDataset, path: PathLike) -> None:
    """Write the generic schema: features, then y, w, weight. Floats round-trip exactly."""
    cols = {name: dataset.features[:, j] for j, name in enumerate(dataset.feature_names)}
    df = pd.DataFrame(cols)
    df[GENERIC_RESPONSE] = dataset.response.astype(int)
    df[GENERIC_TREATMENT] = dataset.treatment.astype(int)
    df[GENERIC_WEIGHT] = dataset.weight
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, lineterminator="\n")


def load_classification_csv(path: PathLike, target: str = GENERIC_RESPONSE) -> Tuple[np.ndarray, np.ndarray]:
    """Plain binary classification file: `target` column plus numeric features."""
    df = _read_frame(path)
    _require(df, [target])
    y = _binary(df, target)
    names = [c for c in df.columns if c not in (target, GENERIC_TREATMENT, GENERIC_WEIGHT)]
    x = np.column_stack([_numeric(df, c) for c in names]) if names else np.empty((len(df), 0))
    return x, y


# ---------------------------------------------------------------- summaries


def summarize(dataset: RctDataset) -> DatasetSummary:
    w = dataset.weight
    wt = float(w[dataset.treated].sum())
    wc = float(w[dataset.control].sum())
    if not dataset.treated.any() or not dataset.control.any() or wt <= 0 or wc <= 0:
        raise SummaryError("both treatment and control groups must be non-empty with positive weight")
    total = wt + wc
    rate_t = float((w * dataset.response)[dataset.treated].sum()) / wt
    rate_c = float((w * dataset.response)[dataset.control].sum()) / wc
    share_t = wt / total
    return DatasetSummary(
        n=dataset.n,
        p=dataset.p,
        total_weight=total,
        share_T=share_t,
        share_C=1.0 - share_t,
        rate_T=min(max(rate_t, 0.0), 1.0),
        rate_C=min(max(rate_c, 0.0), 1.0),
        majority_T=majority_of(rate_t),
        majority_C=majority_of(rate_c),
    )


# ---------------------------------------------------------------- generators


def generate_synthetic(spec: SyntheticSpec, n: int, seed: Optional[int] = None) -> Tuple[RctDataset, np.ndarray]:
    """
    Draw a synthetic RCT with known uplift.

    X ~ N(0, I), W ~ Bernoulli(treatment_share) independent of X,
    Y | x, W ~ Bernoulli(σ(β·x̃)) with β = β_c in control and β_c + β_u in treatment.

    Returns:
        (dataset, true_tau) with true_tau[i] = σ((β_c+β_u)·x̃_i) - σ(β_c·x̃_i)
    """
    if n < 1:
        raise DatasetError("n must be at least 1")
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    x = rng.standard_normal((n, spec.p))
    t = (rng.random(n) < spec.treatment_share).astype(np.int8)
    design = np.hstack([np.ones((n, 1)), x])
    beta_c = np.asarray(spec.beta_control, dtype=float)
    beta_t = beta_c + np.asarray(spec.beta_uplift, dtype=float)
    p_c = expit(design @ beta_c)
    p_t = expit(design @ beta_t)
    y = (rng.random(n) < np.where(t == 1, p_t, p_c)).astype(np.int8)
    tau = p_t - p_c
    names = tuple(f"x{j}" for j in range(spec.p))
    return RctDataset(x, y, t, None, names), tau


def minority_keep_mask(response: np.ndarray, rate: float, seed: int, weight: Optional[np.ndarray] = None) -> np.ndarray:
    """Boolean mask keeping every majority record and each minority record with probability `rate`."""
    if not 0.0 < rate <= 1.0:
        raise DatasetError("rate must lie in (0, 1]")
    response = np.asarray(response)
    w = np.ones(response.shape[0]) if weight is None else np.asarray(weight, dtype=float)
    rate_1 = float((w * response).sum() / w.sum())
    minority = 1 - majority_of(rate_1)
    u = make_rng(seed, MINORITY_STREAM).random(response.shape[0])
    return (response != minority) | (u < rate)


def subsample_minority(dataset: RctDataset, rate: float, seed: int) -> RctDataset:
    if rate == 1.0:
        return dataset
    keep = minority_keep_mask(dataset.response, rate, seed, dataset.weight)
    logger.info("minority subsample at rate %g keeps %d of %d records", rate, int(keep.sum()), dataset.n)
    return dataset.take(np.flatnonzero(keep))


def cap_rows(dataset: RctDataset, max_rows: Optional[int], seed: int) -> RctDataset:
    if max_rows is None or dataset.n <= max_rows:
        return dataset
    idx = np.sort(make_rng(seed, CAP_STREAM).choice(dataset.n, size=max_rows, replace=False))
    logger.info("desk-scale cap: %d of %d rows", max_rows, dataset.n)
    return dataset.take(idx)


def make_artificial_classification(
    n: int = 1000,
    n_minority: int = 20,
    n_features: int = 20,
    n_informative: int = 2,
    n_redundant: int = 2,
    class_sep: float = 1.0,
    seed: int = 0,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Imbalanced two-class problem from `sklearn.datasets.make_classification`,
    one Gaussian cluster per class on a hypercube vertex. Exactly `n_minority`
    records get class 1.
    """
    if not 0 < n_minority < n:
        raise DatasetError("n_minority must lie strictly between 0 and n")
    if n_informative < 1 or n_informative + n_redundant > n_features:
        raise DatasetError("need 1 <= n_informative and n_informative + n_redundant <= n_features")
    # half-record offsets keep the per-class floor at the exact counts
    weights = [(n - n_minority + 0.5) / n, (n_minority + 0.5) / n]
    x, y = make_classification(
        n_samples=n,
        n_features=n_features,
        n_informative=n_informative,
        n_redundant=n_redundant,
        n_repeated=0,
        n_classes=2,
        n_clusters_per_class=1,
        weights=weights,
        flip_y=0.0,
        class_sep=class_sep,
        shuffle=True,
        random_state=derive_seed(seed),
    )
    return x, y.astype(np.int8)


__all__ = [
    "RctDataset",
    "load_csv",
    "write_csv",
    "load_classification_csv",
    "summarize",
    "generate_synthetic",
    "subsample_minority",
    "minority_keep_mask",
    "cap_rows",
    "make_artificial_classification",
]
