from __future__ import annotations
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field


class SchemaRule(BaseModel):
    """Column layout of one benchmark CSV schema."""
    name: str
    treatment_column: str
    # raw treatment value -> is treated; None means a 0/1 column
    treatment_values: Optional[Dict[str, bool]] = None
    targets: Tuple[str, ...]
    default_target: str
    numeric: List[str] = Field(default_factory=list)
    # column -> categories, one-hot encoded in the listed (alphabetical) order
    categorical: Dict[str, List[str]] = Field(default_factory=dict)
    # column -> allowed raw values; rows with other values are dropped
    row_filter: Dict[str, List[str]] = Field(default_factory=dict)


HILLSTROM_SEGMENTS = {"Womens E-Mail": True, "No E-Mail": False}

SCHEMAS: Dict[str, SchemaRule] = {
    "hillstrom": SchemaRule(
        name="hillstrom",
        treatment_column="segment",
        treatment_values=HILLSTROM_SEGMENTS,
        targets=("conversion", "visit"),
        default_target="conversion",
        numeric=["recency", "history", "mens", "womens", "newbie"],
        categorical={
            "history_segment": [
                "1) $0 - $100",
                "2) $100 - $200",
                "3) $200 - $350",
                "4) $350 - $500",
                "5) $500 - $750",
                "6) $750 - $1,000",
                "7) $1,000 +",
            ],
            "zip_code": ["Rural", "Surburban", "Urban"],
            "channel": ["Multichannel", "Phone", "Web"],
        },
        row_filter={"segment": sorted(HILLSTROM_SEGMENTS)},
    ),
    "criteo": SchemaRule(
        name="criteo",
        treatment_column="treatment",
        targets=("visit", "conversion"),
        default_target="visit",
        numeric=[f"f{i}" for i in range(12)],
    ),
    "starbucks": SchemaRule(
        name="starbucks",
        treatment_column="Promotion",
        treatment_values={"Yes": True, "No": False},
        targets=("purchase",),
        default_target="purchase",
        numeric=[f"V{i}" for i in range(1, 8)],
    ),
}

GENERIC_RESPONSE = "y"
GENERIC_TREATMENT = "w"
GENERIC_WEIGHT = "weight"


def one_hot_name(column: str, category: str) -> str:
    return f"{column}={category}"


def feature_names(rule: SchemaRule) -> List[str]:
    # Categorical blocks follow numeric columns, in rule order.
    names = list(rule.numeric)
    for col, cats in rule.categorical.items():
        names.extend(one_hot_name(col, c) for c in cats)
    return names


def get_schema(name: str) -> SchemaRule:
    if name not in SCHEMAS:
        raise ValueError(f"Unknown schema: {name}. Must be one of: {['generic'] + list(SCHEMAS)}")
    return SCHEMAS[name]
