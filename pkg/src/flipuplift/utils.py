from __future__ import annotations
import os
import re
import tempfile
from pathlib import Path
from typing import Union

import numpy as np

PathLike = Union[str, Path]

_SLUG_RE = re.compile(r"[^A-Za-z0-9_.]+")


def clean_text(s: str) -> str:
    s = s.replace("\u00a0", " ").replace("\u200b", " ").replace("\ufeff", "").strip()
    s = re.sub(r"\s+", " ", s)
    return s


def slug(s: str) -> str:
    return _SLUG_RE.sub("_", clean_text(s)).strip("_")


def derive_seed(*keys: int) -> int:
    """Deterministic 32-bit seed from a tuple of non-negative integers."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def make_rng(*keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in keys]))


def atomic_write_text(path: PathLike, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sample_std(values) -> float:
    arr = np.asarray(values, dtype=float)
    if arr.size < 2:
        return 0.0
    return float(np.std(arr, ddof=1))
