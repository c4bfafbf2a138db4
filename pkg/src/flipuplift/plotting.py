from __future__ import annotations
import logging
import os
import tempfile
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .evaluation import mauuc, read_curve_csv  # noqa: E402
from .utils import PathLike  # noqa: E402

logger = logging.getLogger(__name__)


def plot_uplift_curves(
    curve_csvs: Sequence[PathLike],
    labels: Sequence[str],
    out_path: PathLike,
    title: Optional[str] = None,
) -> Path:
    """
    Overlay averaged uplift curves in one SVG.

    Everything drawn comes from the curve CSVs: the legend mAUUC is recomputed
    from each file, and equals the mean per-repetition mAUUC since the metric
    is linear in the curve.
    """
    if len(curve_csvs) != len(labels):
        raise ValueError("one label per curve file is required")
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    plt.rcParams["svg.hashsalt"] = "flipuplift"

    fig, ax = plt.subplots(figsize=(7, 5))
    for csv, label in zip(curve_csvs, labels):
        curve = read_curve_csv(csv)
        line, = ax.plot(curve.fractions, curve.gains, label=f"{label} (mAUUC {mauuc(curve):.2f})")
        ax.plot([0.0, 1.0], [0.0, curve.gains[-1]], linestyle=":", linewidth=0.8, color=line.get_color())
    ax.set_xlabel("fraction of population targeted")
    ax.set_ylabel("net gain per individual")
    ax.set_xlim(0.0, 1.0)
    ax.grid(alpha=0.3)
    if title:
        ax.set_title(title)
    if labels:
        ax.legend(loc="best", fontsize="small")
    fig.tight_layout()

    fd, tmp = tempfile.mkstemp(dir=out_path.parent, prefix=f".{out_path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        fig.savefig(tmp, format="svg", metadata={"Date": None})
        os.replace(tmp, out_path)
    finally:
        plt.close(fig)
        if os.path.exists(tmp):
            os.unlink(tmp)
    logger.info("wrote %s (%d curves)", out_path, len(labels))
    return out_path
