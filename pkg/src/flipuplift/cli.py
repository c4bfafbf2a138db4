from __future__ import annotations
import functools
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import click
import numpy as np
import pandas as pd

from .config import BenchConfig, ClassifConfig, dump_config, load_config, parse_overrides
from .errors import ConfigError, DatasetError, DomainError, FlipUpliftError, InputError
from .evaluation import (
    read_report,
    repeated_holdout,
    stratified_cv_auroc,
    write_curve_csv,
    write_report,
)
from .metamodels import display_name
from .plotting import plot_uplift_curves
from .rct_data import (
    RctDataset,
    cap_rows,
    generate_synthetic,
    load_classification_csv,
    load_csv,
    make_artificial_classification,
    minority_keep_mask,
    subsample_minority,
    summarize,
    write_csv,
)
from .rebalance import compute_flip_factor, treatment_balance_factor
from .schema import ClassifReport, DatasetSummary, EvalReport, SyntheticSpec
from .utils import PathLike, atomic_write_text, slug

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_FAILURE, EXIT_INPUT = 0, 1, 2

REPORT_SUFFIX = ".report.txt"
CURVE_SUFFIX = ".curve.csv"

INPUT_ERRORS = (DatasetError, DomainError, InputError, ConfigError, OSError)


def _exit_codes(fn):
    """Map package errors to exit codes: 2 for bad input, 1 for failed experiments."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except INPUT_ERRORS as e:
            click.echo(f"❌ {e}", err=True)
            raise SystemExit(EXIT_INPUT)
        except FlipUpliftError as e:
            click.echo(f"❌ {e}", err=True)
            raise SystemExit(EXIT_FAILURE)
    return wrapper


def _resolve(path: str, base: Path) -> Path:
    p = Path(path)
    if p.is_absolute() or p.exists():
        return p
    return base / p


def _cell_stem(metamodel: str, learner: str) -> str:
    return f"{slug(metamodel)}__{slug(learner)}"


# ---------------------------------------------------------------- commands


def cmd_generate(
    spec: SyntheticSpec, n: int, out: Path, tau_out: Optional[Path] = None, minority_rate: float = 1.0
) -> Tuple[RctDataset, np.ndarray]:
    ds, tau = generate_synthetic(spec, n)
    if minority_rate < 1.0:
        keep = np.flatnonzero(minority_keep_mask(ds.response, minority_rate, spec.seed, ds.weight))
        ds, tau = ds.take(keep), tau[keep]
    tau_out = tau_out or out.with_name(f"{out.stem}_tau.csv")
    write_csv(ds, out)
    atomic_write_text(tau_out, pd.DataFrame({"tau": tau}).to_csv(index=False, lineterminator="\n"))
    return ds, tau


def cmd_summarize(path: PathLike, schema: str = "generic", target: Optional[str] = None) -> Tuple[RctDataset, DatasetSummary]:
    ds = load_csv(path, schema, target)
    return ds, summarize(ds)


def _bench_dataset(cfg: BenchConfig, base: Path) -> RctDataset:
    if cfg.dataset is not None:
        ds = load_csv(_resolve(cfg.dataset, base), cfg.schema_name, cfg.target)
    else:
        ds, _ = generate_synthetic(cfg.synthetic_spec(), cfg.synthetic_n)
    ds = subsample_minority(ds, cfg.minority_rate, cfg.seed)
    return cap_rows(ds, cfg.max_rows, cfg.seed)


def cmd_bench(cfg: BenchConfig, base: Path = Path(".")) -> List[EvalReport]:
    """Run every metamodel × learner cell; write one report and curve per cell plus one SVG per learner."""
    out_dir = Path(cfg.out_dir)
    ds = _bench_dataset(cfg, base)
    s = summarize(ds)
    click.echo(f"📊 n={s.n} p={s.p} P(Y=1|T)={s.rate_T:.4f} P(Y=1|C)={s.rate_C:.4f}")
    dump_config(cfg, out_dir / "config.yaml")

    reports: List[EvalReport] = []
    for learner in cfg.learner_configs():
        for kind in cfg.metamodels:
            name = display_name(kind)
            stem = out_dir / _cell_stem(name, learner.name)
            try:
                report = repeated_holdout(
                    ds, kind, learner, reps=cfg.reps, train_frac=cfg.train_frac,
                    seed=cfg.seed, grid_size=cfg.grid_size, n_jobs=cfg.n_jobs,
                )
                write_curve_csv(report.curve, stem.with_name(stem.name + CURVE_SUFFIX))
                click.echo(f"✅ {name:<18} {learner.name:<12} mAUUC {report.mean:9.3f} ± {report.std:.3f}")
            except Exception as e:
                if not isinstance(e, FlipUpliftError):
                    logger.exception("unexpected failure in cell %s/%s", name, learner.name)
                report = EvalReport(
                    metamodel=name, learner=learner.name, seed=cfg.seed, reps=cfg.reps,
                    train_frac=cfg.train_frac, error=str(e) or type(e).__name__,
                )
                click.echo(f"⚠️  {name:<18} {learner.name:<12} failed: {e}")
            write_report(report, stem.with_name(stem.name + REPORT_SUFFIX))
            reports.append(report)
    if not all(r.failed for r in reports):
        cmd_curves(out_dir)
    return reports


def cmd_curves(report_dir: Path) -> List[Path]:
    """Re-render the per-learner overlay plots from the curve CSVs and reports in `report_dir`."""
    report_dir = Path(report_dir)
    groups: Dict[str, List[Tuple[Path, str]]] = {}
    for report_path in sorted(report_dir.glob(f"*{REPORT_SUFFIX}")):
        curve_path = report_path.with_name(report_path.name[: -len(REPORT_SUFFIX)] + CURVE_SUFFIX)
        report = read_report(report_path)
        if report.failed or not curve_path.exists():
            continue
        groups.setdefault(report.learner, []).append((curve_path, report.metamodel))
    if not groups:
        raise InputError(f"no curve files with reports found in {report_dir}")
    written = []
    for learner, items in sorted(groups.items()):
        out = report_dir / f"curves_{slug(learner)}.svg"
        plot_uplift_curves([p for p, _ in items], [label for _, label in items], out, title=learner)
        written.append(out)
    return written


def cmd_classif(cfg: ClassifConfig, base: Path = Path(".")) -> List[ClassifReport]:
    if cfg.dataset is not None:
        x, y = load_classification_csv(_resolve(cfg.dataset, base), cfg.target)
        source = Path(cfg.dataset).stem
    else:
        x, y = make_artificial_classification(
            n=cfg.n, n_minority=cfg.n_minority, n_features=cfg.n_features, n_informative=cfg.n_informative,
            n_redundant=cfg.n_redundant, class_sep=cfg.class_sep, seed=cfg.seed,
        )
        source = "Artificial"
    if cfg.minority_rate < 1.0:
        keep = minority_keep_mask(y, cfg.minority_rate, cfg.seed)
        x, y = x[keep], y[keep]
    out_dir = Path(cfg.out_dir)
    dump_config(cfg, out_dir / "config.yaml")

    reports: List[ClassifReport] = []
    rows = []
    for learner in cfg.learner_configs():
        for correction in cfg.corrections:
            report = stratified_cv_auroc(
                x, y, None, learner, folds=cfg.folds, reps=cfg.reps, seed=cfg.seed,
                correction=correction, n_jobs=cfg.n_jobs,
            )
            reports.append(report)
            for i, value in enumerate(report.values):
                rows.append({"model": learner.name, "method": correction, "rep": i // cfg.folds,
                             "fold": i % cfg.folds, "auroc": value})
            click.echo(f"✅ {learner.name:<12} {correction:<14} AUROC {report.mean:.4f} ± {report.std:.4f}")

    values = pd.DataFrame(rows, columns=["model", "method", "rep", "fold", "auroc"])
    atomic_write_text(out_dir / "classif_values.csv", values.to_csv(index=False, lineterminator="\n"))
    atomic_write_text(out_dir / "classif_table.txt", format_classif_table(reports, source, int(y.sum()), len(y), cfg.minority_rate))
    return reports


def format_classif_table(
    reports: Sequence[ClassifReport], source: str, n_minority: int, n: int, minority_rate: float = 1.0
) -> str:
    corrections = list(dict.fromkeys(r.correction for r in reports))
    learners = list(dict.fromkeys(r.learner for r in reports))
    cell = {(r.learner, r.correction): f"{r.mean:.4f}±{r.std:.4f}" for r in reports}
    rate = "---" if minority_rate == 1.0 else f"{minority_rate:g}"
    lines = [f"{source} & {n_minority} & {n} & {rate}", " & ".join(["model", *corrections])]
    for learner in learners:
        lines.append(" & ".join([learner, *(cell.get((learner, c), "-") for c in corrections)]))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- click surface


@click.group()
@click.option("-v", "--verbose", count=True, help="-v for progress, -vv for debug output")
def main(verbose: int):
    """Class-flipping imbalance correction for uplift modeling."""
    level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@main.command("generate")
@click.option("--n", "n", required=True, type=click.IntRange(min=1), help="Number of records")
@click.option("--p", "p", default=2, show_default=True, type=click.IntRange(min=0), help="Number of features")
@click.option("--seed", default=0, show_default=True, type=click.IntRange(min=0))
@click.option("--control-intercept", default=-1.0, show_default=True, type=float)
@click.option("--control-coef", default=0.5, show_default=True, type=float, help="Control coefficient of every feature")
@click.option("--uplift-intercept", default=0.0, show_default=True, type=float)
@click.option("--uplift-coef", default=0.3, show_default=True, type=float, help="Uplift coefficient of every feature")
@click.option("--treatment-share", default=0.5, show_default=True, type=click.FloatRange(0, 1, min_open=True, max_open=True))
@click.option("--minority-rate", default=1.0, show_default=True, type=click.FloatRange(0, 1, min_open=True))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False), help="Output dataset CSV")
@click.option("--tau-out", "tau_path", required=False, type=click.Path(dir_okay=False), help="True-tau CSV (default <out>_tau.csv)")
@_exit_codes
def generate(n, p, seed, control_intercept, control_coef, uplift_intercept, uplift_coef, treatment_share,
             minority_rate, out_path, tau_path):
    """Write a synthetic RCT with known uplift."""
    spec = SyntheticSpec(
        p=p,
        beta_control=[control_intercept] + [control_coef] * p,
        beta_uplift=[uplift_intercept] + [uplift_coef] * p,
        treatment_share=treatment_share,
        seed=seed,
    )
    ds, tau = cmd_generate(spec, n, Path(out_path), Path(tau_path) if tau_path else None, minority_rate)
    click.echo(f"✅ Wrote {ds.n} records to {out_path}")
    _echo_summary(ds)


@main.command("summarize")
@click.option("--data", "data_path", required=True, type=click.Path(dir_okay=False), help="RCT CSV file")
@click.option("--schema", default="generic", show_default=True,
              type=click.Choice(["generic", "hillstrom", "criteo", "starbucks"]))
@click.option("--target", default=None, help="Response column for benchmark schemas")
@_exit_codes
def summarize_cmd(data_path, schema, target):
    """Print weighted rates, majority classes and the balancing factors."""
    ds, _ = cmd_summarize(data_path, schema, target)
    _echo_summary(ds)


def _echo_summary(ds: RctDataset) -> None:
    s = summarize(ds)
    plan, _ = compute_flip_factor(s)
    l, group = treatment_balance_factor(s)
    click.echo("📊 Dataset summary:")
    click.echo(f"  n: {s.n}")
    click.echo(f"  p: {s.p}")
    click.echo(f"  total weight: {s.total_weight:g}")
    click.echo(f"  share T / C: {s.share_T:.4f} / {s.share_C:.4f}")
    click.echo(f"  P(Y=1|T): {s.rate_T:.6f}")
    click.echo(f"  P(Y=1|C): {s.rate_C:.6f}")
    click.echo(f"  P(Y=1): {s.positive_rate:.6f}")
    click.echo(f"  majority T / C: {s.majority_T} / {s.majority_C}")
    click.echo(f"  k: {plan.k!r}")
    click.echo(f"  flip mode: {plan.mode}")
    click.echo(f"  balance factor l: {l!r}" + (f" (on {group})" if group else ""))


def _config_options(fn):
    fn = click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False), help="Flat YAML config")(fn)
    fn = click.option("--set", "overrides", multiple=True, help="Override a config key (key=value), repeatable")(fn)
    fn = click.option("--seed", default=None, type=click.IntRange(min=0), help="Override seed")(fn)
    fn = click.option("--reps", default=None, type=click.IntRange(min=1), help="Override repetitions")(fn)
    fn = click.option("--out-dir", default=None, type=click.Path(file_okay=False), help="Override output directory")(fn)
    return fn


def _overrides(overrides, seed, reps, out_dir) -> Dict[str, object]:
    values = parse_overrides(overrides)
    for key, value in (("seed", seed), ("reps", reps), ("out_dir", out_dir)):
        if value is not None:
            values[key] = value
    return values


@main.command("bench")
@_config_options
@_exit_codes
def bench(config_path, overrides, seed, reps, out_dir):
    """Repeated-holdout uplift benchmark over the configured metamodel × learner grid."""
    cfg = load_config(config_path, BenchConfig, _overrides(overrides, seed, reps, out_dir))
    reports = cmd_bench(cfg, Path(config_path).parent)
    if all(r.failed for r in reports):
        click.echo("❌ every benchmark cell failed", err=True)
        raise SystemExit(EXIT_FAILURE)
    click.echo(f"✅ Results written to {cfg.out_dir}")


@main.command("classif")
@_config_options
@_exit_codes
def classif(config_path, overrides, seed, reps, out_dir):
    """Stratified-CV AUROC of each learner under no correction, flipping and undersampling."""
    cfg = load_config(config_path, ClassifConfig, _overrides(overrides, seed, reps, out_dir))
    cmd_classif(cfg, Path(config_path).parent)
    click.echo(f"✅ Table written to {Path(cfg.out_dir) / 'classif_table.txt'}")


@main.command("curves")
@click.option("--dir", "report_dir", required=True, type=click.Path(exists=True, file_okay=False),
              help="Directory holding bench reports and curve CSVs")
@_exit_codes
def curves(report_dir):
    """Re-render the uplift curve plots of a finished bench run."""
    for path in cmd_curves(Path(report_dir)):
        click.echo(f"✅ {path}")


if __name__ == "__main__":
    main()
