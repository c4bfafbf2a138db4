import math
from fractions import Fraction

import numpy as np
import pytest

from flipuplift.errors import InputError
from flipuplift.evaluation import (
    average_curves,
    mauuc,
    read_curve_csv,
    read_report,
    repeated_holdout,
    stratified_cv_auroc,
    stratified_folds,
    uplift_curve,
    weighted_auroc,
    write_curve_csv,
    write_report,
)
from flipuplift.rct_data import RctDataset
from flipuplift.schema import EvalReport, LearnerConfig, UpliftCurve

LR = LearnerConfig(kind="logistic")


def brute_force_gains(tau, y, t, w, grid_size):
    n = len(tau)
    order = sorted(range(n), key=lambda i: -tau[i])
    gains = []
    for i in range(grid_size):
        rho = Fraction(i, grid_size - 1)
        m = math.ceil(rho * n)
        top = order[:m]
        rates = []
        for g in (1, 0):
            wg = sum(w[j] for j in top if t[j] == g)
            rates.append(sum(w[j] * y[j] for j in top if t[j] == g) / wg if wg > 0 else 0.0)
        gains.append(float(rho) * (rates[0] - rates[1]) if m else 0.0)
    return gains


def test_four_record_curve_by_hand():
    ds = RctDataset(np.zeros((4, 1)), [1, 0, 1, 0], [1, 1, 0, 0])
    curve = uplift_curve([0.9, 0.1, 0.5, 0.3], ds, grid_size=5)
    assert curve.fractions == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert curve.gains == pytest.approx([0.0, 0.25, 0.0, 0.375, 0.0], abs=1e-15)


def test_curve_matches_brute_force_small_instances():
    rng = np.random.default_rng(21)
    for _ in range(200):
        n = int(rng.integers(2, 13))
        t = np.zeros(n, dtype=int)
        t[rng.permutation(n)[: int(rng.integers(1, n))]] = 1
        y = rng.integers(0, 2, n)
        w = rng.uniform(0.1, 3.0, n)
        tau = rng.choice([-0.5, 0.0, 0.25, 0.5], n)
        grid = int(rng.integers(2, 12))
        curve = uplift_curve(tau, RctDataset(np.zeros((n, 1)), y, t, w), grid_size=grid)
        expected = brute_force_gains(tau.tolist(), y.tolist(), t.tolist(), w.tolist(), grid)
        assert np.allclose(curve.gains, expected, atol=1e-12, rtol=0)


def test_full_population_gain_ignores_ranking(rct_random):
    ds = rct_random(500, 2, seed=1, weighted=True)
    w, y, t = ds.weight, ds.response, ds.treated
    overall = (w * y)[t].sum() / w[t].sum() - (w * y)[~t].sum() / w[~t].sum()
    for seed in range(3):
        tau = np.random.default_rng(seed).standard_normal(ds.n)
        assert uplift_curve(tau, ds).gains[-1] == pytest.approx(overall, abs=1e-12)


def test_mauuc_values():
    diagonal = UpliftCurve(fractions=[0.0, 0.5, 1.0], gains=[0.0, 0.2, 0.4])
    assert mauuc(diagonal) == pytest.approx(0.0, abs=1e-12)
    toy = UpliftCurve(fractions=[0.0, 0.5, 1.0], gains=[0.0, 0.4, 0.4])
    # trapezoid area 0.3, diagonal area 0.2
    assert mauuc(toy) == pytest.approx(100.0, abs=1e-9)


def test_mauuc_invariant_under_increasing_transforms(rct_random):
    ds = rct_random(400, 2, seed=2)
    tau = np.random.default_rng(5).uniform(-1, 1, ds.n)
    base = mauuc(uplift_curve(tau, ds))
    assert mauuc(uplift_curve(2 * tau + 3, ds)) == base
    assert mauuc(uplift_curve(np.tanh(tau), ds)) == base


def test_uniform_weights_match_unit_weights(rct_random):
    ds = rct_random(300, 2, seed=3)
    tau = np.random.default_rng(0).standard_normal(ds.n)
    unit = uplift_curve(tau, ds)
    for c in (2.0, 0.25):
        scaled = uplift_curve(tau, ds.replace(weight=np.full(ds.n, c)))
        assert scaled.gains == unit.gains


def test_curve_errors(rct_random):
    ds = rct_random(10, 1, seed=0)
    with pytest.raises(InputError):
        uplift_curve(np.zeros(9), ds)
    with pytest.raises(InputError):
        uplift_curve(np.full(10, np.nan), ds)


def test_average_curves():
    a = UpliftCurve(fractions=[0.0, 0.5, 1.0], gains=[0.0, 0.1, 0.3])
    b = UpliftCurve(fractions=[0.0, 0.5, 1.0], gains=[0.0, 0.3, 0.1])
    assert average_curves([a, b]).gains == pytest.approx([0.0, 0.2, 0.2])
    with pytest.raises(InputError):
        average_curves([a, UpliftCurve(fractions=[0.0, 1.0], gains=[0.0, 0.1])])


def test_repeated_holdout_determinism_and_consistency(rct_random):
    ds = rct_random(600, 3, seed=4)
    one = repeated_holdout(ds, "cvt", LR, reps=1, seed=9)
    assert one == repeated_holdout(ds, "cvt", LR, reps=1, seed=9)
    report = repeated_holdout(ds, "flipped_cvt", LR, reps=4, seed=9)
    assert len(report.mauuc_values) == 4
    assert report.mean == pytest.approx(np.mean(report.mauuc_values), abs=1e-12)
    assert report.std == pytest.approx(np.std(report.mauuc_values, ddof=1), abs=1e-12)
    # mAUUC is linear in the curve, so the averaged curve carries the mean
    assert mauuc(report.curve) == pytest.approx(report.mean, abs=1e-9)
    assert report.metamodel == "FlippedCVT" and report.learner == "LR"


def test_repeated_holdout_retries_degenerate_splits():
    # the only positive misses about half of the training splits
    n = 40
    t = (np.arange(n) < 20).astype(int)
    y = np.zeros(n, dtype=int)
    y[0] = 1
    ds = RctDataset(np.random.default_rng(0).standard_normal((n, 1)), y, t)
    report = repeated_holdout(ds, "two_model", LR, reps=10, train_frac=0.5, seed=1)
    assert report.retries > 0
    assert len(report.mauuc_values) == 10


def test_weighted_auroc_matches_pair_counting():
    rng = np.random.default_rng(6)
    for _ in range(200):
        n = int(rng.integers(2, 13))
        labels = rng.integers(0, 2, n)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        scores = rng.choice([0.1, 0.2, 0.3, 0.4], n)
        w = rng.uniform(0.1, 2.0, n)
        num = sum(
            w[i] * w[j] * (1.0 if scores[i] > scores[j] else 0.5 if scores[i] == scores[j] else 0.0)
            for i in range(n) for j in range(n) if labels[i] == 1 and labels[j] == 0
        )
        den = w[labels == 1].sum() * w[labels == 0].sum()
        assert weighted_auroc(scores, labels, w) == pytest.approx(num / den, abs=1e-10)


def test_weighted_auroc_edges():
    assert weighted_auroc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert weighted_auroc([0.5, 0.5], [0, 1]) == 0.5
    with pytest.raises(InputError):
        weighted_auroc([0.1, 0.2], [1, 1])


def test_stratified_folds_balance_classes():
    y = np.array([0] * 47 + [1] * 13)
    fold = stratified_folds(y, 5, 0)
    for cls in (0, 1):
        counts = np.bincount(fold[y == cls], minlength=5)
        assert counts.max() - counts.min() <= 1
    assert np.array_equal(fold, stratified_folds(y, 5, 0))
    assert not np.array_equal(fold, stratified_folds(y, 5, 1))


def test_stratified_cv_auroc_report():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((200, 3))
    y = (x[:, 0] + 0.5 * rng.standard_normal(200) > 0).astype(int)
    report = stratified_cv_auroc(x, y, None, LR, folds=5, reps=3, seed=2)
    assert len(report.values) == 15
    assert report.mean == pytest.approx(np.mean(report.values), abs=1e-12)
    assert report.mean > 0.8
    with pytest.raises(InputError):
        stratified_cv_auroc(x, np.zeros(200, dtype=int), None, LR)
    with pytest.raises(InputError):
        stratified_cv_auroc(x[:8], np.array([0, 0, 0, 0, 0, 1, 1, 1]), None, LR)


def test_flipping_with_balanced_classes_equals_no_correction():
    rng = np.random.default_rng(8)
    x = rng.standard_normal((100, 2))
    y = np.array([0, 1] * 50)
    none = stratified_cv_auroc(x, y, None, LR, reps=2, seed=1, correction="none")
    flip = stratified_cv_auroc(x, y, None, LR, reps=2, seed=1, correction="flipping")
    assert none.values == flip.values


def test_curve_csv_round_trip(tmp_path, rct_random):
    ds = rct_random(200, 2, seed=9)
    curve = uplift_curve(np.random.default_rng(1).standard_normal(ds.n), ds)
    write_curve_csv(curve, tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "fraction,gain"
    assert read_curve_csv(tmp_path / "c.csv") == curve


def test_report_round_trip(tmp_path, rct_random):
    ds = rct_random(300, 2, seed=10)
    report = repeated_holdout(ds, "flipped_two_model", LR, reps=2, seed=3)
    write_report(report, tmp_path / "r.txt")
    text = (tmp_path / "r.txt").read_text()
    assert "provenance.plan.k0_C=" in text
    back = read_report(tmp_path / "r.txt")
    assert back.mauuc_values == report.mauuc_values
    assert back.provenance == report.provenance
    assert back.model_dump(exclude={"curve"}) == report.model_dump(exclude={"curve"})
    failed = EvalReport(metamodel="CVT", learner="LR", seed=0, reps=1, train_frac=0.7, error="boom\nline")
    write_report(failed, tmp_path / "f.txt")
    assert read_report(tmp_path / "f.txt").error == "boom line"
