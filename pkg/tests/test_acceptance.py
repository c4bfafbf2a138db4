"""End-to-end properties of the flipping correction, from the label identity up to benchmark ordering."""
import math
from fractions import Fraction

import numpy as np
import pytest

from flipuplift.evaluation import (
    mauuc,
    repeated_holdout,
    stratified_cv_auroc,
    uplift_curve,
    weighted_auroc,
)
from flipuplift.metamodels import fit_cvt, fit_flipped, fit_flipped_cvt, fit_stratified_cvt
from flipuplift.rct_data import RctDataset, generate_synthetic, make_artificial_classification
from flipuplift.rebalance import (
    flip_expand_weights,
    flip_probability,
    flip_stochastic,
    log_odds_dependence,
    recover_tau,
)
from flipuplift.schema import FlipPlan, LearnerConfig, RecoveryTransform, SyntheticSpec

LR = LearnerConfig(kind="logistic")
X1 = np.zeros((1, 1))


def _diff_sigma(ds):
    """Binomial standard error of the empirical rate difference between the groups."""
    s = 0.0
    for arm in (True, False):
        part = ds.arm(arm)
        r = part.response.mean()
        s += r * (1 - r) / part.n
    return math.sqrt(s)


def _empirical_tau(ds):
    return ds.arm(True).response.mean() - ds.arm(False).response.mean()


def test_stochastic_flip_scales_class_probability():
    n = 1_000_000
    rng = np.random.default_rng(1)
    y = (rng.random(n) < 0.2).astype(int)
    ds = RctDataset(np.zeros((n, 1)), y, np.arange(n) % 2)
    out = flip_stochastic(ds, FlipPlan.for_majorities(0.5, 0, 0), seed=2)
    sigma = math.sqrt(0.4 * 0.6 / n)
    assert abs((out.response == 0).mean() - 0.4) < 3 * sigma


@pytest.mark.slow
def test_flipped_cvt_recovers_rare_uplift(rct_bernoulli):
    ds = rct_bernoulli(1_000_000, 0.03, 0.01, seed=3)
    model = fit_flipped_cvt(ds, LR)
    tau = model.predict_cate(X1)[0]
    assert model.provenance["plan"]["k0_T"] == pytest.approx(1 / (0.97 + 0.99), abs=1e-3)
    assert tau == pytest.approx(_empirical_tau(ds), abs=1e-5)
    assert abs(tau - 0.02) < 3 * _diff_sigma(ds)


@pytest.mark.parametrize("maj_t,maj_c", [(1, 0), (0, 1)])
def test_mixed_majority_map_inverts_exactly(maj_t, maj_c):
    rng = np.random.default_rng(4)
    for _ in range(1000):
        p_t = Fraction(int(rng.integers(0, 10_000)), 10_000)
        p_c = Fraction(int(rng.integers(0, 10_000)), 10_000)
        k = Fraction(int(rng.integers(1, 10_000)), 10_000)
        plan = FlipPlan.for_majorities(float(k), maj_t, maj_c)
        kt = (k, 1) if maj_t == 0 else (1, k)
        kc = (k, 1) if maj_c == 0 else (1, k)
        breve = flip_probability(p_t, *kt) - flip_probability(p_c, *kc)
        tau = recover_tau(float(breve), RecoveryTransform.from_plan(plan))
        assert abs(tau - float(p_t - p_c)) < 1e-12


@pytest.mark.slow
def test_mixed_majority_recovery_monte_carlo(rct_bernoulli):
    ds = rct_bernoulli(1_000_000, 0.7, 0.4, seed=5)
    model = fit_flipped(ds, "two_model", LR)
    assert model.provenance["plan"]["mode"] == "mixed"
    tau = model.predict_cate(X1)[0]
    assert tau == pytest.approx(_empirical_tau(ds), abs=1e-5)
    assert abs(tau - 0.3) < 3 * _diff_sigma(ds)


@pytest.mark.slow
def test_undersampling_distorts_where_flipping_does_not(rct_bernoulli):
    ds = rct_bernoulli(1_000_000, 0.4, 0.3, seed=6)
    sigma = _diff_sigma(ds)
    stratified = fit_stratified_cvt(ds, LR).predict_cate(X1)[0]
    flipped = fit_flipped_cvt(ds, LR).predict_cate(X1)[0]
    assert abs(stratified - 0.1) > 5 * sigma
    assert abs(flipped - 0.1) < 3 * sigma


def test_cvt_probability_is_half_shifted_uplift(rct_bernoulli):
    ds = rct_bernoulli(100_000, 0.6, 0.4, seed=7)
    p = fit_cvt(ds, LR).models["single"].predict_proba(X1)[0]
    sigma = math.sqrt(0.24 / 100_000 + 0.24 / 100_000) / 2
    assert abs(p - (0.2 + 1) / 2) < 3 * sigma


@pytest.mark.parametrize("seed", range(10))
def test_flipped_cvt_response_independent_of_group(seed, rct_random):
    base = rct_random(1200, 3, seed=seed, rate=0.15, weighted=seed % 2 == 1)
    # drop part of the control group so the groups are unequal
    keep = (base.treatment == 1) | (np.random.default_rng(seed).random(base.n) < 0.2 + 0.2 * (seed % 3))
    ds = base.take(np.flatnonzero(keep))
    model = fit_flipped_cvt(ds, LR)
    assert abs(model.provenance["cvt_rate_T"] - model.provenance["cvt_rate_C"]) < 1e-10


def test_group_dependence_grows_with_k():
    rng = np.random.default_rng(8)
    grid = np.linspace(0.01, 0.99, 99)
    violations = 0
    for _ in range(100):
        a, b = rng.uniform(0.01, 0.99, 2)
        values = np.array([log_odds_dependence(a, b, k) for k in grid])
        violations += int(np.sum(np.diff(values) <= 0))
    assert violations == 0


def test_weighted_flip_matches_stochastic_average():
    rng = np.random.default_rng(9)
    n = 100
    y = (rng.random(n) < 0.3).astype(int)
    t = np.arange(n) % 2
    q = rng.uniform(0.05, 0.95, n)
    ds = RctDataset(np.arange(n, dtype=float), y, t)
    plan = FlipPlan.for_majorities(0.6, 0, 0)

    def log_loss(response, prob, weight):
        ll = -(response * np.log(prob) + (1 - response) * np.log(1 - prob))
        return float((weight * ll).sum() / weight.sum())

    expanded = flip_expand_weights(ds, plan)
    source = expanded.features[:, 0].astype(int)
    weighted = log_loss(expanded.response, q[source], expanded.weight)
    draws = np.array([
        log_loss(flip_stochastic(ds, plan, seed=s).response, q, np.ones(n)) for s in range(1000)
    ])
    se = draws.std(ddof=1) / math.sqrt(len(draws))
    assert abs(draws.mean() - weighted) < 3 * se


def _brute_force_gains(tau, y, t, w, grid_size):
    n = len(tau)
    order = sorted(range(n), key=lambda i: -tau[i])
    gains = []
    for i in range(grid_size):
        rho = Fraction(i, grid_size - 1)
        m = math.ceil(rho * n)
        rates = []
        for g in (1, 0):
            top = [j for j in order[:m] if t[j] == g]
            wg = sum(w[j] for j in top)
            rates.append(sum(w[j] * y[j] for j in top) / wg if wg > 0 else 0.0)
        gains.append(float(rho) * (rates[0] - rates[1]) if m else 0.0)
    return gains


def _brute_force_auroc(scores, labels, w):
    num = den = 0.0
    for i in range(len(scores)):
        for j in range(len(scores)):
            if labels[i] == 1 and labels[j] == 0:
                credit = 1.0 if scores[i] > scores[j] else 0.5 if scores[i] == scores[j] else 0.0
                num += w[i] * w[j] * credit
                den += w[i] * w[j]
    return num / den


def test_evaluation_matches_enumeration():
    rng = np.random.default_rng(10)
    for _ in range(1000):
        n = int(rng.integers(2, 13))
        t = np.zeros(n, dtype=int)
        t[rng.permutation(n)[: int(rng.integers(1, n))]] = 1
        y = rng.integers(0, 2, n)
        w = rng.uniform(0.1, 3.0, n)
        tau = rng.choice([-0.5, -0.1, 0.0, 0.3, 0.5], n)
        grid = int(rng.integers(2, 15))
        curve = uplift_curve(tau, RctDataset(np.zeros((n, 1)), y, t, w), grid_size=grid)
        gains = _brute_force_gains(tau.tolist(), y.tolist(), t.tolist(), w.tolist(), grid)
        assert np.allclose(curve.gains, gains, atol=1e-12, rtol=0)
        f = curve.fractions
        area = sum((gains[i] + gains[i + 1]) / 2 * (f[i + 1] - f[i]) for i in range(grid - 1))
        assert mauuc(curve) == pytest.approx(1000 * (area - gains[-1] / 2), abs=1e-9)
        if 0 < y.sum() < n:
            assert weighted_auroc(tau, y, w) == pytest.approx(_brute_force_auroc(tau, y, w), abs=1e-10)


@pytest.mark.slow
def test_benchmark_ordering_on_rare_responses():
    spec = SyntheticSpec(p=4, beta_control=[-4.8, 0.5, 0.3, 0.0, 0.0], beta_uplift=[0.4, 0.6, 0.0, 0.0, 0.0], seed=11)
    ds, _ = generate_synthetic(spec, 100_000)
    assert ds.response.mean() < 0.03
    for learner in (LR, LearnerConfig.from_name("DT_0.05")):
        means = {
            kind: repeated_holdout(ds, kind, learner, reps=20, seed=11).mean
            for kind in ("cvt", "stratified_cvt", "flipped_cvt")
        }
        assert means["flipped_cvt"] > means["stratified_cvt"] > means["cvt"], (learner.name, means)


@pytest.mark.slow
def test_flipping_not_worse_than_undersampling_for_classification():
    x, y = make_artificial_classification(n=1000, n_minority=20, seed=12)
    means = {
        correction: stratified_cv_auroc(x, y, None, LR, folds=5, reps=100, seed=12, correction=correction).mean
        for correction in ("flipping", "undersampling")
    }
    assert means["flipping"] >= means["undersampling"] - 0.01
