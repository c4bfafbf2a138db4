import sys
from pathlib import Path

import numpy as np
import pytest

# Run against the source tree
sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from flipuplift.rct_data import RctDataset  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: Monte-Carlo checks on 10^5-10^6 records")


def counts_rct(n_t, ones_t, n_c, ones_c, p=1, weight=None):
    """Constant-feature RCT with exact class counts per group."""
    y = np.concatenate([
        np.ones(ones_t), np.zeros(n_t - ones_t), np.ones(ones_c), np.zeros(n_c - ones_c),
    ]).astype(int)
    t = np.concatenate([np.ones(n_t), np.zeros(n_c)]).astype(int)
    return RctDataset(np.zeros((n_t + n_c, p)), y, t, weight)


def bernoulli_rct(n_per_arm, rate_t, rate_c, seed, p=1):
    """Constant-feature RCT with Bernoulli responses."""
    rng = np.random.default_rng(seed)
    y = np.concatenate([rng.random(n_per_arm) < rate_t, rng.random(n_per_arm) < rate_c]).astype(int)
    t = np.concatenate([np.ones(n_per_arm), np.zeros(n_per_arm)]).astype(int)
    return RctDataset(np.zeros((2 * n_per_arm, p)), y, t)


def random_rct(n, p, seed, rate=0.3, weighted=False):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p))
    t = np.arange(n) % 2
    y = (rng.random(n) < rate + 0.1 * np.tanh(x[:, 0]) * t).astype(int)
    w = rng.uniform(0.5, 2.0, n) if weighted else None
    return RctDataset(x, y, t, w)


@pytest.fixture
def rct_counts():
    return counts_rct


@pytest.fixture
def rct_bernoulli():
    return bernoulli_rct


@pytest.fixture
def rct_random():
    return random_rct
