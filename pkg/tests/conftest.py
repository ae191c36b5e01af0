"""Shared test helpers (statistical error bars for MC estimators)."""

import numpy as np
import pytest


def covariance_se(a: np.ndarray, b: np.ndarray) -> float:
    """Asymptotic standard error of the sample covariance of (a, b).

    Var(cov_hat) ~ (E[(a-Ea)^2 (b-Eb)^2] - Cov(a,b)^2) / mc.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    da = a - a.mean()
    db = b - b.mean()
    cov = float(np.mean(da * db))
    m22 = float(np.mean(da**2 * db**2))
    return float(np.sqrt(max(m22 - cov**2, 0.0) / a.size))


def mean_se(x: np.ndarray) -> float:
    """Standard error of a plain MC mean."""
    x = np.asarray(x, dtype=float)
    return float(x.std(ddof=1) / np.sqrt(x.size))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
