"""Shared domain types and the numerical machinery every strategy relies on.

This module owns the dataset / prior / bounds containers, the empirical risk,
the Monte-Carlo covariance estimate of d/d-alpha of a posterior-expected risk,
the projected SGD loop over the scalar temperature, and the grid-then-golden
scalar minimizer shared by all closed-form strategies.

Conventions used throughout the package:

* ``alpha`` is stored unnormalized; user-facing reporting uses ``alpha / n``.
* Bounds on the temperature are expressed as ``alpha / n`` ratios.
* All randomness flows through an explicit ``numpy.random.Generator``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import cho_factor, cho_solve

__all__ = [
    "NumericalError",
    "Dataset",
    "GaussianPrior",
    "AlphaBounds",
    "StrategyOutcome",
    "empirical_risk",
    "covariance_gradient_mc",
    "sgd_over_alpha",
    "minimize_scalar_grid",
    "spd_cholesky",
    "spd_solve",
    "spd_inverse",
]


class NumericalError(RuntimeError):
    """A numerical operation failed (non-finite value, non-SPD matrix, ...)."""


# ---------------------------------------------------------------------------
# SPD linear algebra helpers
# ---------------------------------------------------------------------------

_JITTER_SCALE = 1e-10
_JITTER_RETRIES = 3


def spd_cholesky(a: np.ndarray) -> tuple[np.ndarray, bool]:
    """Cholesky factor of a symmetric positive-definite matrix.

    On factorization failure a diagonal jitter of ``1e-10 * trace(a) / d`` is
    added and the factorization retried up to 3 times with 10x jitter growth.
    Returns the ``(c, lower)`` pair expected by ``scipy.linalg.cho_solve``.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    try:
        return cho_factor(a, lower=True)
    except np.linalg.LinAlgError:
        pass
    d = a.shape[0]
    jitter = _JITTER_SCALE * max(np.trace(a), 1.0) / d
    for _ in range(_JITTER_RETRIES):
        try:
            return cho_factor(a + jitter * np.eye(d), lower=True)
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise NumericalError(
        "matrix is not positive definite (Cholesky failed after "
        f"{_JITTER_RETRIES} jittered retries, final jitter {jitter:g})"
    )


def spd_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``a x = b`` for SPD ``a`` via Cholesky."""
    return cho_solve(spd_cholesky(a), np.asarray(b, dtype=float))


def spd_inverse(a: np.ndarray) -> np.ndarray:
    """Inverse of an SPD matrix via a Cholesky solve against the identity."""
    a = np.asarray(a, dtype=float)
    inv = cho_solve(spd_cholesky(a), np.eye(a.shape[0]))
    return 0.5 * (inv + inv.T)


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

REGRESSION = "regression"
BINARY = "binary"
_KINDS = (REGRESSION, BINARY)


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Dataset:
    """Paired design matrix ``Z`` (n x d) and response vector ``Y`` (n).

    Arrays are copied and marked read-only at construction, so a dataset is
    immutable and safe to share across threads. ``kind`` is ``"regression"``
    or ``"binary"`` (binary responses must be 0/1).
    """

    Z: np.ndarray
    Y: np.ndarray
    kind: str = REGRESSION

    def __post_init__(self):
        Z = np.atleast_2d(np.asarray(self.Z, dtype=float))
        Y = np.asarray(self.Y, dtype=float).ravel()
        if Z.ndim != 2:
            raise ValueError(f"Z must be a 2-D matrix, got ndim={Z.ndim}")
        if Z.shape[0] < 1 or Z.shape[1] < 1:
            raise ValueError(f"need n >= 1 and d >= 1, got Z shape {Z.shape}")
        if Y.shape[0] != Z.shape[0]:
            raise ValueError(
                f"Y length {Y.shape[0]} does not match Z row count {Z.shape[0]}"
            )
        if not np.all(np.isfinite(Z)):
            raise ValueError("Z contains non-finite entries")
        if not np.all(np.isfinite(Y)):
            raise ValueError("Y contains non-finite entries")
        if self.kind not in _KINDS:
            raise ValueError(f"kind must be one of {_KINDS}, got {self.kind!r}")
        if self.kind == BINARY and not np.all((Y == 0.0) | (Y == 1.0)):
            raise ValueError("binary dataset requires every Y_i in {0, 1}")
        object.__setattr__(self, "Z", _frozen(Z))
        object.__setattr__(self, "Y", _frozen(Y))

    @property
    def n(self) -> int:
        return self.Z.shape[0]

    @property
    def d(self) -> int:
        return self.Z.shape[1]

    def subset(self, idx) -> "Dataset":
        """New dataset holding the selected rows (copies, order preserved)."""
        return Dataset(self.Z[idx], self.Y[idx], self.kind)

    def prefix(self, t: int) -> "Dataset":
        """First ``t`` rows, as used by the sequential SafeBayes sums."""
        if not 1 <= t <= self.n:
            raise ValueError(f"prefix length {t} outside [1, {self.n}]")
        return Dataset(self.Z[:t], self.Y[:t], self.kind)

    def split_half(self) -> tuple["Dataset", "Dataset"]:
        """Split into halves; odd n assigns ceil(n/2) rows to the first."""
        if self.n < 2:
            raise ValueError("need at least 2 rows to split")
        m = (self.n + 1) // 2
        return self.subset(slice(0, m)), self.subset(slice(m, self.n))


@dataclass(frozen=True)
class GaussianPrior:
    """Gaussian prior N(mean, cov) over the regression weights."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).ravel()
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ValueError(
                f"cov shape {cov.shape} does not match mean dimension {mean.size}"
            )
        spd_cholesky(cov)  # must be SPD
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "cov", _frozen(cov))

    @property
    def d(self) -> int:
        return self.mean.size

    @classmethod
    def standard(cls, d: int) -> "GaussianPrior":
        """The typical choice: zero mean, identity covariance."""
        return cls(np.zeros(d), np.eye(d))


@dataclass(frozen=True)
class AlphaBounds:
    """Admissible interval for the normalized temperature ``alpha / n``."""

    lo: float = 0.0
    hi: float = 3.0

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
            raise ValueError("bounds must be finite")
        if self.lo < 0:
            raise ValueError(f"lo must be >= 0, got {self.lo}")
        if self.hi <= self.lo:
            raise ValueError(f"need hi > lo, got ({self.lo}, {self.hi})")

    def scaled(self, n: int) -> tuple[float, float]:
        """The interval in unnormalized alpha units for a dataset of size n."""
        return self.lo * n, self.hi * n

    def clip(self, alpha: float, n: int) -> float:
        lo, hi = self.scaled(n)
        return float(min(max(alpha, lo), hi))


@dataclass(frozen=True)
class StrategyOutcome:
    """A calibrated temperature together with its oracle evaluation."""

    alpha: float
    alpha_over_n: float
    oracle_risk: float
    wall_time_ms: int

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")

    @classmethod
    def make(
        cls,
        alpha: float,
        n: int,
        oracle_risk: float,
        wall_time_ms: int,
        bounds: AlphaBounds,
    ) -> "StrategyOutcome":
        """Build an outcome, enforcing the alpha/n consistency invariant."""
        ratio = alpha / n
        if not bounds.lo - 1e-9 <= ratio <= bounds.hi + 1e-9:
            raise ValueError(
                f"alpha/n = {ratio} outside bounds [{bounds.lo}, {bounds.hi}]"
            )
        return cls(float(alpha), float(ratio), float(oracle_risk), int(wall_time_ms))


# ---------------------------------------------------------------------------
# Risk functions and gradients
# ---------------------------------------------------------------------------


def empirical_risk(loss: Callable, theta, data: Dataset) -> float:
    """Arithmetic mean of the per-point loss over the dataset.

    ``loss(theta, Z, Y)`` must return the vector of per-row losses. A
    non-finite loss raises ``NumericalError`` naming the offending row.
    """
    vals = np.asarray(loss(theta, data.Z, data.Y), dtype=float).ravel()
    if vals.shape[0] != data.n:
        raise ValueError(
            f"loss returned {vals.shape[0]} values for {data.n} data points"
        )
    bad = ~np.isfinite(vals)
    if bad.any():
        i = int(np.argmax(bad))
        raise NumericalError(f"non-finite loss value at data index {i}")
    return float(vals.mean())


def covariance_gradient_mc(
    sampler: Callable[[int], object],
    r_train: Callable,
    r_test: Callable,
    mc: int,
) -> float:
    """Monte-Carlo estimate of d/d-alpha E[r_test] for an exact posterior.

    The derivative of the posterior-expected test risk with respect to the
    temperature equals minus the posterior covariance of the training and
    test risks, estimated here from ``mc`` i.i.d. posterior draws:

        -( mean(r_test * r_train) - mean(r_test) * mean(r_train) )

    ``sampler(mc)`` returns a batch of draws; ``r_train`` / ``r_test`` map
    that batch to 1-D arrays of per-draw risks.
    """
    if mc < 2:
        raise ValueError(f"need mc >= 2 samples, got {mc}")
    draws = sampler(int(mc))
    a = np.asarray(r_train(draws), dtype=float).ravel()
    b = np.asarray(r_test(draws), dtype=float).ravel()
    if a.shape[0] != mc or b.shape[0] != mc:
        raise ValueError("risk functions must return one value per draw")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise NumericalError("non-finite risk value among posterior draws")
    return float(-(np.mean(a * b) - np.mean(a) * np.mean(b)))


def sgd_over_alpha(
    grad: Callable[[float], float],
    alpha_init: float,
    bounds: AlphaBounds,
    n: int,
    max_iters: int = 200,
    tol: float = 1e-4,
    eta0: float | None = None,
) -> float:
    """Projected SGD on the scalar temperature with an inverse-sqrt schedule.

    Iterates ``alpha <- clip(alpha - eta_t * grad(alpha))`` with
    ``eta_t = eta0 / sqrt(t)``, stopping after ``max_iters`` steps or once the
    clipped update moves less than ``tol`` in alpha/n units. ``eta0`` defaults
    to ``0.5 * n``. The returned value always lies inside the scaled bounds.
    """
    lo, hi = bounds.scaled(n)
    if not lo <= alpha_init <= hi:
        raise ValueError(
            f"alpha_init {alpha_init} outside scaled bounds [{lo}, {hi}]"
        )
    if eta0 is None:
        eta0 = 0.5 * n
    alpha = float(alpha_init)
    for t in range(1, max_iters + 1):
        g = float(grad(alpha))
        if not np.isfinite(g):
            raise NumericalError(f"non-finite gradient at SGD iteration {t}")
        new = min(max(alpha - (eta0 / np.sqrt(t)) * g, lo), hi)
        delta = abs(new - alpha)
        alpha = new
        if delta / n < tol:
            break
    return float(min(max(alpha, lo), hi))


# ---------------------------------------------------------------------------
# Grid-then-refine scalar minimization
# ---------------------------------------------------------------------------

_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0  # 1/phi


def minimize_scalar_grid(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    grid_points: int = 200,
    tol: float = 1e-5,
) -> tuple[float, float]:
    """Minimize a scalar function on [lo, hi]; ties break toward smaller x.

    A ``grid_points``-point bracketing grid locates the coarse minimum, then
    golden-section refinement shrinks the bracket until its width falls below
    the absolute tolerance ``tol``. The exact grid endpoints stay among the
    final candidates, so monotone objectives return the boundary exactly.
    Returns ``(argmin, min)``.
    """
    if hi <= lo:
        raise ValueError(f"need hi > lo, got ({lo}, {hi})")
    if grid_points < 2:
        raise ValueError("grid needs at least 2 points")
    xs = np.linspace(lo, hi, grid_points)
    vals = np.array([float(f(x)) for x in xs])
    if not np.all(np.isfinite(vals)):
        i = int(np.argmax(~np.isfinite(vals)))
        raise NumericalError(f"objective is non-finite at x={xs[i]!r}")
    i = int(np.argmin(vals))  # argmin takes the first minimum: smaller x wins
    a = xs[max(i - 1, 0)]
    b = xs[min(i + 1, len(xs) - 1)]

    candidates = [(xs[i], vals[i]), (a, float(f(a))), (b, float(f(b)))]
    # golden-section refinement of the bracket
    x1 = b - _INVPHI * (b - a)
    x2 = a + _INVPHI * (b - a)
    f1, f2 = float(f(x1)), float(f(x2))
    while (b - a) > tol:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _INVPHI * (b - a)
            f1 = float(f(x1))
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _INVPHI * (b - a)
            f2 = float(f(x2))
    candidates += [(x1, f1), (x2, f2)]
    # smallest value wins; on ties prefer the smaller abscissa
    best_x, best_v = candidates[0]
    for x, v in candidates[1:]:
        if v < best_v or (v == best_v and x < best_x):
            best_x, best_v = x, v
    return float(best_x), float(best_v)
