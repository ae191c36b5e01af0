"""Temperature calibration for tempered posteriors.

A toolkit for choosing the temperature of a tempered (alpha-) posterior from
data: exact conjugate posteriors for linear regression with known and
unknown noise variance, two variational Gaussian posteriors for logistic
regression, five calibration strategies, synthetic data generators, and an
experiment harness that reproduces the strategy comparisons.
"""

from .core import (
    AlphaBounds,
    Dataset,
    GaussianPrior,
    NumericalError,
    StrategyOutcome,
    covariance_gradient_mc,
    empirical_risk,
    minimize_scalar_grid,
    sgd_over_alpha,
)

__version__ = "0.1.0"

__all__ = [
    "AlphaBounds",
    "Dataset",
    "GaussianPrior",
    "NumericalError",
    "StrategyOutcome",
    "covariance_gradient_mc",
    "empirical_risk",
    "minimize_scalar_grid",
    "sgd_over_alpha",
    "__version__",
]
