"""The five temperature-calibration strategies as uniform functions.

Every strategy maps ``(Dataset, model) -> alpha`` with the search bounded in
alpha/n units. The backbone follows the model family:

* exact-posterior linear models route the constant-free strategies (naive,
  sample splitting, SafeBayes) through closed-form scalar minimization;
* bootstrapping always runs projected SGD on the replicate-averaged
  gradient (the exact per-replicate derivative for known-variance
  regression, a Monte-Carlo covariance estimate otherwise);
* variational logistic models route every data-driven strategy through
  Monte-Carlo covariance gradients and SGD.

``mode`` in the config can force either route where it is defined.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve

from . import linreg_known as lrk
from . import linreg_unknown as lru
from . import logistic_variational as lv
from .core import (
    AlphaBounds,
    Dataset,
    NumericalError,
    covariance_gradient_mc,
    minimize_scalar_grid,
    sgd_over_alpha,
    spd_cholesky,
)

__all__ = [
    "STRATEGIES",
    "SgdConfig",
    "StrategyConfig",
    "bayes_strategy",
    "naive_strategy",
    "sample_split_strategy",
    "bootstrap_strategy",
    "safebayes_strategy",
    "run_strategy",
    "estimate_curve",
    "timed_strategy",
]

STRATEGIES = ("bayes", "naive", "sample_split", "bootstrap", "safebayes")
_MODES = ("auto", "closed_form", "mc_sgd")


@dataclass(frozen=True)
class SgdConfig:
    """Projected-SGD knobs for the MC-gradient routes (eta0 None -> 0.5 n)."""

    eta0: float | None = None
    max_iters: int = 200
    tol: float = 1e-4

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError(f"need max_iters >= 1, got {self.max_iters}")
        if self.tol <= 0:
            raise ValueError(f"need tol > 0, got {self.tol}")


@dataclass(frozen=True)
class StrategyConfig:
    bounds: AlphaBounds = field(default_factory=AlphaBounds)
    mc: int = 2000
    boot: int = 1000
    sgd: SgdConfig = field(default_factory=SgdConfig)
    em_iters: int | None = None  # None: use the model's own setting
    mode: str = "auto"
    grid_points: int = 200

    def __post_init__(self):
        if self.mc < 2:
            raise ValueError(f"need mc >= 2, got {self.mc}")
        if self.boot < 1:
            raise ValueError(f"need boot >= 1, got {self.boot}")
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, got {self.mode!r}")
        if self.grid_points < 2:
            raise ValueError(f"need grid_points >= 2, got {self.grid_points}")


# ---------------------------------------------------------------------------
# Per-family backends: the uniform surface the strategies drive
# ---------------------------------------------------------------------------


class _KnownVarBackend:
    closed_form = True

    def __init__(self, model: lrk.KnownVarModel, cfg: StrategyConfig):
        self.model = model

    def fit(self, data, alpha, rng=None):
        return lrk.fit(self.model, data, alpha)

    def sampler(self, post):
        return lambda mc, rng: lrk.sample_posterior(post, mc, rng)

    def risks(self, draws, data):
        ztz = data.Z.T @ data.Z
        zty = data.Z.T @ data.Y
        yty = data.Y @ data.Y
        quad = yty - 2.0 * (draws @ zty) + np.einsum("ij,jk,ik->i", draws, ztz, draws)
        return quad / (2.0 * self.model.sigma2 * data.n)

    def risk_exact(self, post, data):
        return lrk.gen_error_estimate(self.model, post, data)

    def peprl_evaluator(self, data):
        return _prefix_score_evaluator(
            data,
            self.model.prior.mean,
            self.model.prior.cov,
            sigma2=self.model.sigma2,
            nig=None,
        )

    def psi(self, data, alpha, boot, mc, rng):
        return _psi_known_batched(self.model, data, alpha, boot, rng)


class _NIGBackend:
    closed_form = True

    def __init__(self, prior: lru.NIGPrior, cfg: StrategyConfig):
        self.prior = prior

    def fit(self, data, alpha, rng=None):
        return lru.fit_nig(self.prior, data, alpha)

    def sampler(self, post):
        return lambda mc, rng: lru.sample_nig(post, rng, size=mc)

    def risks(self, draws, data):
        thetas, sigma2s = draws
        return lru.risk_of_draws(thetas, sigma2s, data)

    def risk_exact(self, post, data):
        return lru.gen_error_estimate_nig(post, data, mode="closed_form")

    def peprl_evaluator(self, data):
        return _prefix_score_evaluator(
            data,
            self.prior.mean,
            self.prior.cov,
            sigma2=None,
            nig=(self.prior.a, self.prior.b),
        )

    def psi(self, data, alpha, boot, mc, rng):
        return _psi_mc_nig(self.prior, data, alpha, boot, mc, rng)


class _VariationalBackend:
    """Common MC machinery for the logistic posteriors."""

    closed_form = False

    def risks(self, draws, data):
        return lv.risk_of_theta_draws(draws, data)

    def risk_exact(self, post, data):
        raise NumericalError("no closed-form risk for variational posteriors")

    def peprl_evaluator(self, data):
        raise NumericalError("no closed-form sequential score for variational posteriors")

    def psi(self, data, alpha, boot, mc, rng):
        n = data.n
        total = 0.0
        for _ in range(boot):
            replicate = data.subset(rng.integers(0, n, size=n))
            post = self.fit(replicate, alpha, rng)
            sampler = self.sampler(post)
            draws = sampler(mc, rng)
            a = self.risks(draws, replicate)
            b = self.risks(draws, data)
            total += -(np.mean(a * b) - np.mean(a) * np.mean(b))
        return total / boot


class _JaakkolaBackend(_VariationalBackend):
    def __init__(self, model: lv.JaakkolaModel, cfg: StrategyConfig):
        self.model = model
        self.em_iters = cfg.em_iters if cfg.em_iters is not None else model.em_iters

    def fit(self, data, alpha, rng=None):
        return lv.jaakkola_fit(self.model.prior, data, alpha, em_iters=self.em_iters)

    def sampler(self, post):
        return lambda mc, rng: lv.sample_jaakkola(post, mc, rng)


class _BbBBackend(_VariationalBackend):
    def __init__(self, model: lv.BbBModel, cfg: StrategyConfig):
        self.model = model

    def fit(self, data, alpha, rng=None):
        if rng is None:
            raise ValueError("the mean-field SGD posterior requires an rng")
        return lv.bbb_fit(
            data, alpha, iters=self.model.iters, eta0=self.model.eta0, rng=rng
        )

    def sampler(self, post):
        return lambda mc, rng: lv.sample_bbb(post, mc, rng)


def backend_for(model, cfg: StrategyConfig):
    if isinstance(model, lrk.KnownVarModel):
        return _KnownVarBackend(model, cfg)
    if isinstance(model, lru.NIGPrior):
        return _NIGBackend(model, cfg)
    if isinstance(model, lv.JaakkolaModel):
        return _JaakkolaBackend(model, cfg)
    if isinstance(model, lv.BbBModel):
        return _BbBBackend(model, cfg)
    raise TypeError(f"unsupported model type {type(model).__name__}")


def _route(cfg: StrategyConfig, backend) -> str:
    if cfg.mode == "auto":
        return "closed_form" if backend.closed_form else "mc_sgd"
    if cfg.mode == "closed_form" and not backend.closed_form:
        raise ValueError("closed_form mode is not available for this model family")
    return cfg.mode


def _minimize(cfg: StrategyConfig, n: int, objective) -> float:
    lo, hi = cfg.bounds.scaled(n)
    alpha, _ = minimize_scalar_grid(
        objective, lo, hi, grid_points=cfg.grid_points, tol=1e-5 * n
    )
    return alpha


def _sgd(cfg: StrategyConfig, n: int, grad) -> float:
    alpha0 = cfg.bounds.clip(float(n), n)
    return sgd_over_alpha(
        grad,
        alpha0,
        cfg.bounds,
        n,
        max_iters=cfg.sgd.max_iters,
        tol=cfg.sgd.tol,
        eta0=cfg.sgd.eta0,
    )


def _require_rng(rng, what: str) -> np.random.Generator:
    if rng is None:
        raise ValueError(f"{what} requires an rng")
    return rng


# ---------------------------------------------------------------------------
# The strategies
# ---------------------------------------------------------------------------


def bayes_strategy(data: Dataset, model, cfg: StrategyConfig | None = None) -> float:
    """The constant choice alpha = n, clipped to the bounds."""
    cfg = cfg or StrategyConfig()
    return cfg.bounds.clip(float(data.n), data.n)


def naive_strategy(
    data: Dataset, model, cfg: StrategyConfig | None = None, rng=None
) -> float:
    """Minimize the expected risk with fit data = evaluation data.

    For exact posteriors the derivative is minus a variance, so this lands
    on the upper bound.
    """
    cfg = cfg or StrategyConfig()
    backend = backend_for(model, cfg)
    if _route(cfg, backend) == "closed_form":
        return _minimize(
            cfg, data.n, lambda a: backend.risk_exact(backend.fit(data, a), data)
        )
    rng = _require_rng(rng, "the MC-gradient route")

    def grad(alpha):
        post = backend.fit(data, alpha, rng)
        sampler = backend.sampler(post)
        r = lambda draws: backend.risks(draws, data)
        return covariance_gradient_mc(lambda m: sampler(m, rng), r, r, cfg.mc)

    return _sgd(cfg, data.n, grad)


def sample_split_strategy(
    data: Dataset, model, cfg: StrategyConfig | None = None, rng=None
) -> float:
    """Fit the posterior on the first half, minimize the risk of the second."""
    cfg = cfg or StrategyConfig()
    backend = backend_for(model, cfg)
    first, second = data.split_half()
    if _route(cfg, backend) == "closed_form":
        return _minimize(
            cfg, data.n, lambda a: backend.risk_exact(backend.fit(first, a), second)
        )
    rng = _require_rng(rng, "the MC-gradient route")

    def grad(alpha):
        post = backend.fit(first, alpha, rng)
        sampler = backend.sampler(post)
        return covariance_gradient_mc(
            lambda m: sampler(m, rng),
            lambda draws: backend.risks(draws, first),
            lambda draws: backend.risks(draws, second),
            cfg.mc,
        )

    return _sgd(cfg, data.n, grad)


def bootstrap_strategy(
    data: Dataset, model, cfg: StrategyConfig | None = None, rng=None
) -> float:
    """SGD on the replicate-averaged risk derivative.

    Each step draws ``boot`` fresh case resamples, fits one posterior per
    replicate, and averages the per-replicate derivative (exact for the
    known-variance model, a Monte-Carlo covariance estimate otherwise); risk
    terms are always evaluated against the observed data.
    """
    cfg = cfg or StrategyConfig()
    backend = backend_for(model, cfg)
    rng = _require_rng(rng, "bootstrapping")
    return _sgd(
        cfg, data.n, lambda a: backend.psi(data, a, cfg.boot, cfg.mc, rng)
    )


def safebayes_strategy(
    data: Dataset, model, cfg: StrategyConfig | None = None, rng=None
) -> float:
    """Minimize the sequential one-step-ahead prediction score.

    Closed-form models minimize S(alpha) on the shared grid; otherwise SGD
    runs on the summed per-prefix covariance gradients
    -Cov[loss(theta, X_(t+1)), r^(t)(theta)].
    """
    cfg = cfg or StrategyConfig()
    if data.n < 2:
        raise ValueError(f"need n >= 2 for the sequential score, got n={data.n}")
    backend = backend_for(model, cfg)
    if _route(cfg, backend) == "closed_form":
        return _minimize(cfg, data.n, backend.peprl_evaluator(data))
    rng = _require_rng(rng, "the MC-gradient route")

    def grad(alpha):
        total = 0.0
        for t in range(1, data.n):
            prefix = data.prefix(t)
            post = backend.fit(prefix, alpha, rng)
            sampler = backend.sampler(post)
            nxt = data.subset([t])
            total += covariance_gradient_mc(
                lambda m: sampler(m, rng),
                lambda draws: backend.risks(draws, prefix),
                lambda draws: backend.risks(draws, nxt),
                cfg.mc,
            )
        return total

    return _sgd(cfg, data.n, grad)


_STRATEGY_FUNCS = {
    "bayes": lambda data, model, cfg, rng: bayes_strategy(data, model, cfg),
    "naive": naive_strategy,
    "sample_split": sample_split_strategy,
    "bootstrap": bootstrap_strategy,
    "safebayes": safebayes_strategy,
}


def run_strategy(
    kind: str, data: Dataset, model, cfg: StrategyConfig | None = None, rng=None
) -> float:
    if kind not in STRATEGIES:
        raise ValueError(f"unknown strategy {kind!r}; expected one of {STRATEGIES}")
    func = _STRATEGY_FUNCS[kind]
    if kind == "bayes":
        return func(data, model, cfg, rng)
    return func(data, model, cfg, rng=rng)


def timed_strategy(
    kind: str, data: Dataset, model, cfg: StrategyConfig | None = None, rng=None
) -> tuple[float, int]:
    """Run a strategy and report (alpha, wall-clock milliseconds)."""
    t0 = time.perf_counter()
    alpha = run_strategy(kind, data, model, cfg, rng)
    return alpha, int(round(1000.0 * (time.perf_counter() - t0)))


def estimate_curve(
    kind: str,
    data: Dataset,
    model,
    alphas,
    cfg: StrategyConfig | None = None,
    rng=None,
) -> np.ndarray:
    """The strategy's own risk-estimate curve over a temperature grid.

    naive / sample_split return their expected-risk estimates; safebayes
    returns the sequential score averaged per predicted point (so it lives
    on the per-point loss scale); bootstrap returns the replicate-averaged
    expected risk under a fixed resample set. The constant strategy has no
    estimate.
    """
    cfg = cfg or StrategyConfig()
    backend = backend_for(model, cfg)
    alphas = np.asarray(alphas, dtype=float)

    def mc_estimate(fit_batch, eval_batch, alpha):
        post = backend.fit(fit_batch, alpha, rng)
        draws = backend.sampler(post)(cfg.mc, _require_rng(rng, "the MC estimate"))
        return float(np.mean(backend.risks(draws, eval_batch)))

    def exactish(fit_batch, eval_batch, alpha):
        if backend.closed_form:
            return backend.risk_exact(backend.fit(fit_batch, alpha), eval_batch)
        return mc_estimate(fit_batch, eval_batch, alpha)

    if kind == "naive":
        return np.array([exactish(data, data, a) for a in alphas])
    if kind == "sample_split":
        first, second = data.split_half()
        return np.array([exactish(first, second, a) for a in alphas])
    if kind == "safebayes":
        if backend.closed_form:
            score = backend.peprl_evaluator(data)
            return np.array([score(a) / (data.n - 1) for a in alphas])
        out = []
        for a in alphas:
            vals = []
            for t in range(1, data.n):
                vals.append(mc_estimate(data.prefix(t), data.subset([t]), a))
            out.append(float(np.mean(vals)))
        return np.array(out)
    if kind == "bootstrap":
        base = _require_rng(rng, "the bootstrap estimate")
        seeds = base.integers(0, 2**63 - 1, size=cfg.boot)
        out = []
        for a in alphas:
            vals = []
            for s in seeds:
                local = np.random.default_rng(int(s))
                replicate = data.subset(local.integers(0, data.n, size=data.n))
                if backend.closed_form:
                    vals.append(backend.risk_exact(backend.fit(replicate, a), data))
                else:
                    vals.append(mc_estimate(replicate, data, a))
            out.append(float(np.mean(vals)))
        return np.array(out)
    raise ValueError(f"strategy {kind!r} has no risk-estimate curve")


# ---------------------------------------------------------------------------
# Batched closed-form helpers
# ---------------------------------------------------------------------------


def _prefix_stats(data: Dataset):
    """Cumulative sufficient statistics of the prefixes 1..n-1."""
    Z, Y = data.Z, data.Y
    outer = np.einsum("ni,nj->nij", Z, Z)
    cum_ztz = np.cumsum(outer, axis=0)[:-1]  # prefix t ends before row t
    cum_zty = np.cumsum(Z * Y[:, None], axis=0)[:-1]
    cum_yty = np.cumsum(Y * Y)[:-1]
    return cum_ztz, cum_zty, cum_yty, Z[1:], Y[1:]


def _prefix_score_evaluator(data, mu0, S0, sigma2, nig):
    """Fast S(alpha) evaluator shared by both linear models.

    Batches the n-1 prefix posteriors into one stacked solve per alpha.
    ``nig`` is None for the known-variance score (then ``sigma2`` is the
    assumed variance) or the prior's (a0, b0) for the unknown-variance one.
    """
    cum_ztz, cum_zty, cum_yty, z_next, y_next = _prefix_stats(data)
    t = np.arange(1, data.n, dtype=float)
    prior_chol = spd_cholesky(np.asarray(S0, dtype=float))
    d = len(mu0)
    s0_inv = cho_solve(prior_chol, np.eye(d))
    s0_inv_mu0 = cho_solve(prior_chol, np.asarray(mu0, dtype=float))
    mu0_quad = float(np.asarray(mu0) @ s0_inv_mu0)

    def score(alpha: float) -> float:
        denom = sigma2 * t if nig is None else t
        c = alpha / denom
        M = c[:, None, None] * cum_ztz + s0_inv
        rhs = np.concatenate(
            [(c[:, None] * cum_zty + s0_inv_mu0)[..., None], z_next[..., None]],
            axis=2,
        )
        sol = np.linalg.solve(M, rhs)
        mu = sol[..., 0]
        w = sol[..., 1]  # w = S z
        zm = np.einsum("ti,ti->t", z_next, mu)
        z_s_z = np.einsum("ti,ti->t", z_next, w)
        if nig is None:
            terms = y_next**2 + z_s_z + zm**2 - 2.0 * y_next * zm
            return float(terms.sum() / (2.0 * sigma2))
        a0, b0 = nig
        a = a0 + alpha / 2.0
        mu_m_mu = np.einsum("ti,ti->t", mu, rhs[..., 0])
        b = b0 + 0.5 * (mu0_quad - mu_m_mu + c * cum_yty)
        if np.any(b <= 0):
            raise NumericalError("ill-posed prefix posterior: rate parameter <= 0")
        ratio = a / b
        terms = (
            0.5 * ratio * (y_next - zm) ** 2
            + 0.5 * z_s_z
            + 0.5 * (np.log(b) - lru.digamma(a))
        )
        return float(terms.sum())

    return score


def _psi_known_batched(model, data, alpha, boot, rng) -> float:
    """Replicate-averaged exact derivative for the known-variance model.

    Equivalent to averaging ``gen_error_gradient(fit=replicate,
    eval=data)`` over ``boot`` case resamples, with the replicate posteriors
    batched into stacked solves.
    """
    n, d = data.n, data.d
    idx = rng.integers(0, n, size=(boot, n))
    Zb = data.Z[idx]
    Yb = data.Y[idx]
    prior = model.prior
    prior_chol = spd_cholesky(prior.cov)
    s0_inv = cho_solve(prior_chol, np.eye(d))
    s0_inv_mu0 = cho_solve(prior_chol, prior.mean)
    scale = 1.0 / (model.sigma2 * n)
    c = alpha * scale
    ztz_b = np.einsum("bni,bnj->bij", Zb, Zb)
    zty_b = np.einsum("bni,bn->bi", Zb, Yb)
    M = c * ztz_b + s0_inv
    a_eval = data.Z.T @ data.Z
    rhs = np.concatenate(
        [(c * zty_b + s0_inv_mu0)[..., None], np.broadcast_to(a_eval, (boot, d, d))],
        axis=2,
    )
    sol = np.linalg.solve(M, rhs)
    mu = sol[..., 0]
    P = sol[..., 1:]  # P = S A_eval
    resid = Yb - np.einsum("bni,bi->bn", Zb, mu)
    d_mu = scale * np.linalg.solve(M, np.einsum("bni,bn->bi", Zb, resid)[..., None])[..., 0]
    Q = np.linalg.solve(M, ztz_b)  # Q = S A_b
    trace_term = -scale * np.einsum("bij,bji->b", Q, P)
    zty_eval = data.Z.T @ data.Y
    g = (
        -2.0 * (d_mu @ zty_eval)
        + trace_term
        + 2.0 * np.einsum("bi,ij,bj->b", mu, a_eval, d_mu)
    )
    return float(np.mean(g) / (2.0 * model.sigma2 * data.n))


def _psi_mc_nig(prior, data, alpha, boot, mc, rng) -> float:
    """Replicate-averaged MC covariance gradient for the NIG model."""
    n, d = data.n, data.d
    idx = rng.integers(0, n, size=(boot, n))
    Zb = data.Z[idx]
    Yb = data.Y[idx]
    prior_chol = spd_cholesky(prior.cov)
    s0_inv = cho_solve(prior_chol, np.eye(d))
    s0_inv_mu0 = cho_solve(prior_chol, prior.mean)
    mu0_quad = float(prior.mean @ s0_inv_mu0)
    c = alpha / n
    ztz_b = np.einsum("bni,bnj->bij", Zb, Zb)
    zty_b = np.einsum("bni,bn->bi", Zb, Yb)
    yty_b = np.einsum("bn,bn->b", Yb, Yb)
    M = c * ztz_b + s0_inv
    rhs = s0_inv_mu0 + c * zty_b
    mu = np.linalg.solve(M, rhs[..., None])[..., 0]
    cov = np.linalg.solve(M, np.broadcast_to(np.eye(d), (boot, d, d)))
    cov = 0.5 * (cov + np.swapaxes(cov, 1, 2))
    a = prior.a + alpha / 2.0
    b = prior.b + 0.5 * (mu0_quad - np.einsum("bi,bi->b", mu, rhs) + c * yty_b)
    if np.any(b <= 0):
        raise NumericalError("ill-posed replicate posterior: rate parameter <= 0")
    L = np.linalg.cholesky(cov)
    sigma2 = b[:, None] / rng.gamma(a, 1.0, size=(boot, mc))
    z = rng.standard_normal((boot, mc, d))
    thetas = mu[:, None, :] + np.sqrt(sigma2)[..., None] * np.einsum(
        "bmi,bji->bmj", z, L
    )

    def risks(theta, s2, ztz, zty, yty, m):
        quad = (
            yty
            - 2.0 * np.einsum("bmi,bi->bm", theta, zty)
            + np.einsum("bmi,bij,bmj->bm", theta, ztz, theta)
        )
        return quad / (2.0 * s2 * m) + 0.5 * np.log(2.0 * np.pi * s2)

    r_train = risks(thetas, sigma2, ztz_b, zty_b, yty_b[:, None], n)
    a_eval = np.broadcast_to(data.Z.T @ data.Z, (boot, d, d))
    zty_eval = np.broadcast_to(data.Z.T @ data.Y, (boot, d))
    r_test = risks(thetas, sigma2, a_eval, zty_eval, float(data.Y @ data.Y), n)
    grads = -(
        (r_train * r_test).mean(axis=1) - r_train.mean(axis=1) * r_test.mean(axis=1)
    )
    return float(grads.mean())
