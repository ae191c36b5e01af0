import numpy as np
import pytest
from conftest import covariance_se, mean_se

from tempcal import linreg_known as lrk
from tempcal.core import AlphaBounds, Dataset, GaussianPrior, minimize_scalar_grid


def random_toy(seed, n=None, d=None, sigma2=1.0):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(8, 21))
    d = d or int(rng.integers(1, 4))
    Z = rng.standard_normal((n, d))
    Y = Z @ rng.standard_normal(d) + np.sqrt(sigma2) * rng.standard_normal(n)
    model = lrk.KnownVarModel(sigma2, GaussianPrior.standard(d))
    return model, Dataset(Z, Y)


class TestFit:
    def test_alpha_zero_returns_prior_exactly(self):
        model, data = random_toy(0)
        post = lrk.fit(model, data, 0.0)
        np.testing.assert_array_equal(post.mean, model.prior.mean)
        np.testing.assert_array_equal(post.cov, model.prior.cov)

    def test_hand_evaluation_d1(self):
        model = lrk.KnownVarModel(1.0, GaussianPrior(np.zeros(1), np.eye(1)))
        data = Dataset(np.array([[1.0]]), np.array([2.0]))
        post = lrk.fit(model, data, 1.0)
        assert post.cov[0, 0] == pytest.approx(0.5)
        assert post.mean[0] == pytest.approx(1.0)

    def test_huge_alpha_reaches_least_squares(self):
        model, data = random_toy(3, n=30, d=3)
        post = lrk.fit(model, data, 1e8)
        ls, *_ = np.linalg.lstsq(data.Z, data.Y, rcond=None)
        np.testing.assert_allclose(post.mean, ls, atol=1e-4)

    def test_non_spd_prior_rejected(self):
        with pytest.raises(Exception):
            GaussianPrior(np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_covariance_monotone_in_alpha(self):
        model, data = random_toy(5, n=25, d=3)
        prev = lrk.fit(model, data, 2.0).cov
        for alpha in (5.0, 20.0, 80.0):
            cur = lrk.fit(model, data, alpha).cov
            eig = np.linalg.eigvalsh(prev - cur)
            assert eig.min() >= -1e-10
            prev = cur

    def test_covariance_vanishes_at_extreme_alpha(self):
        model, data = random_toy(6, n=30, d=2)
        base = np.linalg.norm(lrk.fit(model, data, 0.0).cov, 2)
        extreme = np.linalg.norm(lrk.fit(model, data, 1e6 * data.n).cov, 2)
        assert extreme < 1e-4 * base

    def test_uses_only_given_rows(self):
        rng = np.random.default_rng(9)
        Z = rng.standard_normal((10, 2))
        Y = rng.standard_normal(10)
        model = lrk.KnownVarModel(1.0, GaussianPrior.standard(2))
        first = Dataset(Z[:5], Y[:5])
        ref = lrk.fit(model, first, 7.0)
        Z[5:] = 123.0
        Y[5:] = -42.0
        again = lrk.fit(model, Dataset(Z[:5], Y[:5]), 7.0)
        np.testing.assert_array_equal(ref.mean, again.mean)
        np.testing.assert_array_equal(ref.cov, again.cov)


class TestGenErrorEstimate:
    def test_delta_posterior_equals_plugin_risk(self):
        model, data = random_toy(11)
        theta = np.ones(data.d)
        post = lrk.GaussianPosterior(theta, np.zeros((data.d, data.d)))
        from tempcal.core import empirical_risk

        plugin = empirical_risk(
            lambda t, Z, Y: lrk.squared_error_loss(t, Z, Y, model.sigma2), theta, data
        )
        assert lrk.gen_error_estimate(model, post, data) == pytest.approx(plugin)

    def test_hand_evaluation(self):
        model = lrk.KnownVarModel(1.0, GaussianPrior.standard(1))
        data = Dataset(np.array([[1.0]]), np.array([0.0]))
        post = lrk.GaussianPosterior(np.zeros(1), np.eye(1))
        assert lrk.gen_error_estimate(model, post, data) == pytest.approx(0.5)

    def test_matches_mc_average(self):
        model, data = random_toy(12, n=15, d=2)
        post = lrk.fit(model, data, 10.0)
        rng = np.random.default_rng(99)
        draws = lrk.sample_posterior(post, 100_000, rng)
        resid = data.Y[None, :] - draws @ data.Z.T
        risks = (resid**2).mean(axis=1) / (2 * model.sigma2)
        closed = lrk.gen_error_estimate(model, post, data)
        assert abs(closed - risks.mean()) <= 3 * mean_se(risks)

    def test_dimension_mismatch(self):
        model, data = random_toy(13, d=2)
        post = lrk.GaussianPosterior(np.zeros(3), np.eye(3))
        with pytest.raises(ValueError):
            lrk.gen_error_estimate(model, post, data)


class TestGenErrorGradient:
    def test_naive_configuration_nonpositive(self):
        for seed in range(10):
            model, data = random_toy(seed)
            g = lrk.gen_error_gradient(model, data, data, float(data.n))
            assert g <= 0.0

    def test_finite_difference_agreement(self):
        for seed in range(10):
            model, data = random_toy(seed + 100)
            fit_half, eval_half = data.split_half()
            alpha = 0.7 * data.n
            f = lambda a: lrk.gen_error_estimate(
                model, lrk.fit(model, fit_half, a), eval_half
            )
            h = 1e-4 * data.n
            fd = (f(alpha + h) - f(alpha - h)) / (2 * h)
            exact = lrk.gen_error_gradient(model, fit_half, eval_half, alpha)
            assert fd == pytest.approx(exact, rel=1e-6)

    def test_alpha_zero_equals_minus_prior_variance(self):
        # with mu0 at least squares, the alpha=0 naive gradient is -Var of the
        # risk under the prior, which an MC oracle can estimate
        rng = np.random.default_rng(42)
        Z = rng.standard_normal((20, 2))
        Y = Z @ np.array([1.0, -0.5]) + rng.standard_normal(20)
        ls, *_ = np.linalg.lstsq(Z, Y, rcond=None)
        prior = GaussianPrior(ls, np.eye(2))
        model = lrk.KnownVarModel(1.0, prior)
        data = Dataset(Z, Y)
        exact = lrk.gen_error_gradient(model, data, data, 0.0)

        draws = rng.standard_normal((200_000, 2)) @ np.linalg.cholesky(prior.cov).T
        draws += prior.mean
        resid = Y[None, :] - draws @ Z.T
        risks = (resid**2).mean(axis=1) / 2.0
        mc_var = risks.var()
        se = covariance_se(risks, risks)
        assert abs(exact + mc_var) <= 3 * se


class TestBootstrapGradientPsi:
    def test_degenerate_resample_equals_naive_gradient(self):
        # all rows identical: every resample reproduces the base data
        model = lrk.KnownVarModel(1.0, GaussianPrior.standard(1))
        data = Dataset(np.ones((6, 1)), np.full(6, 2.0))
        rng = np.random.default_rng(0)
        psi = lrk.bootstrap_gradient_psi(model, data, 4.0, 1, rng)
        direct = lrk.gen_error_gradient(model, data, data, 4.0)
        assert psi == pytest.approx(direct, rel=1e-12)

    def test_both_conventions_agree_on_degenerate_resample(self):
        model = lrk.KnownVarModel(1.0, GaussianPrior.standard(1))
        data = Dataset(np.ones((6, 1)), np.full(6, 2.0))
        a = lrk.bootstrap_gradient_psi(model, data, 4.0, 1, np.random.default_rng(0))
        b = lrk.bootstrap_gradient_psi(
            model, data, 4.0, 1, np.random.default_rng(0), eval_on_replicate=True
        )
        assert a == b

    def test_seeded_reproducibility(self):
        model, data = random_toy(21, n=20, d=2)
        a = lrk.bootstrap_gradient_psi(model, data, 10.0, 1000, np.random.default_rng(5))
        b = lrk.bootstrap_gradient_psi(model, data, 10.0, 1000, np.random.default_rng(5))
        assert a == b

    def test_sign_agrees_with_naive_gradient(self):
        agree = 0
        for seed in range(10):
            model, data = random_toy(seed + 300, n=100, d=3)
            alpha = float(data.n)
            psi = lrk.bootstrap_gradient_psi(
                model, data, alpha, 200, np.random.default_rng(seed)
            )
            naive = lrk.gen_error_gradient(model, data, data, alpha)
            agree += int(np.sign(psi) == np.sign(naive))
        assert agree >= 9

    def test_boot_validation(self):
        model, data = random_toy(22)
        with pytest.raises(ValueError):
            lrk.bootstrap_gradient_psi(model, data, 1.0, 0, np.random.default_rng(0))


class TestSafebayesPeprl:
    def test_alpha_zero_is_prior_expected_loss_sum(self):
        model, data = random_toy(31, n=10, d=2)
        s0 = lrk.safebayes_peprl(model, data, 0.0)
        prior = model.prior
        expected = 0.0
        for t in range(1, data.n):
            z, y = data.Z[t], data.Y[t]
            zm = z @ prior.mean
            expected += y * y + z @ prior.cov @ z + zm * zm - 2 * y * zm
        expected /= 2 * model.sigma2
        assert s0 == pytest.approx(expected, rel=1e-12)

    def test_single_term_hand_check(self):
        # n=2, d=1, unit data: posterior on the first point at alpha has
        # s = 1/(1+alpha), m = alpha/(1+alpha); the only term is
        # (1 + s + m^2 - 2m)/2
        model = lrk.gaussian_mean_model(0.0, 1.0)
        data = Dataset(np.array([[1.0], [1.0]]), np.array([1.0, 1.0]))
        alpha = 1.0
        s = 1.0 / (1.0 + alpha)
        m = alpha / (1.0 + alpha)
        expected = 0.5 * (1.0 + s + m * m - 2 * m)
        assert lrk.safebayes_peprl(model, data, alpha) == pytest.approx(expected)

    def test_matches_mc_oracle(self):
        model, data = random_toy(32, n=6, d=1)
        alpha = 4.0
        rng = np.random.default_rng(7)
        total_mc = 0.0
        total_var = 0.0
        mc = 100_000
        for t in range(1, data.n):
            post = lrk.fit(model, data.prefix(t), alpha)
            draws = lrk.sample_posterior(post, mc, rng)
            losses = (data.Y[t] - draws @ data.Z[t]) ** 2 / (2 * model.sigma2)
            total_mc += losses.mean()
            total_var += losses.var() / mc
        closed = lrk.safebayes_peprl(model, data, alpha)
        assert abs(closed - total_mc) <= 3 * np.sqrt(total_var)

    def test_requires_two_rows(self):
        model = lrk.gaussian_mean_model()
        with pytest.raises(ValueError):
            lrk.safebayes_peprl(model, Dataset(np.ones((1, 1)), np.ones(1)), 1.0)


class TestPosteriorPredictive:
    def test_zero_covariance_gives_noise_variance(self):
        model = lrk.KnownVarModel(2.5, GaussianPrior.standard(2))
        post = lrk.GaussianPosterior(np.ones(2), np.zeros((2, 2)))
        _, var = lrk.posterior_predictive(model, post, np.array([1.0, 2.0]))
        assert var == 2.5

    def test_zero_input(self):
        model = lrk.KnownVarModel(1.0, GaussianPrior.standard(2))
        post = lrk.GaussianPosterior(np.ones(2), np.eye(2))
        mean, var = lrk.posterior_predictive(model, post, np.zeros(2))
        assert mean == 0.0 and var == 1.0

    def test_hand_evaluation(self):
        model = lrk.KnownVarModel(1.0, GaussianPrior.standard(1))
        post = lrk.GaussianPosterior(np.array([1.0]), np.array([[0.5]]))
        mean, var = lrk.posterior_predictive(model, post, np.array([2.0]))
        assert mean == pytest.approx(2.0)
        assert var == pytest.approx(3.0)

    def test_variance_never_below_noise(self):
        rng = np.random.default_rng(3)
        model, data = random_toy(33, n=20, d=3, sigma2=0.7)
        post = lrk.fit(model, data, 12.0)
        for _ in range(50):
            _, var = lrk.posterior_predictive(model, post, rng.standard_normal(3))
            assert var >= model.sigma2


class TestGaussianMean:
    def test_posterior_shrinkage_formula(self):
        model = lrk.gaussian_mean_model(0.0, 1.0)
        data = lrk.gaussian_mean_specialize(np.array([0.3, -0.1, 0.4]))
        post = lrk.fit(model, data, 1.0)
        assert post.cov[0, 0] == pytest.approx(0.5)

    def test_alpha_zero_prior_limit(self):
        model = lrk.gaussian_mean_model(0.7, 2.0)
        data = lrk.gaussian_mean_specialize(np.array([1.0, 3.0]))
        post = lrk.fit(model, data, 0.0)
        assert post.mean[0] == 0.7 and post.cov[0, 0] == 2.0

    def test_hand_evaluation_two_points(self):
        model = lrk.gaussian_mean_model(0.0, 1.0)
        data = lrk.gaussian_mean_specialize(np.array([1.0, 3.0]))
        post = lrk.fit(model, data, 2.0)
        assert post.cov[0, 0] == pytest.approx(1.0 / 3.0)
        assert post.mean[0] == pytest.approx(4.0 / 3.0)


class TestVandermonde:
    def test_power_expansion(self):
        np.testing.assert_array_equal(
            lrk.vandermonde_expand([2.0], 3), [[1.0, 2.0, 4.0]]
        )

    def test_zero_base(self):
        np.testing.assert_array_equal(
            lrk.vandermonde_expand([0.0], 4), [[1.0, 0.0, 0.0, 0.0]]
        )

    def test_degree_zero_is_ones_column(self):
        np.testing.assert_array_equal(
            lrk.vandermonde_expand([1.5, -2.0], 1), [[1.0], [1.0]]
        )

    def test_polynomial_prior_weights(self):
        prior = lrk.polynomial_prior(4)
        np.testing.assert_allclose(np.diag(prior.cov), [1.0, 0.5, 0.25, 0.125])
        with pytest.raises(ValueError):
            lrk.vandermonde_expand([1.0], 0)


class TestNaiveRiskMonotonicity:
    def test_non_increasing_on_grid(self):
        model, data = random_toy(41, n=20, d=3)
        alphas = np.linspace(0.0, 3.0 * data.n, 50)
        risks = [
            lrk.gen_error_estimate(model, lrk.fit(model, data, a), data)
            for a in alphas
        ]
        assert np.all(np.diff(risks) <= 1e-12)
