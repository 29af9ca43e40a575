"""Model-layer tests: posterior means against quadrature oracles, sampler
laws, Fisher information, and moment reports."""

import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import norm

import qmmse
from qmmse import (
    DomainError,
    InvalidInputError,
    LinearGaussianModel,
    VectorJointModel,
    closed_form_mmse,
    cosine_gaussian_model,
    fisher_info,
    moment_report,
    posterior_mean_scalar,
    sample_joint,
    uniform_gaussian_model,
    uniform_logistic_model,
)
from qmmse.numerics import rng_stream

ALL_SCALAR_MODELS = [
    uniform_gaussian_model(1.0, 1.0),
    uniform_gaussian_model(1.0, 0.1),
    cosine_gaussian_model(1.0, 0.5),
    uniform_logistic_model(1.0, 1.0),
]


def dense_posterior_mean(model, x, npoints=100_001):
    """Independent oracle: trapezoid quadrature on a dense grid."""
    ys = np.linspace(-model.half_width, model.half_width, npoints)
    logp = np.asarray(model.prior_log_density(ys), dtype=float)
    for xi in np.atleast_1d(x):
        logp = logp + np.asarray(model.cond_log_density(xi, ys), dtype=float)
    logp -= logp.max()
    w = np.exp(logp)
    return np.trapezoid(w * ys, ys) / np.trapezoid(w, ys)


class TestPosteriorMean:
    def test_symmetry_at_zero(self):
        m = uniform_gaussian_model(1.0, 1.0)
        assert posterior_mean_scalar(m, [0.0]) == pytest.approx(0.0, abs=1e-12)

    def test_infinite_noise_returns_prior_mean(self):
        m = uniform_gaussian_model(1.0, 1e6)
        assert posterior_mean_scalar(m, [0.7]) == pytest.approx(0.0, abs=1e-5)

    def test_matches_dense_grid_oracle(self):
        m = uniform_gaussian_model(1.0, 1.0)
        got = posterior_mean_scalar(m, [0.5])
        want = dense_posterior_mean(m, [0.5])
        assert got == pytest.approx(want, abs=1e-6)

    @pytest.mark.parametrize("model", ALL_SCALAR_MODELS, ids=lambda m: m.name)
    def test_oracle_agreement_across_catalog(self, model):
        rng = rng_stream(101, 0)
        for _ in range(5):
            x = model.sampler(model.sample_y(1, rng), 3, rng)[0]
            assert posterior_mean_scalar(model, x) == pytest.approx(
                dense_posterior_mean(model, x), abs=1e-6
            )

    def test_result_in_support(self):
        m = uniform_gaussian_model(1.0, 0.5)
        for x in ([5.0], [-7.0, -9.0], [0.4, 0.6, 1.4]):
            assert abs(posterior_mean_scalar(m, x)) <= 1.0

    def test_rejects_nonfinite_and_empty(self):
        m = uniform_gaussian_model(1.0, 1.0)
        with pytest.raises(InvalidInputError):
            posterior_mean_scalar(m, [np.nan])
        with pytest.raises(InvalidInputError):
            posterior_mean_scalar(m, [np.inf, 0.0])
        with pytest.raises(InvalidInputError):
            posterior_mean_scalar(m, [])

    def test_permutation_invariance_exact(self):
        m = uniform_gaussian_model(1.0, 0.5)
        rng = rng_stream(7, 1)
        for _ in range(25):
            x = rng.normal(0.0, 0.8, size=6)
            perm = rng.permutation(6)
            a = posterior_mean_scalar(m, x)
            b = posterior_mean_scalar(m, x[perm])
            assert abs(a - b) <= 1e-12

    def test_monotone_in_observations_mlr(self):
        # Gaussian-noise likelihood ratios are monotone, so growing any
        # observation can only pull the posterior mean up.
        m = uniform_gaussian_model(1.0, 0.7)
        rng = rng_stream(8, 2)
        for _ in range(1000):
            x = rng.normal(0.0, 1.0, size=3)
            shift = rng.random(3) * 0.5
            lo = posterior_mean_scalar(m, x)
            hi = posterior_mean_scalar(m, x + shift)
            assert hi >= lo - 1e-12


class TestScalarModelInvariants:
    @pytest.mark.parametrize("model", ALL_SCALAR_MODELS, ids=lambda m: m.name)
    def test_prior_integrates_to_one(self, model):
        nodes, weights, _, pw, _ = model.grid()
        assert pw.sum() == pytest.approx(1.0, abs=1e-8)

    @pytest.mark.parametrize("model", ALL_SCALAR_MODELS, ids=lambda m: m.name)
    def test_fisher_positive_on_grid(self, model):
        ys = np.linspace(-model.half_width, model.half_width, 1001)
        info = np.asarray(model.fisher(ys), dtype=float)
        assert np.all(info > 0)

    @pytest.mark.parametrize("model", ALL_SCALAR_MODELS, ids=lambda m: m.name)
    def test_score_zero_mean_and_fisher_variance(self, model):
        n_draws = 200_000
        rng = rng_stream(55, 3)
        for y in (-0.6, 0.0, 0.8):
            x = model.sampler(np.asarray([y]), n_draws, rng)[0]
            score = np.asarray(model.cond_score(x, y), dtype=float)
            se_mean = score.std(ddof=1) / math.sqrt(n_draws)
            assert abs(score.mean()) <= 4 * se_mean
            sq = score**2
            se_var = sq.std(ddof=1) / math.sqrt(n_draws)
            assert abs(sq.mean() - float(model.fisher(np.asarray(y)))) <= 4 * se_var


class TestSampling:
    def test_sample_joint_deterministic(self):
        m = uniform_gaussian_model(1.0, 1.0)
        x1, y1 = sample_joint(m, 5, rng_stream(42, 0))
        x2, y2 = sample_joint(m, 5, rng_stream(42, 0))
        assert y1 == y2
        np.testing.assert_array_equal(x1, x2)

    def test_prior_mean_lln(self):
        m = uniform_gaussian_model(1.0, 1.0)
        y = m.sample_y(1_000_000, rng_stream(13, 0))
        # prior sd is 1/sqrt(3)
        assert abs(y.mean()) <= 3 * (1 / math.sqrt(3)) / 1e3

    def test_noise_variance(self):
        m = uniform_gaussian_model(1.0, 0.5)
        n_draws = 200_000
        x, y = m.sample_joint_batch(1, n_draws, rng_stream(14, 0))
        noise = x[:, 0] - y
        se = noise.std(ddof=1) ** 2 * math.sqrt(2.0 / (n_draws - 1))
        assert noise.var(ddof=1) == pytest.approx(0.25, abs=3 * se)

    def test_rejects_zero_observations(self):
        m = uniform_gaussian_model(1.0, 1.0)
        with pytest.raises(InvalidInputError):
            m.sample_joint_batch(0, 10, rng_stream(1, 0))


class TestFisherInfo:
    def test_gaussian_values(self):
        assert fisher_info(uniform_gaussian_model(1.0, 0.5), 0.3) == pytest.approx(4.0)
        assert fisher_info(uniform_gaussian_model(1.0, 1.0), -0.9) == pytest.approx(1.0)

    def test_logistic_matches_score_variance_oracle(self):
        m = uniform_logistic_model(1.0, 1.0)
        n_draws = 10_000_000
        rng = rng_stream(99, 0)
        x = m.sampler(np.asarray([0.0]), n_draws, rng)[0]
        score = np.asarray(m.cond_score(x, 0.0), dtype=float)
        assert fisher_info(m, 0.0) == pytest.approx(float((score**2).mean()), abs=1e-3)

    def test_outside_support_is_domain_error(self):
        with pytest.raises(DomainError):
            fisher_info(uniform_gaussian_model(1.0, 1.0), 1.5)


class TestLinearGaussian:
    def test_scalar_wiener_mmse(self):
        m = LinearGaussianModel([[1.0]], [[1.0]], [[1.0]])
        assert closed_form_mmse(m) == pytest.approx(0.5)

    def test_noiseless_limit(self):
        m = LinearGaussianModel([[1.0]], [[1.0]], [[1e-12]])
        assert closed_form_mmse(m) <= 1e-10

    def test_useless_observation_returns_prior_variance(self):
        sigma_y = [[2.0, 0.3], [0.3, 1.0]]
        m = LinearGaussianModel(sigma_y, np.zeros((3, 2)), np.eye(3))
        assert closed_form_mmse(m) == pytest.approx(3.0)

    def test_regression_matches_least_squares_fit(self):
        rng = rng_stream(21, 0)
        sigma_y = [[1.0, 0.2], [0.2, 0.8]]
        h = [[1.0, 0.0], [0.5, 1.0], [0.0, -1.0]]
        m = LinearGaussianModel(sigma_y, h, 0.5 * np.eye(3))
        x, y = m.sample_joint_batch(100_000, rng)
        a_hat = np.linalg.lstsq(x, y, rcond=None)[0].T
        np.testing.assert_allclose(a_hat, m.a_mat, atol=0.02)

    def test_singular_noise_raises(self):
        with pytest.raises(np.linalg.LinAlgError):
            LinearGaussianModel([[1.0]], [[0.0]], [[0.0]])


def constant_regression_model(c):
    c = np.asarray(c, dtype=float)

    def joint_sampler(count, rng):
        return rng.standard_normal((count, 2)), np.tile(c, (count, 1))

    return VectorJointModel(
        name="constant",
        n_dim=2,
        p_dim=c.size,
        joint_sampler=joint_sampler,
        regression=lambda x: np.tile(c, (np.atleast_2d(x).shape[0], 1)),
    )


class TestMomentReport:
    def test_constant_regression(self):
        rep = moment_report(constant_regression_model([3.0, 4.0]), 5000, seed=3)
        assert rep.e1 == pytest.approx(5.0, abs=1e-12)
        assert rep.e1_se == pytest.approx(0.0, abs=1e-12)
        assert rep.e2 == pytest.approx(25.0, abs=1e-9)
        assert rep.v == pytest.approx(0.0, abs=1e-12)
        assert rep.v_is_estimate

    def test_linear_gaussian_scalar_second_moment(self):
        m = LinearGaussianModel([[1.0]], [[1.0]], [[1.0]])
        rep = moment_report(m, 200_000, seed=4)
        # eta = X/2 with X ~ N(0, 2)
        assert rep.e2 == pytest.approx(0.5, abs=3 * rep.e2_se)
        assert not rep.v_is_estimate

    def test_jensen_ordering_chain(self):
        for seed in range(5):
            m = LinearGaussianModel([[1.0, 0.0], [0.0, 2.0]], np.eye(2), np.eye(2))
            rep = moment_report(m, 20_000, seed=seed)
            assert rep.e1**2 <= rep.e2 <= math.sqrt(rep.e4)

    def test_fourth_moment_jensen_vs_target(self):
        m = LinearGaussianModel([[1.0]], [[1.0]], [[1.0]])
        rng = rng_stream(31, 0)
        x, y = m.sample_joint_batch(200_000, rng)
        eta4 = np.linalg.norm(m.regression(x), axis=1) ** 4
        y4 = np.linalg.norm(y, axis=1) ** 4
        se = math.sqrt(eta4.var(ddof=1) / eta4.size + y4.var(ddof=1) / y4.size)
        assert eta4.mean() <= y4.mean() + 4 * se

    def test_small_n_rejected(self):
        with pytest.raises(InvalidInputError):
            moment_report(constant_regression_model([1.0]), 999, seed=0)


class TestLogisticKernel:
    def test_fallback_matches_compiled_kernel(self, monkeypatch):
        import qmmse.model as model_mod

        m = uniform_logistic_model(1.0, 1.0)
        rng = rng_stream(77, 0)
        x = m.sampler(m.sample_y(200, rng), 6, rng)
        nodes, _, _, pw, pwy = m.grid()
        fast = model_mod._logistic_eta_batch(x, nodes, pw, pwy, 1.0)
        monkeypatch.setattr(model_mod, "_get_logistic_kernel", lambda: None)
        slow = model_mod._logistic_eta_batch(x, nodes, pw, pwy, 1.0)
        np.testing.assert_allclose(fast, slow, atol=1e-12)

    def test_kernel_matches_single_sample_path(self):
        m = uniform_logistic_model(1.0, 0.7)
        rng = rng_stream(78, 0)
        x = m.sampler(m.sample_y(30, rng), 5, rng)
        batch = m.regression_batch(x)
        singles = [m.posterior_mean(row) for row in x]
        np.testing.assert_allclose(batch, singles, atol=1e-10)

    def test_scale_envelope_guard(self):
        with pytest.raises(InvalidInputError):
            uniform_logistic_model(1.0, 1e-4)


class TestDegeneracy:
    def test_underflowing_likelihood_raises(self):
        m = uniform_gaussian_model(1.0, 1.0)

        def bad_loglik(u, y):
            return np.full(np.broadcast(np.asarray(u), np.asarray(y)).shape, -np.inf)

        m.cond_log_density = bad_loglik
        with pytest.raises(qmmse.NumericalDegeneracyError):
            posterior_mean_scalar(m, [0.3])
