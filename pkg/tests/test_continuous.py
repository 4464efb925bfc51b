import dataclasses

import numpy as np
import pytest

import robustlm.continuous as continuous
from robustlm.classic import fit_classic
from robustlm.continuous import FIXED_X, RANDOM_X, posterior_beta_continuous, weighted_line
from robustlm.dataset import Dataset
from robustlm.errors import InvalidParameterError
from robustlm.mcmc import MCMCConfig, SplineChain, mcmc_fit
from robustlm.splines import build_basis
from robustlm.stochastics import RngStream


def fake_chain(x, theta):
    basis = build_basis(x, Q=theta.shape[1] - 2)
    d = theta.shape[0]
    return SplineChain(theta=theta, eta=np.zeros((d, 2)), sigma_a2=np.ones(d), log_post=np.zeros(d),
                       basis=basis, config=MCMCConfig(), accept_rate=0.35, proposal_scale=1.0)


@pytest.fixture(scope="module")
def wiggly():
    rng = np.random.default_rng(21)
    x = rng.uniform(-10, 10, 200)
    y = 2 + 3.5 * x * (1 + np.abs(np.cos(x / 2 - 2))) + rng.normal(size=200) * (5 + x**2 / 5)
    data = Dataset.from_arrays(x, y)
    chain = mcmc_fit(data, build_basis(x, 10, bounds=(-10, 10)),
                     MCMCConfig(iterations=3000, burn_in=1000), RngStream(21))
    return data, chain


class TestWeightedLine:
    def test_uniform_weights_is_ols(self, rng_np):
        x = rng_np.normal(size=30)
        phi = rng_np.normal(size=(1, 30))
        icpt, slope, _ = weighted_line(phi, np.full((1, 30), 1 / 30), x)
        np.testing.assert_allclose([icpt[0], slope[0]], np.polyfit(x, phi[0], 1)[::-1], rtol=1e-10)


class TestFixedX:
    def test_identical_linear_draws_zero_sd(self):
        x = np.linspace(-1, 1, 12)
        theta = np.tile([0.5, 2.0], (300, 1))
        post = posterior_beta_continuous(Dataset.from_arrays(x, 0.5 + 2 * x), fake_chain(x, theta), FIXED_X)
        np.testing.assert_array_equal(post.sd, [0.0, 0.0])
        np.testing.assert_allclose(post.beta_hat, [0.5, 2.0], rtol=1e-12)

    def test_slope_equals_linear_coefficient(self, wiggly):
        # spline columns are orthogonal to [1, x] at the data, so the
        # fixed-design slope of each curve draw is its linear coefficient
        data, chain = wiggly
        post = posterior_beta_continuous(data, chain, FIXED_X)
        assert post.beta_hat[1] == pytest.approx(chain.theta[:, 1].mean(), rel=1e-10)
        assert post.sd[1] == pytest.approx(chain.theta[:, 1].std(ddof=1), rel=1e-8)

    def test_method_tag_and_interval(self, wiggly):
        post = posterior_beta_continuous(*wiggly, FIXED_X)
        assert post.method == "bayes-continuous-fixed-x"
        np.testing.assert_allclose(post.ci_high - post.ci_low, 2 * 1.96 * post.sd)

    def test_q0_matches_model_based(self):
        rng = np.random.default_rng(7)
        x = rng.uniform(-10, 10, 400)
        data = Dataset.from_arrays(x, 2 + 3.5 * x + rng.normal(0, np.sqrt(5), 400))
        chain = mcmc_fit(data, build_basis(x, 0), MCMCConfig(heteroscedastic=False), RngStream(7))
        post = posterior_beta_continuous(data, chain, FIXED_X)
        ols = fit_classic(data, "model-based")
        assert post.sd[1] == pytest.approx(ols.se[1], rel=0.05)


class TestRandomX:
    def test_constant_shift_invariance(self, wiggly):
        data, chain = wiggly
        shifted = dataclasses.replace(chain, theta=chain.theta + np.r_[7.5, np.zeros(chain.theta.shape[1] - 1)])
        a = posterior_beta_continuous(data, chain, RANDOM_X, RngStream(1))
        b = posterior_beta_continuous(data, shifted, RANDOM_X, RngStream(1))
        np.testing.assert_allclose(b.beta_hat[1], a.beta_hat[1], rtol=1e-10)
        np.testing.assert_allclose(b.sd[1], a.sd[1], rtol=1e-8)

    def test_deterministic(self, wiggly):
        a = posterior_beta_continuous(*wiggly, RANDOM_X, RngStream(3, 1))
        b = posterior_beta_continuous(*wiggly, RANDOM_X, RngStream(3, 1))
        np.testing.assert_array_equal(a.beta_hat, b.beta_hat)
        np.testing.assert_array_equal(a.sd, b.sd)

    def test_needs_stream(self, wiggly):
        with pytest.raises(InvalidParameterError):
            posterior_beta_continuous(*wiggly, RANDOM_X)

    def test_bayesian_bootstrap_oracle(self):
        # a single fixed curve: the slope posterior is pure Bayesian-bootstrap variation
        x = np.repeat(np.linspace(-2, 2, 5), 3)
        coef = np.array([1.0, 0.5, 2.0, -1.0, 0.5])
        chain = fake_chain(x, np.tile(coef, (20_000, 1)))
        phi = chain.basis.design() @ coef
        post = posterior_beta_continuous(Dataset.from_arrays(x, phi), chain, RANDOM_X, RngStream(4))

        rng = np.random.default_rng(4)
        slopes = []
        for w in rng.dirichlet(np.ones(x.size), size=20_000):
            slopes.append(np.polyfit(x, phi, 1, w=np.sqrt(w))[0])
        slopes = np.array(slopes)
        assert abs(post.beta_hat[1] - slopes.mean()) < 4 * slopes.std() / np.sqrt(20_000) * np.sqrt(2)
        assert post.sd[1] == pytest.approx(slopes.std(), rel=0.03)

    def test_degenerate_weights_redrawn(self, monkeypatch, wiggly):
        data, chain = wiggly
        real = continuous.sample_dirichlet_counts
        calls = {"n": 0}

        def first_degenerate(rng, counts, size=None):
            w = real(rng, counts, size=size)
            if calls["n"] == 0:
                w[0] = 0.0
                w[0, 0] = 1.0
            calls["n"] += 1
            return w

        monkeypatch.setattr(continuous, "sample_dirichlet_counts", first_degenerate)
        post = posterior_beta_continuous(data, chain, RANDOM_X, RngStream(5))
        assert post.n_rejected == 1
        assert any("redrew 1" in w for w in post.warnings)
        assert np.all(np.isfinite(post.beta_hat))


def test_empty_chain():
    x = np.linspace(0, 1, 10)
    chain = fake_chain(x, np.empty((0, 2)))
    with pytest.raises(InvalidParameterError):
        posterior_beta_continuous(Dataset.from_arrays(x, x), chain, FIXED_X)


def test_bad_mode(wiggly):
    with pytest.raises(InvalidParameterError):
        posterior_beta_continuous(*wiggly, "both")
