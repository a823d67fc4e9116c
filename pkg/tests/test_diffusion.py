import numpy as np
import pytest

from hazediff.diffusion import (
    PIXEL_SPACE, NoiseSchedule, eps_to_x0, make_linear_schedule, posterior_mean_var, q_sample,
    x0_to_eps,
)
from hazediff.numerics import SeededRng, gaussian_sample
from oracles import discretized_posterior

TWO = NoiseSchedule(np.array([0.1, 0.2]))


class TestSchedule:
    def test_single_step(self):
        s = NoiseSchedule(np.array([0.1]))
        assert s.alpha[0] == pytest.approx(0.9) and s.alpha_bar[0] == pytest.approx(0.9)

    def test_two_steps(self):
        np.testing.assert_allclose(TWO.alpha_bar, [0.9, 0.72], atol=1e-15)

    @pytest.mark.parametrize("T", [1, 2, 10, 1000])
    def test_monotone_and_bounded(self, T):
        s = make_linear_schedule(T)
        assert np.all(np.diff(s.alpha_bar) < 0)
        assert np.all((s.alpha_bar > 0) & (s.alpha_bar < 1))

    def test_linear_endpoints(self):
        s = make_linear_schedule(100, 1e-4, 0.02)
        assert s.beta[0] == 1e-4 and s.beta[-1] == pytest.approx(0.02)

    def test_recurrence_exact(self):
        s = make_linear_schedule(1000)
        assert np.array_equal(s.alpha_bar[1:], s.alpha_bar[:-1] * s.alpha[1:])

    @pytest.mark.parametrize("args", [(0, 1e-4, 0.02), (10, 0.0, 0.02), (10, 0.03, 0.02), (10, 1e-4, 1.0)])
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            make_linear_schedule(*args)

    def test_alpha_bar_zero_is_one(self):
        assert TWO.alpha_bar_at(0) == 1.0


class TestQSample:
    def test_noiseless(self):
        x0 = np.random.default_rng(0).uniform(size=(4, 4, 3))
        np.testing.assert_allclose(q_sample(x0, 2, np.zeros_like(x0), TWO), np.sqrt(0.72) * x0)

    def test_pure_noise(self):
        eps = np.random.default_rng(1).standard_normal((4, 4, 3))
        np.testing.assert_allclose(q_sample(np.zeros_like(eps), 2, eps, TWO), np.sqrt(0.28) * eps)

    def test_hand_value(self):
        assert float(q_sample(np.array(1.0), 2, np.array(1.0), TWO)) == pytest.approx(1.377679, abs=1e-6)

    @pytest.mark.parametrize("t", [0, 3])
    def test_range(self, t):
        with pytest.raises(ValueError):
            q_sample(np.zeros(2), t, np.zeros(2), TWO)

    def test_marginal_statistics(self):
        s = make_linear_schedule(100)
        t, x0 = 40, 0.7
        eps = gaussian_sample(SeededRng(3), [100000])
        xt = q_sample(np.full(eps.shape, x0), t, eps, s)
        assert abs(xt.mean() - np.sqrt(s.alpha_bar_at(t)) * x0) < 0.01
        assert abs(xt.var() - (1 - s.alpha_bar_at(t))) < 0.02

    def test_chain_matches_marginal(self):
        s = make_linear_schedule(100)
        t, x0, n = 25, -0.4, 100000
        rng = SeededRng(8)
        x = np.full(n, x0)
        for k in range(1, t + 1):
            a = s.alpha_at(k)
            x = np.sqrt(a) * x + np.sqrt(1 - a) * gaussian_sample(rng, [n])
        assert abs(x.mean() - np.sqrt(s.alpha_bar_at(t)) * x0) < 0.01
        assert abs(x.var() - (1 - s.alpha_bar_at(t))) < 0.02


class TestPosterior:
    def test_first_step_collapses(self):
        x0, xt = np.array([0.3, -0.2]), np.array([0.5, 0.1])
        mu, var = posterior_mean_var(x0, xt, 1, TWO)
        np.testing.assert_array_equal(mu, x0)
        assert var == 0.0

    def test_hand_value(self):
        mu, var = posterior_mean_var(1.0, 0.5, 2, TWO)
        assert mu == pytest.approx(0.837350, abs=1e-5)
        assert var == pytest.approx(0.0714286, abs=1e-6)

    def test_constant_inputs(self):
        s = make_linear_schedule(50)
        for t in (2, 17, 50):
            mu, _ = posterior_mean_var(0.8, 0.8, t, s)
            a, ab, abp = s.alpha_at(t), s.alpha_bar_at(t), s.alpha_bar_at(t - 1)
            assert mu == pytest.approx(0.8 * (np.sqrt(abp) * (1 - a) + np.sqrt(a) * (1 - abp)) / (1 - ab))

    def test_matches_discretized_bayes(self):
        s = make_linear_schedule(100)
        r = np.random.default_rng(9)
        for _ in range(20):
            t = int(r.integers(2, 101))
            x0, xt = r.uniform(-1, 1), r.uniform(-2, 2)
            mu, var = posterior_mean_var(x0, xt, t, s)
            m_ref, v_ref = discretized_posterior(x0, xt, t, s.beta)
            assert abs(mu - m_ref) < 1e-3 and abs(var - v_ref) < 1e-3


class TestEpsX0:
    def test_round_trip(self):
        s = make_linear_schedule(100)
        r = np.random.default_rng(2)
        xt, eps = r.standard_normal((4, 4, 3)), r.standard_normal((4, 4, 3))
        for t in (1, 50, 100):
            np.testing.assert_allclose(x0_to_eps(xt, eps_to_x0(xt, eps, t, s), t, s), eps, atol=1e-9)

    def test_consistency_with_q_sample(self):
        s = make_linear_schedule(100)
        r = np.random.default_rng(3)
        x0, eps = r.uniform(-1, 1, (4, 4, 3)), r.standard_normal((4, 4, 3))
        for t in (1, 50, 100):
            np.testing.assert_allclose(eps_to_x0(q_sample(x0, t, eps, s), eps, t, s), x0, atol=1e-9)

    def test_hand_value(self):
        assert float(eps_to_x0(1.377679, 1.0, 2, TWO)) == pytest.approx(1.0, abs=1e-6)

    def test_vanishing_alpha_bar(self):
        s = NoiseSchedule(np.full(200, 0.9))
        with pytest.raises(ValueError):
            eps_to_x0(0.0, 0.0, 200, s)


def test_space_round_trip():
    x = np.random.default_rng(0).uniform(size=10)
    np.testing.assert_allclose(PIXEL_SPACE.from_model(PIXEL_SPACE.to_model(x)), x, atol=1e-15)
    assert PIXEL_SPACE.to_model(0.0) == -1.0 and PIXEL_SPACE.to_model(1.0) == 1.0
