import numpy as np
import pytest

from tumorsynth.diffusion.schedule import (
    NoiseSchedule,
    build_schedule,
    estimate_z0,
    forward_noise,
)


class TestBuildSchedule:
    def test_single_step(self):
        s = build_schedule(T=1, beta_start=0.02, beta_end=0.02)
        np.testing.assert_allclose(s.alpha_bar, [0.98])

    def test_two_step_hand_case(self):
        # alpha = (0.9, 0.8) -> alpha_bar = (0.9, 0.72)
        s = build_schedule(T=2, beta_start=0.1, beta_end=0.2)
        np.testing.assert_allclose(s.alpha_bar, [0.9, 0.72], rtol=1e-12)

    def test_default_terminal_attenuation_matches_product_oracle(self):
        s = build_schedule()
        assert s.T == 200
        # independent oracle: explicit product over the linspace betas
        betas = np.linspace(1e-4, 0.02, 200)
        expected = 1.0
        for b in betas:
            expected *= 1.0 - b
        assert abs(s.alpha_bar[-1] - expected) < 1e-15
        assert s.alpha_bar[-1] == pytest.approx(0.1321827542, abs=1e-9)

    def test_alpha_bar_strictly_decreasing(self):
        for T in (1, 10, 200):
            s = build_schedule(T=T)
            assert np.all(np.diff(s.alpha_bar) < 0) or T == 1

    def test_recomputed_product_matches_within_1e12(self):
        s = build_schedule(T=200)
        np.testing.assert_allclose(
            np.cumprod(s.alpha), s.alpha_bar, rtol=0, atol=1e-12
        )

    def test_invalid_ranges_rejected(self):
        with pytest.raises(ValueError):
            build_schedule(T=0)
        with pytest.raises(ValueError):
            build_schedule(beta_start=0.0)
        with pytest.raises(ValueError):
            build_schedule(beta_start=0.3, beta_end=0.2)
        with pytest.raises(ValueError):
            build_schedule(beta_end=1.0)

    def test_digest_distinguishes_schedules(self):
        assert build_schedule(T=10).digest() != build_schedule(T=11).digest()
        assert build_schedule(T=10).digest() == build_schedule(T=10).digest()


class TestForwardNoise:
    def test_zero_noise_path(self):
        s = build_schedule(T=2, beta_start=0.1, beta_end=0.2)
        z0 = np.ones((4, 2, 2, 2))
        z_t = forward_noise(z0, 2, np.zeros_like(z0), s)
        np.testing.assert_allclose(z_t, np.sqrt(0.72) * z0, rtol=1e-12)

    def test_early_step_limit(self):
        s = build_schedule(T=200, beta_start=1e-6, beta_end=1e-6)
        rng = np.random.default_rng(0)
        z0 = rng.standard_normal((4, 4, 4, 4))
        eps = rng.standard_normal(z0.shape)
        z_t = forward_noise(z0, 1, eps, s)
        assert np.linalg.norm(z_t - z0) <= 1e-2 * np.linalg.norm(z0)

    def test_shape_mismatch_rejected(self):
        s = build_schedule(T=2, beta_start=0.1, beta_end=0.2)
        with pytest.raises(ValueError):
            forward_noise(np.zeros((2, 2, 2, 2)), 1, np.zeros((2, 2, 2, 1)), s)


class TestEstimateZ0:
    def test_round_trip_with_true_noise(self):
        s = build_schedule(T=10)
        rng = np.random.default_rng(1)
        z0 = rng.standard_normal((4, 4, 4, 4))
        eps = rng.standard_normal(z0.shape)
        for t in (1, 5, 10):
            z_t = forward_noise(z0, t, eps, s)
            back = estimate_z0(z_t, eps, t, s)
            np.testing.assert_allclose(back, z0, rtol=0, atol=1e-6)

    def test_zero_noise_estimate_reduces_to_rescale(self):
        s = build_schedule(T=2, beta_start=0.1, beta_end=0.2)
        z_t = np.full((1, 2, 2, 2), 0.5)
        out = estimate_z0(z_t, np.zeros_like(z_t), 2, s)
        np.testing.assert_allclose(out, z_t / np.sqrt(0.72), rtol=1e-12)

    def test_scalar_hand_case(self):
        # abar = 0.72, z_t = 1.0, eps_hat = 0.5:
        # (1 - sqrt(0.28)*0.5)/sqrt(0.72) = 0.8667065...
        s = build_schedule(T=2, beta_start=0.1, beta_end=0.2)
        z_t = np.array([[[[1.0]]]])
        eps_hat = np.array([[[[0.5]]]])
        out = estimate_z0(z_t, eps_hat, 2, s)
        assert out[0, 0, 0, 0] == pytest.approx(0.8667065197, abs=1e-9)

    def test_invalid_t_rejected(self):
        s = build_schedule(T=2, beta_start=0.1, beta_end=0.2)
        with pytest.raises(ValueError):
            estimate_z0(np.zeros((1, 1, 1, 1)), np.zeros((1, 1, 1, 1)), 3, s)


class TestSigma:
    def test_terminal_step_is_noiseless(self):
        s = build_schedule(T=10)
        assert s.sigma(1) == 0.0

    def test_matches_posterior_formula(self):
        s = build_schedule(T=10)
        for t in range(2, 11):
            beta_t = s.beta[t - 1]
            expected = np.sqrt(
                beta_t * (1 - s.alpha_bar[t - 2]) / (1 - s.alpha_bar[t - 1])
            )
            assert s.sigma(t) == pytest.approx(expected, rel=1e-12)
