import numpy as np
import pytest

from poselift.errors import ConfigError, NonFiniteLoss, OutOfRangeTime
from poselift.sde import PerturbationKernel, SdeConfig, perturb
from poselift.score_model import ModelConfig, ScoreModel, dsm_loss

TINY = ModelConfig(hidden=8, depth=2, fourier_dim=16)


def tiny_model(seed=0, zero_out=False):
    return ScoreModel(4, TINY, seed=seed, zero_init_output=zero_out)


def finite_difference(model, x0, t, z, name, index, h=1e-4):
    flat = model.params[name].reshape(-1)
    orig = flat[index]
    flat[index] = orig + h
    up, _ = dsm_loss(model, x0, t, z, with_grads=False)
    flat[index] = orig - h
    down, _ = dsm_loss(model, x0, t, z, with_grads=False)
    flat[index] = orig
    return (up - down) / (2.0 * h)


class TestForward:
    def test_output_shape_matches_input(self, rng):
        m = tiny_model()
        x = rng.normal(0, 1, (5, 12))
        t = rng.uniform(0.1, 1.0, 5)
        assert m._forward_raw(x, t).shape == (5, 12)

    def test_zero_init_output_gives_zero_score(self, rng):
        m = tiny_model(zero_out=True)
        x = rng.normal(0, 1, (3, 12))
        assert np.all(m.score(x, 0.5) == 0.0)

    def test_score_rejects_bad_time(self, rng):
        with pytest.raises(OutOfRangeTime):
            tiny_model().score(rng.normal(0, 1, 12), 0.0)

    def test_single_vector_roundtrip(self, rng):
        m = tiny_model(seed=3)
        x = rng.normal(0, 1, 12)
        single = m.score(x, 0.3)
        batch = m.score(x[None], np.array([0.3]))
        np.testing.assert_array_equal(single, batch[0])

    def test_frozen_fourier_not_trainable(self):
        m = tiny_model()
        assert "fourier_freq" not in m.trainable_names()
        assert "fourier_phase" not in m.trainable_names()


class TestDsmLoss:
    def test_oracle_score_zeroes_loss(self, rng):
        """With the exact single-point score, sigma * s + z vanishes."""
        kernel = PerturbationKernel(SdeConfig())
        x0 = rng.normal(0, 0.4, (8, 12))
        t = rng.uniform(0.05, 1.0, 8)
        z = rng.standard_normal((8, 12))

        class OracleModel:
            kernel = PerturbationKernel(SdeConfig())

            def _forward_raw(self, x, tt, want_cache=False):
                m = self.kernel.mean_coeff(tt)[:, None]
                s = self.kernel.sigma(tt)[:, None]
                out = -(x - m * x0) / s
                return (out, {}) if want_cache else out

            def _backward(self, d_out, cache):
                return {}

        loss, _ = dsm_loss(OracleModel(), x0, t, z)
        assert loss < 1e-20

    def test_untrained_loss_near_dimension(self, rng):
        """Zero network output leaves E||z||^2 = 3J, also in the t -> 0 limit."""
        m = ScoreModel(4, TINY, seed=0, zero_init_output=True)
        n = 10_000
        x0 = np.tile(rng.normal(0, 0.4, 12), (n, 1))
        t = np.full(n, 1e-4)
        z = rng.standard_normal((n, 12))
        loss, _ = dsm_loss(m, x0, t, z)
        assert abs(loss - 12.0) < 0.05 * 12.0

    def test_empty_batch_rejected(self):
        with pytest.raises(ConfigError):
            dsm_loss(tiny_model(), np.zeros((0, 12)), np.zeros(0), np.zeros((0, 12)))

    def test_nonfinite_loss_detected(self, rng):
        m = tiny_model()
        m.params["w_out"][:] = 1e300
        with pytest.raises(NonFiniteLoss):
            dsm_loss(m, rng.normal(0, 1, (2, 12)), np.array([0.5, 0.5]), rng.normal(0, 1, (2, 12)))


class TestGradients:
    def test_every_parameter_matches_finite_differences(self):
        """Standing property: all coordinates of all gradients, three seeds."""
        for seed in range(3):
            r = np.random.default_rng(seed)
            m = ScoreModel(4, ModelConfig(hidden=6, depth=2, fourier_dim=8), seed=seed,
                           zero_init_output=False)
            x0 = r.normal(0, 0.4, (3, 12))
            t = r.uniform(0.05, 1.0, 3)
            z = r.standard_normal((3, 12))
            _, grads = dsm_loss(m, x0, t, z)
            for name in m.trainable_names():
                for index in range(m.params[name].size):
                    fd = finite_difference(m, x0, t, z, name, index)
                    an = grads[name].reshape(-1)[index]
                    assert abs(an - fd) <= 1e-3 * max(abs(an), abs(fd), 1e-4), (
                        f"{name}[{index}]: analytic {an}, fd {fd}"
                    )

    def test_gradient_descent_reduces_loss(self, rng):
        m = tiny_model(seed=5)
        x0 = rng.normal(0, 0.4, (16, 12))
        t = rng.uniform(0.05, 1.0, 16)
        z = rng.standard_normal((16, 12))
        first, grads = dsm_loss(m, x0, t, z)
        for name, g in grads.items():
            m.params[name] -= 1e-2 * g
        second, _ = dsm_loss(m, x0, t, z)
        assert second < first
