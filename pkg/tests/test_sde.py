import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from poselift.errors import ConfigError, OutOfRangeTime
from poselift.sde import PerturbationKernel, SdeConfig, perturb

KERNEL = PerturbationKernel(SdeConfig())


class TestSchedule:
    def test_rejects_bad_betas(self):
        with pytest.raises(ConfigError):
            SdeConfig(beta_min=2.0, beta_max=1.0)
        with pytest.raises(ConfigError):
            SdeConfig(beta_min=0.0, beta_max=1.0)

    def test_integral_closed_form(self):
        sde = SdeConfig(0.1, 20.0)
        for t in (0.0, 0.25, 1.0):
            quad = np.trapezoid(sde.beta(np.linspace(0, t, 20001)), np.linspace(0, t, 20001))
            assert abs(sde.beta_integral(t) - quad) < 1e-6

    @given(t1=st.floats(0.0, 1.0), t2=st.floats(0.0, 1.0))
    def test_integral_monotone(self, t1, t2):
        lo, hi = sorted((t1, t2))
        assert KERNEL.sde.beta_integral(hi) >= KERNEL.sde.beta_integral(lo)


class TestKernel:
    def test_boundary_values(self):
        assert KERNEL.mean_coeff(0.0) == 1.0
        assert KERNEL.sigma(0.0) == 0.0

    @given(t=st.floats(1e-6, 1.0))
    def test_sigma_in_unit_interval(self, t):
        assert 0.0 < KERNEL.sigma(t) <= 1.0

    def test_sigma_monotone(self):
        t = np.linspace(1e-4, 1.0, 500)
        assert np.all(np.diff(KERNEL.sigma(t)) > 0)


class TestPerturb:
    def test_rejects_out_of_range_time(self):
        x = np.zeros(6)
        for t in (0.0, -0.1, 1.5):
            with pytest.raises(OutOfRangeTime):
                perturb(x, t, np.zeros(6))

    def test_zero_noise_is_pure_mean(self, rng):
        x0 = rng.normal(0, 1, 12)
        out = perturb(x0, 0.3, np.zeros(12))
        np.testing.assert_array_equal(out, KERNEL.mean_coeff(0.3) * x0)

    def test_small_time_limit(self, rng):
        x0 = rng.normal(0, 1, 12)
        z = rng.normal(0, 1, 12)
        out = perturb(x0, 1e-8, z)
        np.testing.assert_allclose(out, x0, atol=1e-6)

    def test_monte_carlo_moments_at_half(self, rng):
        # pooled standardized draws must come back as Normal(0, 1)
        x0 = rng.normal(0, 0.4, 12)
        n = 100_000
        z = rng.standard_normal((n, 12))
        xt = perturb(np.tile(x0, (n, 1)), np.full(n, 0.5), z)
        zhat = (xt - KERNEL.mean_coeff(0.5) * x0) / KERNEL.sigma(0.5)
        pooled = zhat.ravel()
        assert abs(pooled.mean()) < 3.0 / np.sqrt(pooled.size)
        assert abs(pooled.std() - 1.0) < 3.0 / np.sqrt(2.0 * pooled.size)

    def test_batched_matches_scalar(self, rng):
        x0 = rng.normal(0, 1, (4, 6))
        t = rng.uniform(0.1, 1.0, 4)
        z = rng.normal(0, 1, (4, 6))
        batched = perturb(x0, t, z)
        rows = np.stack([perturb(x0[i], t[i], z[i]) for i in range(4)])
        np.testing.assert_array_equal(batched, rows)
