"""Forward noising process: sub-variance-preserving SDE with a linear rate.

The rate schedule is beta(t) = beta_min + t (beta_max - beta_min), whose
integral B(t) is closed-form, giving the perturbation kernel

    x(t) | x(0)  ~  Normal(mean_coeff(t) x(0), sigma(t)^2 I)

with mean_coeff(t) = exp(-B(t)/2) and sigma(t) = 1 - exp(-B(t)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, OutOfRangeTime


@dataclass(frozen=True)
class SdeConfig:
    """Linear rate schedule beta(t) on t in [0, 1]."""

    beta_min: float = 0.1
    beta_max: float = 20.0

    def __post_init__(self):
        if not (0 < self.beta_min < self.beta_max):
            raise ConfigError(
                f"need 0 < beta_min < beta_max, got {self.beta_min}, {self.beta_max}"
            )

    def beta(self, t):
        return self.beta_min + t * (self.beta_max - self.beta_min)

    def beta_integral(self, t):
        """B(t) = integral of beta from 0 to t; monotone in t."""
        return self.beta_min * t + 0.5 * (self.beta_max - self.beta_min) * t**2

    def to_dict(self) -> dict:
        return {"beta_min": self.beta_min, "beta_max": self.beta_max}

    @classmethod
    def from_dict(cls, d: dict) -> "SdeConfig":
        try:
            return cls(float(d["beta_min"]), float(d["beta_max"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad SDE config: {exc}") from exc


@dataclass(frozen=True)
class PerturbationKernel:
    """Closed-form marginal of the forward process."""

    sde: SdeConfig = SdeConfig()

    def mean_coeff(self, t):
        return np.exp(-0.5 * self.sde.beta_integral(t))

    def sigma(self, t):
        return 1.0 - np.exp(-self.sde.beta_integral(t))

    def diffusion_squared(self, t):
        """g(t)^2 of the forward SDE, used by the reverse-time integrators."""
        return self.sde.beta(t) * (1.0 - np.exp(-2.0 * self.sde.beta_integral(t)))


def _check_times(t) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    if t.size == 0 or np.any(t <= 0) or np.any(t > 1):
        raise OutOfRangeTime(f"diffusion time must lie in (0, 1], got {t}")
    return t


def perturb(x0: np.ndarray, t, noise: np.ndarray, kernel: PerturbationKernel | None = None):
    """Draw x(t) = mean_coeff(t) x0 + sigma(t) z for given noise z.

    ``x0`` and ``noise`` are flattened pose vectors, either (D,) with scalar t
    or (B, D) with t of shape (B,).
    """
    kernel = kernel or PerturbationKernel()
    t = _check_times(t)
    x0 = np.asarray(x0, dtype=np.float64)
    z = np.asarray(noise, dtype=np.float64)
    if z.shape != x0.shape:
        raise ConfigError(f"noise shape {z.shape} must match x0 shape {x0.shape}")
    m = kernel.mean_coeff(t)
    s = kernel.sigma(t)
    if x0.ndim == 2:
        m = m[:, None]
        s = s[:, None]
    return m * x0 + s * z
