"""Time-conditioned score network over flattened poses, with its own backprop.

A residual MLP: an input projection, D residual blocks that each see the
hidden state concatenated with a frozen random-Fourier embedding of t, and an
output projection whose result is divided by sigma(t). Dividing by sigma makes
the denoising-score-matching residual sigma(t) s(x, t) + z equal to the raw
network output plus z, which keeps the objective well-conditioned at small t.

Gradients are computed by hand (reverse mode) so they can be verified against
finite differences; no autodiff framework is involved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NonFiniteLoss
from .sde import PerturbationKernel, SdeConfig, _check_times, perturb


@dataclass(frozen=True)
class ModelConfig:
    """Architecture knobs for the score network."""

    hidden: int = 256
    depth: int = 4
    fourier_dim: int = 64
    fourier_scale: float = 16.0

    def __post_init__(self):
        if min(self.hidden, self.depth, self.fourier_dim) < 1 or self.fourier_scale <= 0:
            raise ConfigError(f"bad model config: {self}")

    def to_dict(self) -> dict:
        return {
            "hidden": self.hidden,
            "depth": self.depth,
            "fourier_dim": self.fourier_dim,
            "fourier_scale": self.fourier_scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        try:
            return cls(
                int(d.get("hidden", 256)),
                int(d.get("depth", 4)),
                int(d.get("fourier_dim", 64)),
                float(d.get("fourier_scale", 16.0)),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad model config: {exc}") from exc


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _silu(x):
    return x * _sigmoid(x)


def _silu_grad(x):
    s = _sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


class ScoreModel:
    """Score network s(x, t) for J-joint poses flattened to 3J vectors.

    The Fourier frequencies and phases are drawn once at init and never
    trained. The output projection starts at zero so an untrained model is
    the zero score.
    """

    FROZEN = ("fourier_freq", "fourier_phase")

    def __init__(
        self,
        n_joints: int,
        config: ModelConfig = ModelConfig(),
        sde: SdeConfig = SdeConfig(),
        seed: int = 0,
        zero_init_output: bool = True,
    ):
        if n_joints < 1:
            raise ConfigError(f"n_joints must be positive, got {n_joints}")
        self.n_joints = n_joints
        self.config = config
        self.sde = sde
        self.kernel = PerturbationKernel(sde)
        dim = 3 * n_joints
        h, f = config.hidden, config.fourier_dim
        rng = np.random.default_rng(seed)
        p: dict[str, np.ndarray] = {}
        p["fourier_freq"] = rng.normal(0.0, config.fourier_scale, f)
        p["fourier_phase"] = rng.uniform(0.0, 2.0 * np.pi, f)
        p["w_in"] = rng.normal(0.0, dim**-0.5, (h, dim))
        p["b_in"] = np.zeros(h)
        for d in range(config.depth):
            p[f"w1_{d}"] = rng.normal(0.0, (h + f) ** -0.5, (h, h + f))
            p[f"b1_{d}"] = np.zeros(h)
            p[f"w2_{d}"] = rng.normal(0.0, h**-0.5, (h, h))
            p[f"b2_{d}"] = np.zeros(h)
        if zero_init_output:
            p["w_out"] = np.zeros((dim, h))
        else:
            p["w_out"] = rng.normal(0.0, h**-0.5, (dim, h))
        p["b_out"] = np.zeros(dim)
        self.params = p

    @property
    def in_dim(self) -> int:
        return 3 * self.n_joints

    def param_names(self) -> list[str]:
        """Canonical ordering of all parameters, frozen ones first."""
        names = ["fourier_freq", "fourier_phase", "w_in", "b_in"]
        for d in range(self.config.depth):
            names += [f"w1_{d}", f"b1_{d}", f"w2_{d}", f"b2_{d}"]
        return names + ["w_out", "b_out"]

    def trainable_names(self) -> list[str]:
        return [n for n in self.param_names() if n not in self.FROZEN]

    def time_embedding(self, t: np.ndarray) -> np.ndarray:
        p = self.params
        return np.cos(
            2.0 * np.pi * t[:, None] * p["fourier_freq"][None, :] + p["fourier_phase"][None, :]
        )

    def _forward_raw(self, x: np.ndarray, t: np.ndarray, want_cache: bool = False):
        """Network output before the 1/sigma rescale; optionally keep a cache."""
        p = self.params
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        if x.shape[1] != self.in_dim:
            raise ConfigError(f"input dim {x.shape[1]} != model dim {self.in_dim}")
        if t.shape[0] != x.shape[0]:
            raise ConfigError(f"times {t.shape} do not match batch {x.shape}")
        emb = self.time_embedding(t)
        h = x @ p["w_in"].T + p["b_in"]
        cache = {"x": x, "emb": emb, "h0": h} if want_cache else None
        for d in range(self.config.depth):
            c = np.concatenate([h, emb], axis=1)
            a = c @ p[f"w1_{d}"].T + p[f"b1_{d}"]
            z1 = _silu(a)
            b = z1 @ p[f"w2_{d}"].T + p[f"b2_{d}"]
            h = h + _silu(b)
            if want_cache:
                cache[f"c_{d}"] = c
                cache[f"a_{d}"] = a
                cache[f"z1_{d}"] = z1
                cache[f"b_{d}"] = b
        out = h @ p["w_out"].T + p["b_out"]
        if want_cache:
            cache["h_final"] = h
            return out, cache
        return out

    def _backward(self, d_out: np.ndarray, cache: dict) -> dict[str, np.ndarray]:
        """Gradients of a scalar loss w.r.t. every trainable parameter,
        given the loss gradient at the raw output."""
        p = self.params
        g: dict[str, np.ndarray] = {}
        g["w_out"] = d_out.T @ cache["h_final"]
        g["b_out"] = d_out.sum(axis=0)
        dh = d_out @ p["w_out"]
        hid = self.config.hidden
        for d in reversed(range(self.config.depth)):
            db = dh * _silu_grad(cache[f"b_{d}"])
            g[f"w2_{d}"] = db.T @ cache[f"z1_{d}"]
            g[f"b2_{d}"] = db.sum(axis=0)
            da = (db @ p[f"w2_{d}"]) * _silu_grad(cache[f"a_{d}"])
            g[f"w1_{d}"] = da.T @ cache[f"c_{d}"]
            g[f"b1_{d}"] = da.sum(axis=0)
            dh = dh + (da @ p[f"w1_{d}"])[:, :hid]
        g["w_in"] = dh.T @ cache["x"]
        g["b_in"] = dh.sum(axis=0)
        return g

    def score(self, x: np.ndarray, t) -> np.ndarray:
        """s(x, t): raw output divided by sigma(t). Accepts (D,) or (B, D)."""
        single = np.asarray(x).ndim == 1
        x2 = np.atleast_2d(np.asarray(x, dtype=np.float64))
        t2 = np.broadcast_to(np.asarray(t, dtype=np.float64), (x2.shape[0],)).copy()
        _check_times(t2)
        out = self._forward_raw(x2, t2)
        s = out / self.kernel.sigma(t2)[:, None]
        return s[0] if single else s


def dsm_loss(
    model: ScoreModel,
    poses: np.ndarray,
    times: np.ndarray,
    noises: np.ndarray,
    with_grads: bool = True,
):
    """Denoising score-matching loss and its parameter gradients.

    Perturbs each pose to x(t) = mean_coeff(t) x0 + sigma(t) z and evaluates
    the per-sample residual sigma(t) s(x(t), t) + z, returning the batch mean
    of its squared norm. The sigma(t)^2 weighting of the raw score-matching
    objective is already absorbed into this form.
    """
    if len(poses) == 0:
        raise ConfigError("batch must be nonempty")
    x0 = np.asarray(poses, dtype=np.float64).reshape(len(poses), -1)
    t = _check_times(np.asarray(times, dtype=np.float64))
    z = np.asarray(noises, dtype=np.float64).reshape(x0.shape)
    x_t = perturb(x0, t, z, model.kernel)
    out, cache = model._forward_raw(x_t, t, want_cache=True)
    resid = out + z
    loss = float((resid**2).sum() / x0.shape[0])
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"loss became {loss}")
    if not with_grads:
        return loss, None
    grads = model._backward(2.0 * resid / x0.shape[0], cache)
    return loss, grads
