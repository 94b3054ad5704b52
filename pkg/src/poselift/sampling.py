"""Reverse-time inference: truncated denoising and full generation.

The deterministic default integrates the probability-flow dynamics
    dx = [-beta(t) x / 2 - g(t)^2 s(x, t) / 2] dt
with Euler steps; the stochastic flag switches to the full reverse SDE with
the same step grid. Both never evaluate at t = 0 (the last evaluation sits
one step above it), which keeps the 1/sigma score rescale finite.
"""

from __future__ import annotations

import numpy as np

from .errors import NonFinitePose, OutOfRangeTime
from .score_model import ScoreModel
from .skeleton import Frame, Pose3D, _as_joints

TRUNCATION_MAX_T = 0.1


def _integrate_reverse(
    model: ScoreModel,
    x: np.ndarray,
    t_start: float,
    steps: int,
    stochastic: bool,
    rng,
) -> np.ndarray:
    kernel = model.kernel
    beta = model.sde.beta
    dt = t_start / steps
    times = t_start - dt * np.arange(steps)
    for t in times:
        tb = np.full(x.shape[0], t)
        score = model._forward_raw(x, tb) / kernel.sigma(t)
        g2 = kernel.diffusion_squared(t)
        weight = 1.0 if stochastic else 0.5
        drift = -0.5 * beta(t) * x - weight * g2 * score
        x = x - dt * drift
        if stochastic:
            x = x + np.sqrt(g2 * dt) * rng.standard_normal(x.shape)
    return x


def denoise(
    model: ScoreModel,
    pose,
    t_start: float,
    steps: int,
    pelvis_index: int = 0,
    stochastic: bool = False,
    add_forward_noise: bool = False,
    rng=None,
):
    """Truncated reverse integration from a small t_start down to 0.

    The input is treated as an already-noisy sample x(t_start); with
    ``add_forward_noise`` it is first pushed through the forward kernel at
    t_start instead. ``steps == 0`` returns the input unchanged. The pelvis
    row is forced back to exactly zero on output. Returns the same kind the
    caller passed (Pose3D in, Pose3D out; array in, array out).
    """
    if not (0.0 < t_start <= TRUNCATION_MAX_T + 1e-12):
        raise OutOfRangeTime(f"t_start must lie in (0, {TRUNCATION_MAX_T}], got {t_start}")
    joints = _as_joints(pose)
    if steps == 0:
        return pose if isinstance(pose, Pose3D) else joints.copy()
    if (stochastic or add_forward_noise) and rng is None:
        rng = np.random.default_rng()
    x = joints.reshape(1, -1).astype(np.float64)
    if add_forward_noise:
        kernel = model.kernel
        x = kernel.mean_coeff(t_start) * x + kernel.sigma(t_start) * rng.standard_normal(x.shape)
    x = _integrate_reverse(model, x, float(t_start), int(steps), stochastic, rng)
    if not np.all(np.isfinite(x)):
        raise NonFinitePose("denoising diverged; the score model looks undertrained")
    out = x.reshape(joints.shape)
    out[pelvis_index] = 0.0
    if isinstance(pose, Pose3D):
        return Pose3D(out, Frame.PELVIS_RELATIVE)
    return out


def sample(
    model: ScoreModel,
    count: int,
    seed: int = 0,
    steps: int = 1000,
    stochastic: bool = True,
    pelvis_index: int = 0,
) -> list[Pose3D]:
    """Generate poses by reverse integration from the unit-Gaussian prior.

    Starts at t = 1 (where the forward process has essentially erased the
    data) and integrates to 0 in ``steps`` Euler steps; pelvis rows are
    clamped to exactly zero.
    """
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((count, model.in_dim))
    x = _integrate_reverse(model, x, 1.0, int(steps), stochastic, rng)
    if not np.all(np.isfinite(x)):
        raise NonFinitePose("sampling diverged; the score model looks undertrained")
    poses = x.reshape(count, model.n_joints, 3)
    poses[:, pelvis_index, :] = 0.0
    return [Pose3D(p, Frame.PELVIS_RELATIVE) for p in poses]
