"""Score-network training: Adam with linear warmup and cosine decay.

All randomness (shuffling, augmentation, diffusion times, noise) flows from a
single seeded generator, so equal seeds give bitwise-identical weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .score_model import ModelConfig, ScoreModel, dsm_loss
from .sde import SdeConfig
from .skeleton import SkeletonSpec, default_skeleton, flip_permutation


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 512
    learning_rate: float = 2e-4
    warmup_iters: int = 400
    seed: int = 0
    augment_flip: bool = True
    augment_rotate: bool = False

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.warmup_iters < 0:
            raise ConfigError(f"bad train config: {self}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.learning_rate}")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "warmup_iters": self.warmup_iters,
            "seed": self.seed,
            "augment_flip": self.augment_flip,
            "augment_rotate": self.augment_rotate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        try:
            base = cls()
            return cls(
                int(d.get("epochs", base.epochs)),
                int(d.get("batch_size", base.batch_size)),
                float(d.get("learning_rate", base.learning_rate)),
                int(d.get("warmup_iters", base.warmup_iters)),
                int(d.get("seed", base.seed)),
                bool(d.get("augment_flip", base.augment_flip)),
                bool(d.get("augment_rotate", base.augment_rotate)),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad train config: {exc}") from exc


class Adam:
    """Per-parameter adaptive steps; beta1=0.9, beta2=0.999, eps=1e-8."""

    def __init__(self, names: list[str], beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self.m: dict[str, np.ndarray] = {n: None for n in names}  # type: ignore[misc]
        self.v: dict[str, np.ndarray] = {n: None for n in names}  # type: ignore[misc]

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float):
        self.step_count += 1
        c1 = 1.0 - self.beta1**self.step_count
        c2 = 1.0 - self.beta2**self.step_count
        for name, g in grads.items():
            if self.m[name] is None:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g**2
            params[name] -= lr * (self.m[name] / c1) / (np.sqrt(self.v[name] / c2) + self.eps)


def lr_at(step: int, total_steps: int, cfg: TrainConfig) -> float:
    """Linear warmup to the base rate, then cosine decay to zero."""
    if cfg.warmup_iters > 0 and step < cfg.warmup_iters:
        return cfg.learning_rate * (step + 1) / cfg.warmup_iters
    span = max(total_steps - cfg.warmup_iters, 1)
    progress = (step - cfg.warmup_iters) / span
    return cfg.learning_rate * 0.5 * (1.0 + np.cos(np.pi * min(progress, 1.0)))


def _augment_batch(batch: np.ndarray, spec: SkeletonSpec, cfg: TrainConfig, rng) -> np.ndarray:
    """Random mirror (p=0.5 per sample) and uniform z-rotation per sample."""
    out = batch
    if cfg.augment_flip:
        out = out.copy()
        mask = rng.random(len(out)) < 0.5
        if mask.any():
            perm = flip_permutation(spec)
            flipped = out[mask][:, perm]
            flipped[:, :, 0] *= -1.0
            out[mask] = flipped
    if cfg.augment_rotate:
        angles = rng.uniform(0.0, 2.0 * np.pi, len(out))
        c, s = np.cos(angles), np.sin(angles)
        rots = np.zeros((len(out), 3, 3))
        rots[:, 0, 0] = c
        rots[:, 0, 1] = -s
        rots[:, 1, 0] = s
        rots[:, 1, 1] = c
        rots[:, 2, 2] = 1.0
        out = np.einsum("bjk,blk->bjl", out, rots)
    return out


def train(
    dataset: np.ndarray,
    cfg: TrainConfig,
    sde: SdeConfig = SdeConfig(),
    skeleton: SkeletonSpec | None = None,
    model_config: ModelConfig = ModelConfig(),
    checkpoint_path=None,
    step_callback=None,
) -> tuple[ScoreModel, list[dict]]:
    """Fit a score model to pelvis-relative poses.

    ``dataset`` is (N, J, 3). Returns the model and the per-step loss history
    (records with step, loss, lr). On KeyboardInterrupt a checkpoint is
    written to ``checkpoint_path`` (if given) before re-raising.
    """
    poses = np.asarray(dataset, dtype=np.float64)
    if poses.ndim != 3 or poses.shape[0] == 0 or poses.shape[2] != 3:
        raise ConfigError(f"dataset must be a nonempty (N, J, 3) array, got {poses.shape}")
    n, j = poses.shape[:2]
    spec = skeleton or default_skeleton()
    if cfg.augment_flip and spec.n_joints != j:
        raise ConfigError(
            f"flip augmentation needs a skeleton with {j} joints, spec has {spec.n_joints}"
        )
    rng = np.random.default_rng(cfg.seed)
    model = ScoreModel(j, model_config, sde, seed=int(rng.integers(2**31)))
    opt = Adam(model.trainable_names())
    steps_per_epoch = max(1, int(np.ceil(n / cfg.batch_size)))
    total_steps = cfg.epochs * steps_per_epoch
    history: list[dict] = []
    step = 0
    try:
        for _ in range(cfg.epochs):
            order = rng.permutation(n)
            for start in range(0, n, cfg.batch_size):
                batch = poses[order[start : start + cfg.batch_size]]
                batch = _augment_batch(batch, spec, cfg, rng)
                t = 1.0 - rng.random(len(batch))  # uniform over (0, 1]
                z = rng.standard_normal((len(batch), 3 * j))
                loss, grads = dsm_loss(model, batch, t, z)
                lr = lr_at(step, total_steps, cfg)
                opt.step(model.params, grads, lr)
                history.append({"step": step, "loss": loss, "lr": lr})
                if step_callback is not None:
                    step_callback(step, loss)
                step += 1
    except KeyboardInterrupt:
        if checkpoint_path is not None:
            from .data_io import save_checkpoint

            save_checkpoint(checkpoint_path, model)
        raise
    return model, history


def smoothed_final_loss(history: list[dict], window: int = 20) -> float:
    """Mean loss over the last ``window`` steps; the quantity expected to end
    strictly below the first step's loss."""
    if not history:
        raise ConfigError("empty training history")
    return float(np.mean([h["loss"] for h in history[-window:]]))
