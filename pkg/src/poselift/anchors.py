"""Anchor selection: k-means medoids plus the two sampling baselines."""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, TooFewPoses
from .sampling import sample
from .score_model import ScoreModel
from .skeleton import Frame, Pose3D


class AnchorSource(enum.Enum):
    KMEANS = "kmeans"
    RANDOM_SAMPLE = "random_sample"
    RANDOM_GENERATE = "random_generate"


@dataclass
class AnchorSet:
    """S pelvis-relative starting poses plus where they came from."""

    poses: list[Pose3D]
    source: AnchorSource
    provenance: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.poses)


def dataset_sha256(poses: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(poses, dtype=np.float64).tobytes()).hexdigest()


def _as_dataset(dataset) -> np.ndarray:
    arr = np.asarray(dataset, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ConfigError(f"dataset must be (N, J, 3), got {arr.shape}")
    return arr


def _kmeans_pp_init(flat: np.ndarray, k: int, rng) -> np.ndarray:
    """k-means++ seeding; falls back to unchosen points when all distances hit zero."""
    n = flat.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = ((flat - flat[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(k - 1):
        total = d2.sum()
        if total <= 0:
            remaining = np.setdiff1d(np.arange(n), chosen)
            chosen.append(int(rng.choice(remaining)))
        else:
            chosen.append(int(rng.choice(n, p=d2 / total)))
        d2 = np.minimum(d2, ((flat - flat[chosen[-1]]) ** 2).sum(axis=1))
    return flat[chosen].copy()


def lloyd_kmeans(
    flat: np.ndarray, k: int, rng, max_iter: int = 300, tol: float = 1e-6
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Lloyd iterations from a k-means++ start.

    Returns centroids, assignments, and the per-iteration within-cluster
    sum of squares (non-increasing by construction).
    """
    centroids = _kmeans_pp_init(flat, k, rng)
    sse_log: list[float] = []
    labels = np.zeros(len(flat), dtype=int)
    for _ in range(max_iter):
        d2 = ((flat[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        labels = d2.argmin(axis=1)
        sse_log.append(float(d2[np.arange(len(flat)), labels].sum()))
        new_centroids = centroids.copy()
        for c in range(k):
            members = flat[labels == c]
            if len(members):
                new_centroids[c] = members.mean(axis=0)
            else:
                # re-seed an empty cluster at the point farthest from its centroid
                far = int(d2[np.arange(len(flat)), labels].argmax())
                new_centroids[c] = flat[far]
        shift = np.linalg.norm(new_centroids - centroids, axis=1).max()
        centroids = new_centroids
        if shift < tol:
            break
    return centroids, labels, sse_log


def kmeans_anchors(dataset, count: int, seed: int = 0) -> AnchorSet:
    """Representative anchors: k-means centroids snapped to dataset medoids.

    Every anchor is a real member of the dataset (the pose nearest its
    centroid), so anchors stay kinematically valid.
    """
    poses = _as_dataset(dataset)
    if len(poses) < count:
        raise TooFewPoses(f"dataset has {len(poses)} poses, need at least {count}")
    if count < 1:
        raise ConfigError("count must be >= 1")
    rng = np.random.default_rng(seed)
    flat = poses.reshape(len(poses), -1)
    centroids, _, sse_log = lloyd_kmeans(flat, count, rng)
    picks = []
    for c in centroids:
        picks.append(int(((flat - c) ** 2).sum(axis=1).argmin()))
    return AnchorSet(
        poses=[Pose3D(poses[i], Frame.PELVIS_RELATIVE) for i in picks],
        source=AnchorSource.KMEANS,
        provenance={
            "seed": seed,
            "dataset_sha256": dataset_sha256(poses),
            "medoid_indices": picks,
            "sse_log": sse_log,
        },
    )


def random_sample_anchors(dataset, count: int, seed: int = 0) -> AnchorSet:
    """Uniform draw of anchors from the dataset, without replacement."""
    poses = _as_dataset(dataset)
    if len(poses) < count:
        raise TooFewPoses(f"dataset has {len(poses)} poses, need at least {count}")
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(poses), size=count, replace=False).tolist()
    return AnchorSet(
        poses=[Pose3D(poses[i], Frame.PELVIS_RELATIVE) for i in picks],
        source=AnchorSource.RANDOM_SAMPLE,
        provenance={"seed": seed, "dataset_sha256": dataset_sha256(poses), "indices": picks},
    )


def random_generate_anchors(model: ScoreModel, count: int, seed: int = 0) -> AnchorSet:
    """Anchors drawn from the trained generation model itself."""
    poses = sample(model, count, seed=seed)
    return AnchorSet(
        poses=poses,
        source=AnchorSource.RANDOM_GENERATE,
        provenance={"seed": seed, "model_joints": model.n_joints},
    )
