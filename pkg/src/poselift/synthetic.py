"""Synthetic pose/camera generator for desk-scale training and evaluation.

Poses are sampled by forward kinematics over the skeleton tree: each bone
keeps its configured length while its local orientation is drawn from a
per-joint Euler-angle range, so every generated skeleton has exactly the
configured bone lengths and symmetric left/right statistics. A pinhole
camera is placed at a sampled azimuth, distance, and height, looking at the
pelvis; 2D keypoints are the projections plus optional Gaussian pixel noise,
with confidences tied to the injected noise so the confidence-weighted
solver has a real signal to exploit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .geometry import CameraIntrinsics
from .skeleton import Frame, Pose2D, Pose3D, SkeletonSpec, default_skeleton

DEFAULT_BONE_LENGTHS = {
    "r_hip": 0.13, "l_hip": 0.13,
    "r_knee": 0.45, "l_knee": 0.45,
    "r_ankle": 0.45, "l_ankle": 0.45,
    "spine": 0.23, "thorax": 0.26, "neck": 0.12, "head": 0.12,
    "l_shoulder": 0.17, "r_shoulder": 0.17,
    "l_elbow": 0.28, "r_elbow": 0.28,
    "l_wrist": 0.25, "r_wrist": 0.25,
}

# half-width (radians) of the uniform Euler draws for the bone ending at each joint
DEFAULT_ANGLE_RANGES = {
    "r_hip": 0.1, "l_hip": 0.1,
    "r_knee": 0.6, "l_knee": 0.6,
    "r_ankle": 0.7, "l_ankle": 0.7,
    "spine": 0.15, "thorax": 0.15, "neck": 0.2, "head": 0.25,
    "l_shoulder": 0.15, "r_shoulder": 0.15,
    "l_elbow": 0.8, "r_elbow": 0.8,
    "l_wrist": 0.8, "r_wrist": 0.8,
}

# unit rest directions in a z-up world frame, person facing +x
DEFAULT_REST_DIRECTIONS = {
    "r_hip": (0.0, -1.0, 0.0), "l_hip": (0.0, 1.0, 0.0),
    "r_knee": (0.0, 0.0, -1.0), "l_knee": (0.0, 0.0, -1.0),
    "r_ankle": (0.0, 0.0, -1.0), "l_ankle": (0.0, 0.0, -1.0),
    "spine": (0.0, 0.0, 1.0), "thorax": (0.0, 0.0, 1.0),
    "neck": (0.0, 0.0, 1.0), "head": (0.0, 0.0, 1.0),
    "l_shoulder": (0.0, 1.0, 0.0), "r_shoulder": (0.0, -1.0, 0.0),
    "l_elbow": (0.0, 0.0, -1.0), "r_elbow": (0.0, 0.0, -1.0),
    "l_wrist": (0.0, 0.0, -1.0), "r_wrist": (0.0, 0.0, -1.0),
}


@dataclass(frozen=True)
class SyntheticConfig:
    count: int = 1000
    bone_lengths: dict = field(default_factory=lambda: dict(DEFAULT_BONE_LENGTHS))
    angle_ranges: dict = field(default_factory=lambda: dict(DEFAULT_ANGLE_RANGES))
    facing_range_rad: float = np.pi  # relative yaw of the body w.r.t. the camera
    tilt_range_rad: float = 0.12  # root pitch/roll half-width
    fov_deg_range: tuple[float, float] = (40.0, 70.0)
    distance_m_range: tuple[float, float] = (3.0, 6.0)
    height_m_range: tuple[float, float] = (-0.2, 0.6)  # camera height above the pelvis
    image_size_px: float = 1000.0
    noise_sigma_px: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.count < 1:
            raise ConfigError("count must be >= 1")
        if any(v <= 0 for v in self.bone_lengths.values()):
            raise ConfigError("bone lengths must be positive")
        if any(v < 0 for v in self.angle_ranges.values()):
            raise ConfigError("angle ranges must be non-negative")
        for name in ("fov_deg_range", "distance_m_range", "height_m_range"):
            lo, hi = getattr(self, name)
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ConfigError(f"{name} must be a non-degenerate (lo, hi) range")
        if self.fov_deg_range[0] <= 0 or self.fov_deg_range[1] >= 180:
            raise ConfigError("fov range must stay inside (0, 180) degrees")
        if self.distance_m_range[0] <= 1.0:
            raise ConfigError("cameras closer than 1 m risk joints behind the image plane")
        if self.noise_sigma_px < 0 or self.image_size_px <= 0:
            raise ConfigError("noise sigma must be >= 0 and image size positive")

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "bone_lengths": dict(self.bone_lengths),
            "angle_ranges": dict(self.angle_ranges),
            "facing_range_rad": self.facing_range_rad,
            "tilt_range_rad": self.tilt_range_rad,
            "fov_deg_range": list(self.fov_deg_range),
            "distance_m_range": list(self.distance_m_range),
            "height_m_range": list(self.height_m_range),
            "image_size_px": self.image_size_px,
            "noise_sigma_px": self.noise_sigma_px,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticConfig":
        base = cls()
        try:
            return cls(
                count=int(d.get("count", base.count)),
                bone_lengths={str(k): float(v) for k, v in d.get("bone_lengths", DEFAULT_BONE_LENGTHS).items()},
                angle_ranges={str(k): float(v) for k, v in d.get("angle_ranges", DEFAULT_ANGLE_RANGES).items()},
                facing_range_rad=float(d.get("facing_range_rad", base.facing_range_rad)),
                tilt_range_rad=float(d.get("tilt_range_rad", base.tilt_range_rad)),
                fov_deg_range=tuple(d.get("fov_deg_range", base.fov_deg_range)),
                distance_m_range=tuple(d.get("distance_m_range", base.distance_m_range)),
                height_m_range=tuple(d.get("height_m_range", base.height_m_range)),
                image_size_px=float(d.get("image_size_px", base.image_size_px)),
                noise_sigma_px=float(d.get("noise_sigma_px", base.noise_sigma_px)),
                seed=int(d.get("seed", base.seed)),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad synthetic config: {exc}") from exc


@dataclass
class SyntheticDataset:
    """Ground truth bundle: camera-frame 3D, 2D observations, cameras, world 3D."""

    poses_cam: np.ndarray  # (N, J, 3)
    pixels: np.ndarray  # (N, J, 2), noise applied
    confidence: np.ndarray  # (N, J)
    cameras: list[CameraIntrinsics]
    clean_pixels: np.ndarray  # (N, J, 2)
    poses_world: np.ndarray  # (N, J, 3), pelvis at the origin

    def __len__(self) -> int:
        return len(self.poses_cam)

    def pose3d(self, i: int) -> Pose3D:
        return Pose3D(self.poses_cam[i], Frame.CAMERA_ABSOLUTE)

    def pose2d(self, i: int) -> Pose2D:
        return Pose2D(self.pixels[i], self.confidence[i])


def _euler_rotations(rng, n: int, half_width: float) -> np.ndarray:
    """(n, 3, 3) rotations Rz(c) Ry(b) Rx(a) with angles ~ U(-w, w)."""
    a, b, c = rng.uniform(-half_width, half_width, (3, n))
    ca, sa = np.cos(a), np.sin(a)
    cb, sb = np.cos(b), np.sin(b)
    cc, sc = np.cos(c), np.sin(c)
    r = np.empty((n, 3, 3))
    r[:, 0, 0] = cc * cb
    r[:, 0, 1] = cc * sb * sa - sc * ca
    r[:, 0, 2] = cc * sb * ca + sc * sa
    r[:, 1, 0] = sc * cb
    r[:, 1, 1] = sc * sb * sa + cc * ca
    r[:, 1, 2] = sc * sb * ca - cc * sa
    r[:, 2, 0] = -sb
    r[:, 2, 1] = cb * sa
    r[:, 2, 2] = cb * ca
    return r


def _topological_order(spec: SkeletonSpec) -> list[int]:
    order, seen = [], {spec.pelvis_index}
    pending = [i for i in range(spec.n_joints) if i != spec.pelvis_index]
    while pending:
        rest = []
        for i in pending:
            if spec.parents[i] in seen:
                order.append(i)
                seen.add(i)
            else:
                rest.append(i)
        pending = rest
    return order


def sample_world_poses(cfg: SyntheticConfig, spec: SkeletonSpec, rng, n: int, yaw: np.ndarray) -> np.ndarray:
    """Forward-kinematic sampling; returns (n, J, 3) with pelvis at origin."""
    for name in spec.joint_names:
        if name != spec.joint_names[spec.pelvis_index]:
            if name not in cfg.bone_lengths or name not in DEFAULT_REST_DIRECTIONS:
                raise ConfigError(f"no bone length/rest direction for joint {name!r}")
    cy, sy = np.cos(yaw), np.sin(yaw)
    root = np.zeros((n, 3, 3))
    root[:, 0, 0] = cy
    root[:, 0, 1] = -sy
    root[:, 1, 0] = sy
    root[:, 1, 1] = cy
    root[:, 2, 2] = 1.0
    root = root @ _euler_rotations(rng, n, cfg.tilt_range_rad)
    orient = {spec.pelvis_index: root}
    joints = np.zeros((n, spec.n_joints, 3))
    for j in _topological_order(spec):
        name = spec.joint_names[j]
        parent = spec.parents[j]
        local = _euler_rotations(rng, n, cfg.angle_ranges.get(name, 0.0))
        orient[j] = orient[parent] @ local
        offset = np.asarray(DEFAULT_REST_DIRECTIONS[name]) * cfg.bone_lengths[name]
        joints[:, j] = joints[:, parent] + orient[j] @ offset
    return joints


def _look_at_rotations(eyes: np.ndarray) -> np.ndarray:
    """World-to-camera rotations for cameras at ``eyes`` looking at the origin,
    image y pointing downward."""
    z = -eyes / np.linalg.norm(eyes, axis=1, keepdims=True)
    up = np.array([0.0, 0.0, 1.0])
    x = np.cross(z, up)
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    y = np.cross(z, x)
    return np.stack([x, y, z], axis=1)


def generate_synthetic(
    cfg: SyntheticConfig, spec: SkeletonSpec | None = None
) -> SyntheticDataset:
    """Sample poses, place cameras, and project; all ground truth retained."""
    spec = spec or default_skeleton()
    rng = np.random.default_rng(cfg.seed)
    n = cfg.count
    azimuth = rng.uniform(0.0, 2.0 * np.pi, n)
    # yaw measured relative to the camera direction: 0 faces the camera
    yaw = azimuth + np.pi + rng.uniform(-cfg.facing_range_rad, cfg.facing_range_rad, n)
    world = sample_world_poses(cfg, spec, rng, n, yaw)

    dist = rng.uniform(*cfg.distance_m_range, n)
    height = rng.uniform(*cfg.height_m_range, n)
    eyes = np.stack([dist * np.cos(azimuth), dist * np.sin(azimuth), height], axis=1)
    rot = _look_at_rotations(eyes)
    poses_cam = np.einsum("nij,nkj->nki", rot, world - eyes[:, None, :])

    fov = np.deg2rad(rng.uniform(*cfg.fov_deg_range, n))
    focal = (cfg.image_size_px / 2.0) / np.tan(fov / 2.0)
    c = cfg.image_size_px / 2.0
    cameras = [CameraIntrinsics(f, f, c, c) for f in focal]

    z = poses_cam[:, :, 2]
    clean = np.empty((n, spec.n_joints, 2))
    clean[:, :, 0] = focal[:, None] * poses_cam[:, :, 0] / z + c
    clean[:, :, 1] = focal[:, None] * poses_cam[:, :, 1] / z + c
    if cfg.noise_sigma_px > 0:
        noise = rng.normal(0.0, cfg.noise_sigma_px, clean.shape)
        pixels = clean + noise
        conf = np.exp(-(noise**2).sum(axis=2) / (2.0 * cfg.noise_sigma_px**2))
        conf = np.clip(conf, 0.1, 1.0)
    else:
        pixels = clean.copy()
        conf = np.ones((n, spec.n_joints))
    return SyntheticDataset(poses_cam, pixels, conf, cameras, clean, world)
