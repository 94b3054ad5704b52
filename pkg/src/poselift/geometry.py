"""Camera and alignment math: pinhole projection, rays, Procrustes.

The camera model is a zero-skew pinhole (fx, fy, cx, cy); the camera sits at
the origin looking along +z with y pointing down in the image. Rays are
represented as unit-norm rows of a (J, 3) array, origin at the camera center.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegeneratePose, JointCountMismatch, NonPositiveDepth
from .skeleton import Frame, Pose2D, Pose3D, _as_joints


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixels, zero skew."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        vals = (self.fx, self.fy, self.cx, self.cy)
        if not all(np.isfinite(v) for v in vals):
            raise ConfigError(f"intrinsics must be finite, got {vals}")
        if self.fx <= 0 or self.fy <= 0:
            raise ConfigError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy}

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        try:
            return cls(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad camera intrinsics: {exc}") from exc


@dataclass(frozen=True)
class SimilarityTransform:
    """scale * rotation @ x + translation; scale 1 makes it rigid."""

    rotation: np.ndarray
    translation: np.ndarray
    scale: float = 1.0

    def apply(self, points) -> np.ndarray:
        pts = _as_joints(points)
        return self.scale * pts @ self.rotation.T + self.translation


def project_points(points: np.ndarray, cam: CameraIntrinsics) -> np.ndarray:
    """Pinhole-project (J, 3) camera-frame points to (J, 2) pixels."""
    pts = np.asarray(points, dtype=np.float64)
    z = pts[:, 2]
    bad = np.nonzero(z <= 0)[0]
    if bad.size:
        raise NonPositiveDepth(f"joint {bad[0]} has depth {z[bad[0]]:.6g} <= 0")
    return np.stack(
        [cam.fx * pts[:, 0] / z + cam.cx, cam.fy * pts[:, 1] / z + cam.cy], axis=1
    )


def project(pose: Pose3D, cam: CameraIntrinsics) -> Pose2D:
    """Project a camera-frame pose; output confidences are all 1."""
    return Pose2D(project_points(_as_joints(pose), cam))


def pixels_to_rays(p2d, cam: CameraIntrinsics) -> np.ndarray:
    """Back-project pixels through the inverse intrinsics to unit rays.

    Returns a (J, 3) array of unit rows, each with positive z.
    """
    px = _as_joints(p2d, dim=2)
    rays = np.empty((px.shape[0], 3))
    rays[:, 0] = (px[:, 0] - cam.cx) / cam.fx
    rays[:, 1] = (px[:, 1] - cam.cy) / cam.fy
    rays[:, 2] = 1.0
    return rays / np.linalg.norm(rays, axis=1, keepdims=True)


def project_onto_rays(
    points, translation: np.ndarray, rays: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Snap each joint to its camera ray at fixed translation.

    Joint j becomes the orthogonal projection of (P_j + T) onto the line
    spanned by ray j, shifted back by -T. Returns the new joints and a
    boolean mask of joints that landed in front of the camera; behind-camera
    joints are reported rather than raised so transient bad translations
    stay diagnosable.
    """
    pts = _as_joints(points)
    t = np.asarray(translation, dtype=np.float64)
    if rays.shape != pts.shape:
        raise JointCountMismatch(f"rays {rays.shape} vs points {pts.shape}")
    depths = np.einsum("jk,jk->j", pts + t, rays)
    return depths[:, None] * rays - t, depths > 0


def rotation_z(angle: float) -> np.ndarray:
    """Right-handed rotation matrix about the z axis."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def procrustes_align(
    source, target, with_scale: bool = True
) -> tuple[SimilarityTransform, np.ndarray]:
    """Least-squares similarity alignment of source onto target.

    Solves min over (s, R, t) of sum ||s R src_j + t - tgt_j||^2 via the
    centered cross-covariance SVD, flipping the smallest singular direction
    when the rotation would otherwise be a reflection. ``with_scale=False``
    restricts to a rigid transform.
    """
    src = _as_joints(source)
    tgt = _as_joints(target)
    if src.shape != tgt.shape:
        raise JointCountMismatch(f"source {src.shape} vs target {tgt.shape}")
    if src.shape[0] < 3:
        raise DegeneratePose("alignment needs at least 3 joints")
    mu_s = src.mean(axis=0)
    mu_t = tgt.mean(axis=0)
    x0 = src - mu_s
    y0 = tgt - mu_t
    var_s = (x0**2).sum() / src.shape[0]
    if var_s < 1e-18:
        raise DegeneratePose("source pose has zero spatial variance")
    cov = y0.T @ x0 / src.shape[0]
    u, d, vt = np.linalg.svd(cov)
    sign = np.ones(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        sign[-1] = -1.0
    rot = u @ np.diag(sign) @ vt
    scale = float((d * sign).sum() / var_s) if with_scale else 1.0
    trans = mu_t - scale * rot @ mu_s
    transform = SimilarityTransform(rot, trans, scale)
    return transform, transform.apply(src)
