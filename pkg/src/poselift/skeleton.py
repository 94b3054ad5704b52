"""Joint topology, pose containers, normalization, and augmentation.

Poses are (J, 3) float64 arrays in meters wrapped in :class:`Pose3D`; 2D
keypoints are (J, 2) pixel arrays with per-joint confidences in
:class:`Pose2D`. The canonical 17-joint layout follows the common
motion-capture convention (pelvis-rooted tree, symmetric left/right limbs)
and carries the 14-joint evaluation subset.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, WrongJointCount


class Frame(enum.Enum):
    """Coordinate frame of a 3D pose."""

    CAMERA_ABSOLUTE = 0
    PELVIS_RELATIVE = 1


@dataclass(frozen=True)
class SkeletonSpec:
    """Joint names, tree structure, flip pairs, and the 14-joint subset.

    ``flip_pairs`` lists (left, right) index pairs; ``parents`` encodes a
    tree rooted at ``pelvis_index`` (parent -1 for the root).
    """

    joint_names: tuple[str, ...]
    pelvis_index: int
    flip_pairs: tuple[tuple[int, int], ...]
    parents: tuple[int, ...]
    lsp14_subset: tuple[int, ...] = ()

    def __post_init__(self):
        j = len(self.joint_names)
        if not (0 <= self.pelvis_index < j):
            raise ConfigError(f"pelvis_index {self.pelvis_index} out of range for {j} joints")
        if len(self.parents) != j:
            raise ConfigError("parents length must equal joint count")
        seen: set[int] = set()
        for left, right in self.flip_pairs:
            if not (0 <= left < j and 0 <= right < j) or left == right:
                raise ConfigError(f"invalid flip pair ({left}, {right})")
            if left in seen or right in seen:
                raise ConfigError("flip_pairs must be disjoint")
            seen.update((left, right))
        if self.parents[self.pelvis_index] != -1:
            raise ConfigError("pelvis must be the tree root (parent -1)")
        for idx, parent in enumerate(self.parents):
            if idx == self.pelvis_index:
                continue
            if not (0 <= parent < j):
                raise ConfigError(f"joint {idx} has invalid parent {parent}")
            # walk to the root; a tree of J nodes never needs more than J hops
            hops, node = 0, idx
            while node != self.pelvis_index:
                node = self.parents[node]
                hops += 1
                if node < 0 or hops > j:
                    raise ConfigError(f"parents do not form a tree rooted at the pelvis (joint {idx})")
        if self.lsp14_subset:
            if len(self.lsp14_subset) != 14 or len(set(self.lsp14_subset)) != 14:
                raise ConfigError("lsp14_subset must hold 14 distinct indices")
            if any(not (0 <= i < j) for i in self.lsp14_subset):
                raise ConfigError("lsp14_subset index out of range")

    @property
    def n_joints(self) -> int:
        return len(self.joint_names)

    def bones(self) -> list[tuple[int, int]]:
        """(child, parent) index pairs, one per non-root joint."""
        return [(i, p) for i, p in enumerate(self.parents) if i != self.pelvis_index]

    def to_dict(self) -> dict:
        return {
            "joint_names": list(self.joint_names),
            "pelvis_index": self.pelvis_index,
            "flip_pairs": [list(p) for p in self.flip_pairs],
            "parents": list(self.parents),
            "lsp14_subset": list(self.lsp14_subset),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SkeletonSpec":
        try:
            return cls(
                joint_names=tuple(d["joint_names"]),
                pelvis_index=int(d["pelvis_index"]),
                flip_pairs=tuple((int(a), int(b)) for a, b in d["flip_pairs"]),
                parents=tuple(int(p) for p in d["parents"]),
                lsp14_subset=tuple(int(i) for i in d.get("lsp14_subset", [])),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad skeleton spec: {exc}") from exc

    def sha256(self) -> bytes:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).digest()


def default_skeleton() -> SkeletonSpec:
    """Canonical 17-joint layout with the standard 14-joint evaluation order."""
    names = (
        "pelvis", "r_hip", "r_knee", "r_ankle", "l_hip", "l_knee", "l_ankle",
        "spine", "thorax", "neck", "head",
        "l_shoulder", "l_elbow", "l_wrist", "r_shoulder", "r_elbow", "r_wrist",
    )
    parents = (-1, 0, 1, 2, 0, 4, 5, 0, 7, 8, 9, 8, 11, 12, 8, 14, 15)
    flip_pairs = ((4, 1), (5, 2), (6, 3), (11, 14), (12, 15), (13, 16))
    # ankles/knees/hips right-to-left, wrists/elbows/shoulders right-to-left,
    # then thorax (neck stand-in) and head top
    lsp14 = (3, 2, 1, 4, 5, 6, 16, 15, 14, 11, 12, 13, 8, 10)
    return SkeletonSpec(names, 0, flip_pairs, parents, lsp14)


def _as_joints(pose, dim: int = 3) -> np.ndarray:
    """Coerce a Pose3D/Pose2D or array-like to a (J, dim) float64 array."""
    arr = getattr(pose, "joints", None)
    if arr is None:
        arr = getattr(pose, "pixels", pose)
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise DataError(f"expected a (J, {dim}) array, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class Pose3D:
    """One skeleton: (J, 3) joints in meters plus its coordinate frame."""

    joints: np.ndarray
    frame: Frame = Frame.CAMERA_ABSOLUTE

    def __post_init__(self):
        arr = np.array(self.joints, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 3:
            raise DataError(f"Pose3D joints must be (J, 3), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DataError("Pose3D joints must be finite")
        arr.flags.writeable = False
        object.__setattr__(self, "joints", arr)
        if not isinstance(self.frame, Frame):
            raise ConfigError(f"frame must be a Frame, got {self.frame!r}")

    @property
    def n_joints(self) -> int:
        return self.joints.shape[0]


@dataclass(frozen=True)
class Pose2D:
    """J pixel keypoints with per-joint confidences in [0, 1]."""

    pixels: np.ndarray
    confidence: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        px = np.array(self.pixels, dtype=np.float64)
        if px.ndim != 2 or px.shape[1] != 2:
            raise DataError(f"Pose2D pixels must be (J, 2), got {px.shape}")
        if not np.all(np.isfinite(px)):
            raise DataError("Pose2D pixels must be finite")
        conf = self.confidence
        conf = np.ones(px.shape[0]) if conf is None else np.array(conf, dtype=np.float64)
        if conf.shape != (px.shape[0],):
            raise DataError(f"confidence must be ({px.shape[0]},), got {conf.shape}")
        if not np.all(np.isfinite(conf)) or conf.min() < 0 or conf.max() > 1:
            raise DataError("confidences must be finite and within [0, 1]")
        px.flags.writeable = False
        conf.flags.writeable = False
        object.__setattr__(self, "pixels", px)
        object.__setattr__(self, "confidence", conf)

    @property
    def n_joints(self) -> int:
        return self.pixels.shape[0]


def to_pelvis_relative(pose: Pose3D, spec: SkeletonSpec) -> tuple[Pose3D, np.ndarray]:
    """Subtract the pelvis position; returns the relative pose and the pelvis.

    The returned pelvis position inverts the operation exactly via
    :func:`from_pelvis_relative`.
    """
    joints = _as_joints(pose)
    pelvis = joints[spec.pelvis_index].copy()
    rel = joints - pelvis
    return Pose3D(rel, Frame.PELVIS_RELATIVE), pelvis


def from_pelvis_relative(pose: Pose3D, pelvis_position: np.ndarray) -> Pose3D:
    """Invert :func:`to_pelvis_relative`."""
    joints = _as_joints(pose) + np.asarray(pelvis_position, dtype=np.float64)
    return Pose3D(joints, Frame.CAMERA_ABSOLUTE)


def flip_permutation(spec: SkeletonSpec) -> np.ndarray:
    """Joint permutation that swaps every left/right pair."""
    perm = np.arange(spec.n_joints)
    for left, right in spec.flip_pairs:
        perm[left], perm[right] = right, left
    return perm


def flip_lr(pose: Pose3D, spec: SkeletonSpec) -> Pose3D:
    """Mirror a pelvis-relative pose about the x = 0 plane.

    Negates x and swaps left/right joints, so flipping twice is the identity.
    """
    joints = _as_joints(pose).copy()
    joints[:, 0] = -joints[:, 0]
    joints = joints[flip_permutation(spec)]
    return Pose3D(joints, Frame.PELVIS_RELATIVE)


def rotate_about_z(pose: Pose3D, angle: float) -> Pose3D:
    """Rotate a pelvis-relative pose about the z axis; pelvis stays at zero."""
    c, s = np.cos(angle), np.sin(angle)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return Pose3D(_as_joints(pose) @ rot.T, Frame.PELVIS_RELATIVE)


def select_lsp14(pose: Pose3D, spec: SkeletonSpec) -> Pose3D:
    """Reduce a full-layout pose to the 14-joint evaluation subset."""
    joints = _as_joints(pose)
    if joints.shape[0] != spec.n_joints:
        raise WrongJointCount(
            f"pose has {joints.shape[0]} joints, skeleton defines {spec.n_joints}"
        )
    if not spec.lsp14_subset:
        raise ConfigError("skeleton spec has no lsp14_subset")
    frame = pose.frame if isinstance(pose, Pose3D) else Frame.CAMERA_ABSOLUTE
    return Pose3D(joints[list(spec.lsp14_subset)], frame)


def bone_lengths(pose, spec: SkeletonSpec) -> np.ndarray:
    """Parent-child distances, ordered like ``spec.bones()``."""
    joints = _as_joints(pose)
    idx = np.array(spec.bones())
    return np.linalg.norm(joints[idx[:, 0]] - joints[idx[:, 1]], axis=1)
