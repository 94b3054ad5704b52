"""File formats: binary pose files, model checkpoints, CSV keypoints, JSON.

Byte layouts are frozen in docs/formats.md. Poses travel as 32-bit floats on
disk and 64-bit in memory; writes go through a temp file and an atomic
rename so partially written files never shadow good ones.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from .anchors import AnchorSet, AnchorSource
from .errors import ConfigError, CorruptFile, DataError, ParseError
from .geometry import CameraIntrinsics
from .score_model import ModelConfig, ScoreModel
from .sde import SdeConfig
from .skeleton import Frame, Pose2D, SkeletonSpec

POSE_MAGIC = b"ZPSE"
POSE_VERSION = 1
POSE_HEADER = struct.Struct("<4sHHQB32s")  # magic, version, joints, count, frame, skeleton hash

CKPT_MAGIC = b"ZSCK"
CKPT_VERSION = 1
CKPT_HEADER = struct.Struct("<4sHHIIIdddQ")

CSV_COLUMNS = ("frame", "joint", "u", "v", "confidence")


def atomic_write_bytes(path, blob: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(blob)
    os.replace(tmp, path)


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode())


def write_poses(path, poses, frame: Frame, skeleton: SkeletonSpec | None = None) -> None:
    """Serialize (N, J, 3) poses; payload is little-endian f32, joint-major."""
    arr = np.ascontiguousarray(poses, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DataError(f"poses must be (N, J, 3), got {arr.shape}")
    digest = skeleton.sha256() if skeleton is not None else b"\x00" * 32
    header = POSE_HEADER.pack(
        POSE_MAGIC, POSE_VERSION, arr.shape[1], arr.shape[0], frame.value, digest
    )
    atomic_write_bytes(path, header + arr.astype("<f4").tobytes())


def read_poses(path, expected_joints: int | None = None):
    """Load a pose file; returns (poses f64, frame, skeleton hash bytes)."""
    blob = Path(path).read_bytes()
    if len(blob) < POSE_HEADER.size:
        raise CorruptFile(f"{path}: truncated header, file ends at byte {len(blob)}")
    magic, version, joints, count, frame_code, digest = POSE_HEADER.unpack_from(blob)
    if magic != POSE_MAGIC:
        raise CorruptFile(f"{path}: bad magic {magic!r}, expected {POSE_MAGIC!r}")
    if version != POSE_VERSION:
        raise DataError(f"{path}: format version {version}, this build reads {POSE_VERSION}")
    if expected_joints is not None and joints != expected_joints:
        raise DataError(f"{path}: file has {joints} joints, caller expected {expected_joints}")
    try:
        frame = Frame(frame_code)
    except ValueError as exc:
        raise CorruptFile(f"{path}: unknown frame code {frame_code}") from exc
    need = POSE_HEADER.size + count * joints * 3 * 4
    if len(blob) != need:
        raise CorruptFile(
            f"{path}: payload ends at byte {len(blob)}, header promises {need} bytes"
        )
    flat = np.frombuffer(blob, dtype="<f4", offset=POSE_HEADER.size)
    return flat.astype(np.float64).reshape(count, joints, 3), frame, digest


def save_checkpoint(path, model: ScoreModel) -> None:
    """Versioned header, SDE echo, then every parameter as f32 in canonical order."""
    blobs = [model.params[name].astype("<f4").tobytes() for name in model.param_names()]
    n_values = sum(model.params[name].size for name in model.param_names())
    cfg = model.config
    header = CKPT_HEADER.pack(
        CKPT_MAGIC,
        CKPT_VERSION,
        model.n_joints,
        cfg.hidden,
        cfg.depth,
        cfg.fourier_dim,
        model.sde.beta_min,
        model.sde.beta_max,
        cfg.fourier_scale,
        n_values,
    )
    atomic_write_bytes(path, header + b"".join(blobs))


def load_checkpoint(path, expected_joints: int | None = None) -> ScoreModel:
    blob = Path(path).read_bytes()
    if len(blob) < CKPT_HEADER.size:
        raise CorruptFile(f"{path}: truncated header, file ends at byte {len(blob)}")
    (magic, version, joints, hidden, depth, fourier_dim,
     beta_min, beta_max, fourier_scale, n_values) = CKPT_HEADER.unpack_from(blob)
    if magic != CKPT_MAGIC:
        raise CorruptFile(f"{path}: bad magic {magic!r}, expected {CKPT_MAGIC!r}")
    if version != CKPT_VERSION:
        raise DataError(f"{path}: checkpoint version {version}, this build reads {CKPT_VERSION}")
    if expected_joints is not None and joints != expected_joints:
        raise DataError(f"{path}: checkpoint is for {joints} joints, caller expected {expected_joints}")
    model = ScoreModel(
        joints,
        ModelConfig(hidden, depth, fourier_dim, fourier_scale),
        SdeConfig(beta_min, beta_max),
        seed=0,
    )
    values = np.frombuffer(blob, dtype="<f4", offset=CKPT_HEADER.size)
    if values.size != n_values:
        raise CorruptFile(
            f"{path}: parameter blob holds {values.size} values, header promises {n_values}"
        )
    offset = 0
    for name in model.param_names():
        shape = model.params[name].shape
        size = model.params[name].size
        if offset + size > values.size:
            raise CorruptFile(f"{path}: parameter blob too short at {name}")
        model.params[name] = values[offset : offset + size].astype(np.float64).reshape(shape)
        offset += size
    if offset != values.size:
        raise CorruptFile(f"{path}: {values.size - offset} trailing parameter values")
    return model


def save_anchors(path, anchors: AnchorSet, skeleton: SkeletonSpec | None = None) -> None:
    """Pose file plus a JSON provenance sidecar at <path>.provenance.json."""
    arr = np.stack([p.joints for p in anchors.poses])
    write_poses(path, arr, Frame.PELVIS_RELATIVE, skeleton)
    sidecar = {"source": anchors.source.value, **_jsonable(anchors.provenance)}
    atomic_write_text(f"{path}.provenance.json", json.dumps(sidecar, indent=2))


def load_anchors(path, expected_joints: int | None = None) -> AnchorSet:
    from .skeleton import Pose3D

    poses, frame, _ = read_poses(path, expected_joints)
    if frame is not Frame.PELVIS_RELATIVE:
        raise DataError(f"{path}: anchors must be pelvis-relative")
    sidecar = Path(f"{path}.provenance.json")
    source, provenance = AnchorSource.RANDOM_SAMPLE, {}
    if sidecar.exists():
        provenance = json.loads(sidecar.read_text())
        source = AnchorSource(provenance.pop("source"))
    return AnchorSet(
        poses=[Pose3D(p, Frame.PELVIS_RELATIVE) for p in poses],
        source=source,
        provenance=provenance,
    )


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer, np.floating)):
        return obj.item()
    return obj


def save_camera_json(path, cam: CameraIntrinsics) -> None:
    atomic_write_text(path, json.dumps(cam.to_dict(), indent=2))


def load_camera_json(path) -> CameraIntrinsics:
    try:
        return CameraIntrinsics.from_dict(json.loads(Path(path).read_text()))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def save_cameras_jsonl(path, cams: list[CameraIntrinsics]) -> None:
    atomic_write_text(path, "".join(json.dumps(c.to_dict()) + "\n" for c in cams))


def load_cameras(path) -> list[CameraIntrinsics]:
    """Single-camera JSON or per-frame JSONL, decided by content."""
    text = Path(path).read_text().strip()
    if not text:
        raise ParseError(f"{path}: empty camera file")
    try:
        if text.startswith("{") and "\n" not in text:
            return [CameraIntrinsics.from_dict(json.loads(text))]
        return [
            CameraIntrinsics.from_dict(json.loads(line))
            for line in text.splitlines()
            if line.strip()
        ]
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def write_keypoints_csv(path, pixels: np.ndarray, confidence: np.ndarray) -> None:
    """(N, J, 2) pixels and (N, J) confidences in the documented CSV schema."""
    lines = [",".join(CSV_COLUMNS)]
    for f in range(pixels.shape[0]):
        for j in range(pixels.shape[1]):
            lines.append(
                f"{f},{j},{pixels[f, j, 0]!r},{pixels[f, j, 1]!r},{confidence[f, j]!r}"
            )
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_csv_keypoints(path) -> tuple[list[Pose2D], list[str]]:
    """Parse the keypoint CSV; returns per-frame poses and warning records.

    Columns are frame, joint, u, v, confidence; a file without the
    confidence column gets confidence 1.0 and a warning. Every frame must
    carry the same complete set of joint indices.
    """
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ParseError(f"{path}: empty file")
    header = [c.strip() for c in lines[0].split(",")]
    warnings: list[str] = []
    if header == list(CSV_COLUMNS):
        has_conf = True
    elif header == list(CSV_COLUMNS[:4]):
        has_conf = False
        warnings.append("no confidence column; defaulting every joint to 1.0")
    else:
        raise ParseError(f"{path}: line 1: header {header} != {list(CSV_COLUMNS)}")
    rows: dict[int, dict[int, tuple[float, float, float]]] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != len(header):
            raise ParseError(f"{path}: line {lineno}: expected {len(header)} fields, got {len(parts)}")
        try:
            frame, joint = int(parts[0]), int(parts[1])
            u, v = float(parts[2]), float(parts[3])
            conf = float(parts[4]) if has_conf else 1.0
        except ValueError as exc:
            raise ParseError(f"{path}: line {lineno}: {exc}") from exc
        if not (np.isfinite(u) and np.isfinite(v) and 0.0 <= conf <= 1.0):
            raise ParseError(f"{path}: line {lineno}: non-finite pixel or confidence outside [0, 1]")
        frame_rows = rows.setdefault(frame, {})
        if joint in frame_rows:
            raise ParseError(f"{path}: line {lineno}: duplicate joint {joint} in frame {frame}")
        frame_rows[joint] = (u, v, conf)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    joint_sets = {frozenset(r) for r in rows.values()}
    if len(joint_sets) != 1:
        raise ParseError(f"{path}: frames disagree on their joint sets")
    joints = sorted(joint_sets.pop())
    if joints != list(range(len(joints))):
        raise ParseError(f"{path}: joint indices must be 0..J-1, got {joints}")
    poses = []
    for frame in sorted(rows):
        data = rows[frame]
        px = np.array([[data[j][0], data[j][1]] for j in joints])
        conf = np.array([data[j][2] for j in joints])
        poses.append(Pose2D(px, conf))
    return poses, warnings


def load_config_file(path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: config root must be a JSON object")
    return cfg
