"""Iterative pose optimization: align, project onto rays, denoise, repeat.

One run takes an initial pelvis-relative pose, rotates it about z and solves
a translation to match the 2D target, then loops: re-solve the translation
(after a warmup window where it stays frozen), snap joints onto the camera
rays, and pull the pose back onto the learned prior with a short truncated
denoise. The per-iteration state is recorded in an :class:`OptimizationTrace`.
"""

from __future__ import annotations

from dataclasses import dataclass
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import (
    AllCandidatesBehindCamera,
    ConfigError,
    InsufficientJoints,
    NonFinitePose,
    OutOfRangeTime,
    SingularSystem,
)
from .geometry import CameraIntrinsics, pixels_to_rays
from .sampling import TRUNCATION_MAX_T, _integrate_reverse
from .score_model import ScoreModel
from .skeleton import Frame, Pose2D, Pose3D, SkeletonSpec, _as_joints, default_skeleton

T_SAMPLING_MODES = ("uniform", "linear_decay")
DEFAULT_T_LOWER = (-10.0, -10.0, 1.0)
DEFAULT_T_UPPER = (10.0, 10.0, 15.0)

# pixel penalty charged per behind-camera joint when scoring rotation candidates
_BEHIND_PENALTY = 1e8


@dataclass(frozen=True)
class OptimizerConfig:
    total_iters: int = 1000
    warmup_iters: int = 200
    t_max: float = 0.1
    t_sampling: str = "uniform"
    translation_min: tuple[float, float, float] = DEFAULT_T_LOWER
    translation_max: tuple[float, float, float] = DEFAULT_T_UPPER
    rotation_grid: int = 72
    denoise_steps: int = 2
    seed: int = 0

    def __post_init__(self):
        if not (0 <= self.warmup_iters < self.total_iters):
            raise ConfigError(
                f"need 0 <= warmup_iters < total_iters, got {self.warmup_iters}, {self.total_iters}"
            )
        if not (0.0 < self.t_max <= 1.0):
            raise ConfigError(f"t_max must lie in (0, 1], got {self.t_max}")
        if self.t_sampling not in T_SAMPLING_MODES:
            raise ConfigError(f"t_sampling must be one of {T_SAMPLING_MODES}")
        lo, hi = np.asarray(self.translation_min), np.asarray(self.translation_max)
        if lo.shape != (3,) or hi.shape != (3,) or not np.all(lo < hi):
            raise ConfigError("translation bounds must be 3-vectors with min < max")
        if self.rotation_grid < 1 or self.denoise_steps < 0:
            raise ConfigError(f"bad rotation_grid/denoise_steps: {self}")

    def to_dict(self) -> dict:
        return {
            "total_iters": self.total_iters,
            "warmup_iters": self.warmup_iters,
            "t_max": self.t_max,
            "t_sampling": self.t_sampling,
            "translation_min": list(self.translation_min),
            "translation_max": list(self.translation_max),
            "rotation_grid": self.rotation_grid,
            "denoise_steps": self.denoise_steps,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizerConfig":
        base = cls()
        try:
            return cls(
                int(d.get("total_iters", base.total_iters)),
                int(d.get("warmup_iters", base.warmup_iters)),
                float(d.get("t_max", base.t_max)),
                str(d.get("t_sampling", base.t_sampling)),
                tuple(d.get("translation_min", base.translation_min)),
                tuple(d.get("translation_max", base.translation_max)),
                int(d.get("rotation_grid", base.rotation_grid)),
                int(d.get("denoise_steps", base.denoise_steps)),
                int(d.get("seed", base.seed)),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad optimizer config: {exc}") from exc


@dataclass(frozen=True)
class Hypothesis:
    """One starting pose for the optimizer; ``id`` offsets the RNG seed."""

    initial_pose: Pose3D
    id: int = 0


@dataclass
class OptimizationTrace:
    """Per-iteration diagnostics; every array has length total_iters."""

    projection_residual_px: np.ndarray  # max front-facing pixel error right after ray snap
    reproj_error_px: np.ndarray  # mean front-facing pixel error at end of iteration
    translations: np.ndarray  # (n, 3)
    behind_camera: np.ndarray  # count of behind-camera joints at the ray snap
    pelvis_residual: np.ndarray  # max |pelvis row| after denoising
    initial_pose: Pose3D | None = None
    initial_translation: np.ndarray | None = None
    initial_angle: float = 0.0
    final_pose: Pose3D | None = None
    final_translation: np.ndarray | None = None


def _normal_system(points, rays, weights):
    """3x3 normal equations of the weighted ray-alignment residual.

    Each joint contributes the constraint (I - r r^T)(P_j + T) = 0 weighted
    by its confidence; M depends only on rays and weights.
    """
    w2 = weights**2
    m = np.einsum("j->", w2) * np.eye(3) - rays.T @ (w2[:, None] * rays)
    proj = points - rays * np.einsum("jk,jk->j", rays, points)[:, None]
    y = -(w2[:, None] * proj).sum(axis=0)
    return m, y


def solve_translation(
    pose,
    p2d: Pose2D,
    cam: CameraIntrinsics,
    bounds: tuple = (DEFAULT_T_LOWER, DEFAULT_T_UPPER),
    weights: np.ndarray | None = None,
) -> np.ndarray:
    """Closed-form translation minimizing the weighted algebraic residual.

    For each joint the constraint is that P_j + T lies on the ray through its
    pixel: the cross product of the unit ray with (P_j + T) vanishes. With
    per-joint confidence weights this is linear least squares in T, solved by
    the 3x3 normal equations and clamped componentwise into ``bounds``.
    ``weights`` overrides the Pose2D confidences (used to drop joints that
    sit behind the camera mid-run).
    """
    points = _as_joints(pose)
    w = np.asarray(p2d.confidence if weights is None else weights, dtype=np.float64)
    if (w > 0).sum() < 2:
        raise InsufficientJoints(f"translation solve needs >= 2 weighted joints, got {(w > 0).sum()}")
    rays = pixels_to_rays(p2d, cam)
    m, y = _normal_system(points, rays, w)
    eig = np.linalg.eigvalsh(m)
    if eig[0] <= 1e-9 * max(eig[-1], 1e-30):
        raise SingularSystem("translation normal matrix is rank-deficient (parallel rays)")
    t = np.linalg.solve(m, y)
    return np.clip(t, np.asarray(bounds[0], dtype=float), np.asarray(bounds[1], dtype=float))


def _score_candidates(rotated, translations, pixels, conf, cam):
    """Weighted squared pixel error per candidate, inf when mostly behind."""
    pts = rotated + translations[:, None, :]
    z = pts[:, :, 2]
    front = z > 1e-9
    n_joints = rotated.shape[1]
    scores = np.full(len(rotated), np.inf)
    ok = front.sum(axis=1) * 2 >= n_joints
    if not np.any(ok):
        return scores, ok
    with np.errstate(divide="ignore", invalid="ignore"):
        u = cam.fx * pts[:, :, 0] / z + cam.cx
        v = cam.fy * pts[:, :, 1] / z + cam.cy
    err = (u - pixels[:, 0]) ** 2 + (v - pixels[:, 1]) ** 2
    err = np.where(front, err, 0.0)
    weighted = (conf * err).sum(axis=1) + _BEHIND_PENALTY * (~front).sum(axis=1)
    scores[ok] = weighted[ok]
    return scores, ok


def initial_pose_optimize(
    anchor,
    p2d: Pose2D,
    cam: CameraIntrinsics,
    cfg: OptimizerConfig = OptimizerConfig(),
) -> tuple[Pose3D, np.ndarray, float]:
    """Grid search over z-rotations of the anchor, translation solved per angle.

    Scores each candidate by confidence-weighted pixel reprojection error,
    then refines the best angle by golden-section search within one grid cell.
    Returns the rotated pose, its translation, and the angle in [0, 2 pi).
    """
    base = _as_joints(anchor)
    pixels = np.asarray(p2d.pixels)
    conf = np.asarray(p2d.confidence)
    bounds = (cfg.translation_min, cfg.translation_max)
    rays = pixels_to_rays(p2d, cam)
    if (conf > 0).sum() < 2:
        raise InsufficientJoints("initial alignment needs >= 2 confident joints")

    # the normal matrix is rotation-independent: factor it once for the grid
    m, _ = _normal_system(base, rays, conf)
    eig = np.linalg.eigvalsh(m)
    if eig[0] <= 1e-9 * max(eig[-1], 1e-30):
        raise SingularSystem("translation normal matrix is rank-deficient (parallel rays)")

    def solve_for(rotated):
        _, y = _normal_system(rotated, rays, conf)
        return np.clip(np.linalg.solve(m, y), bounds[0], bounds[1])

    def objective(angle):
        c, s = np.cos(angle), np.sin(angle)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        rotated = base @ rot.T
        t = solve_for(rotated)
        score, _ = _score_candidates(rotated[None], t[None], pixels, conf, cam)
        return float(score[0]), rotated, t

    grid = np.arange(cfg.rotation_grid) * (2.0 * np.pi / cfg.rotation_grid)
    cos, sin = np.cos(grid), np.sin(grid)
    rots = np.zeros((cfg.rotation_grid, 3, 3))
    rots[:, 0, 0] = cos
    rots[:, 0, 1] = -sin
    rots[:, 1, 0] = sin
    rots[:, 1, 1] = cos
    rots[:, 2, 2] = 1.0
    rotated = np.einsum("jk,alk->ajl", base, rots)
    translations = np.stack([solve_for(r) for r in rotated])
    scores, ok = _score_candidates(rotated, translations, pixels, conf, cam)
    if not np.any(ok):
        raise AllCandidatesBehindCamera(
            "every rotation candidate left most joints behind the camera"
        )
    best = int(np.argmin(scores))
    best_angle, best_score = grid[best], scores[best]
    best_rotated, best_t = rotated[best], translations[best]

    # golden-section refinement inside +- one grid cell
    gr = (np.sqrt(5.0) - 1.0) / 2.0
    lo = best_angle - 2.0 * np.pi / cfg.rotation_grid
    hi = best_angle + 2.0 * np.pi / cfg.rotation_grid
    a, b = lo + (1.0 - gr) * (hi - lo), lo + gr * (hi - lo)
    fa, fb = objective(a), objective(b)
    for _ in range(40):
        if fa[0] < fb[0]:
            hi, b, fb = b, a, fa
            a = lo + (1.0 - gr) * (hi - lo)
            fa = objective(a)
        else:
            lo, a, fa = a, b, fb
            b = lo + gr * (hi - lo)
            fb = objective(b)
    refined = fa if fa[0] < fb[0] else fb
    refined_angle = a if fa[0] < fb[0] else b
    if refined[0] < best_score:
        best_angle, (best_score, best_rotated, best_t) = refined_angle, refined
    return (
        Pose3D(best_rotated, Frame.PELVIS_RELATIVE),
        best_t,
        float(np.mod(best_angle, 2.0 * np.pi)),
    )


def _draw_time(cfg: OptimizerConfig, i: int, rng) -> float:
    if cfg.t_sampling == "uniform":
        t = cfg.t_max * (1.0 - rng.random())
    else:
        t = min(cfg.t_max, cfg.t_max * (1.0 - i / cfg.total_iters) + 1e-5)
    if t > TRUNCATION_MAX_T + 1e-12:
        raise OutOfRangeTime(
            f"denoising time {t:.4g} exceeds the truncated-inference cap {TRUNCATION_MAX_T}"
        )
    return t


def optimize_pose(
    anchor: Hypothesis | Pose3D,
    p2d: Pose2D,
    cam: CameraIntrinsics,
    model: ScoreModel,
    cfg: OptimizerConfig = OptimizerConfig(),
    skeleton: SkeletonSpec | None = None,
) -> tuple[Pose3D, OptimizationTrace]:
    """Run the full single-hypothesis loop; returns the camera-frame pose.

    Structure: initial rotation/translation alignment, then total_iters
    rounds of translation solve (frozen at the initial value during warmup),
    ray snap, and truncated denoise at a freshly drawn time. On error the
    partially filled trace is attached to the exception as ``exc.trace``.
    """
    hyp = anchor if isinstance(anchor, Hypothesis) else Hypothesis(anchor)
    spec = skeleton or default_skeleton()
    pelvis = spec.pelvis_index
    n = cfg.total_iters
    rng = np.random.default_rng(cfg.seed + hyp.id)
    trace = OptimizationTrace(
        projection_residual_px=np.full(n, np.nan),
        reproj_error_px=np.full(n, np.nan),
        translations=np.full((n, 3), np.nan),
        behind_camera=np.zeros(n, dtype=int),
        pelvis_residual=np.full(n, np.nan),
    )
    bounds = (cfg.translation_min, cfg.translation_max)
    pixels = np.asarray(p2d.pixels)
    conf = np.asarray(p2d.confidence)
    try:
        p0_pose, t_init, angle = initial_pose_optimize(hyp.initial_pose, p2d, cam, cfg)
        trace.initial_pose = p0_pose
        trace.initial_translation = t_init.copy()
        trace.initial_angle = angle
        rays = pixels_to_rays(p2d, cam)
        points = _as_joints(p0_pose).copy()
        t_cur = t_init
        for i in range(n):
            if i < cfg.warmup_iters:
                t_cur = t_init
            else:
                front_w = conf * ((points + t_cur)[:, 2] > 0)
                t_cur = solve_translation(points, p2d, cam, bounds, weights=front_w)
            depths = np.einsum("jk,jk->j", points + t_cur, rays)
            points = depths[:, None] * rays - t_cur
            front = depths > 0
            trace.translations[i] = t_cur
            trace.behind_camera[i] = int((~front).sum())
            cam_pts = depths[:, None] * rays
            if front.any():
                u = cam.fx * cam_pts[front, 0] / cam_pts[front, 2] + cam.cx
                v = cam.fy * cam_pts[front, 1] / cam_pts[front, 2] + cam.cy
                d = np.hypot(u - pixels[front, 0], v - pixels[front, 1])
                trace.projection_residual_px[i] = d.max()
            if cfg.denoise_steps > 0:
                root = points[pelvis].copy()
                rel = (points - root).reshape(1, -1)
                t_i = _draw_time(cfg, i, rng)
                rel = _integrate_reverse(model, rel, t_i, cfg.denoise_steps, False, None)
                rel = rel.reshape(points.shape)
                rel[pelvis] = 0.0
                trace.pelvis_residual[i] = float(np.abs(rel[pelvis]).max())
                points = rel + root
            else:
                trace.pelvis_residual[i] = 0.0
            cur = points + t_cur
            vis = cur[:, 2] > 0
            if vis.any():
                u = cam.fx * cur[vis, 0] / cur[vis, 2] + cam.cx
                v = cam.fy * cur[vis, 1] / cur[vis, 2] + cam.cy
                trace.reproj_error_px[i] = float(
                    np.hypot(u - pixels[vis, 0], v - pixels[vis, 1]).mean()
                )
        if not np.all(np.isfinite(points)):
            raise NonFinitePose("optimization diverged to non-finite joints")
    except Exception as exc:
        exc.trace = trace  # partial diagnostics for the caller
        raise
    final = Pose3D(points + t_cur, Frame.CAMERA_ABSOLUTE)
    trace.final_pose = final
    trace.final_translation = t_cur.copy()
    return final, trace


@dataclass
class HypothesisResult:
    """Outcome for one anchor: a pose and trace, or the error that stopped it."""

    anchor_id: int
    pose: Pose3D | None = None
    trace: OptimizationTrace | None = None
    error: Exception | None = None


def optimize_multi_hypothesis(
    anchors: list[Hypothesis],
    p2d: Pose2D,
    cam: CameraIntrinsics,
    model: ScoreModel,
    cfg: OptimizerConfig = OptimizerConfig(),
    skeleton: SkeletonSpec | None = None,
    threads: int = 1,
) -> list[HypothesisResult]:
    """Run every anchor independently with per-anchor seed = seed + anchor id.

    Anchors never interact, so results are invariant to ordering and to the
    thread count; per-anchor failures are collected instead of aborting the
    remaining anchors. No winner is selected here: picking the best
    hypothesis needs ground truth, which inference does not have.
    """
    if not anchors:
        raise ConfigError("need at least one anchor")

    def run(hyp: Hypothesis) -> HypothesisResult:
        try:
            pose, trace = optimize_pose(hyp, p2d, cam, model, cfg, skeleton)
            return HypothesisResult(hyp.id, pose, trace)
        except Exception as exc:  # noqa: BLE001 - reported per anchor
            return HypothesisResult(hyp.id, error=exc, trace=getattr(exc, "trace", None))

    if threads <= 1:
        return [run(h) for h in anchors]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run, anchors))


def make_hypotheses(poses, start_id: int = 0) -> list[Hypothesis]:
    """Wrap pelvis-relative poses as numbered hypotheses."""
    out = []
    for k, pose in enumerate(poses):
        p = pose if isinstance(pose, Pose3D) else Pose3D(np.asarray(pose), Frame.PELVIS_RELATIVE)
        out.append(Hypothesis(p, start_id + k))
    return out
