"""Evaluation metrics: MPJPE, PA-MPJPE, minMPJPE, PCK, AUC, and reports.

All joint errors are computed in millimeters from poses in meters. The
standard protocol aligns pelvis roots before MPJPE because the pipeline's
absolute depth is ambiguous; pass ``root_relative=False`` to diagnose
absolute error instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, JointCountMismatch
from .geometry import procrustes_align
from .skeleton import SkeletonSpec, _as_joints

MM = 1000.0
DEFAULT_PCK_THRESHOLD_MM = 150.0
DEFAULT_AUC_GRID_MM = tuple(np.arange(0.0, 151.0, 5.0))


def _paired(pred, gt) -> tuple[np.ndarray, np.ndarray]:
    p = _as_joints(pred)
    g = _as_joints(gt)
    if p.shape != g.shape:
        raise JointCountMismatch(f"prediction {p.shape} vs ground truth {g.shape}")
    return p, g


def mpjpe(pred, gt) -> float:
    """Mean per-joint Euclidean distance in mm; frames must already match."""
    p, g = _paired(pred, gt)
    return float(np.linalg.norm(p - g, axis=1).mean() * MM)


def root_aligned(pose, pelvis_index: int = 0) -> np.ndarray:
    """Joints with the pelvis translated to the origin."""
    joints = _as_joints(pose)
    return joints - joints[pelvis_index]


def mpjpe_root_relative(pred, gt, pelvis_index: int = 0) -> float:
    """MPJPE after aligning both pelvis roots to the origin."""
    return mpjpe(root_aligned(pred, pelvis_index), root_aligned(gt, pelvis_index))


def pa_mpjpe(pred, gt, with_scale: bool = True) -> float:
    """MPJPE after similarity (or rigid, with_scale=False) alignment."""
    _, aligned = procrustes_align(pred, gt, with_scale=with_scale)
    return mpjpe(aligned, gt)


def min_mpjpe(preds, gt, root_relative: bool = True, pelvis_index: int = 0) -> float:
    """Minimum MPJPE over a list of hypothesis poses."""
    if len(preds) == 0:
        raise ConfigError("need at least one hypothesis")
    if root_relative:
        return min(mpjpe_root_relative(p, gt, pelvis_index) for p in preds)
    return min(mpjpe(p, gt) for p in preds)


def pck_auc(
    pred,
    gt,
    threshold_mm: float = DEFAULT_PCK_THRESHOLD_MM,
    auc_grid_mm=DEFAULT_AUC_GRID_MM,
) -> tuple[float, float]:
    """Fraction of joints within the threshold, and its mean over a grid.

    A joint counts as correct when its error does not exceed the threshold,
    so identical poses score 1.0 at every grid point including zero.
    """
    p, g = _paired(pred, gt)
    err = np.linalg.norm(p - g, axis=1) * MM
    pck = float((err <= threshold_mm).mean())
    grid = np.asarray(auc_grid_mm, dtype=float)
    auc = float((err[None, :] <= grid[:, None]).mean())
    return pck, auc


@dataclass
class EvalReport:
    """Per-sample metrics plus aggregates for one hypothesis count S."""

    n_hypotheses: int
    mpjpe_mm: np.ndarray
    pa_mpjpe_mm: np.ndarray
    pck: np.ndarray
    auc: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def mean_mpjpe_mm(self) -> float:
        return float(self.mpjpe_mm.mean())

    @property
    def mean_pa_mpjpe_mm(self) -> float:
        return float(self.pa_mpjpe_mm.mean())

    @property
    def mean_pck(self) -> float:
        return float(self.pck.mean())

    @property
    def mean_auc(self) -> float:
        return float(self.auc.mean())

    def records(self) -> list[dict]:
        recs = []
        for i in range(len(self.mpjpe_mm)):
            recs.append(
                {
                    "sample": i,
                    "mpjpe_mm": float(self.mpjpe_mm[i]),
                    "pa_mpjpe_mm": float(self.pa_mpjpe_mm[i]),
                    "pck": float(self.pck[i]),
                    "auc": float(self.auc[i]),
                }
            )
        return recs


def evaluate(
    predictions,
    ground_truth,
    skeleton: SkeletonSpec | None = None,
    root_relative: bool = True,
    pck_threshold_mm: float = DEFAULT_PCK_THRESHOLD_MM,
    auc_grid_mm=DEFAULT_AUC_GRID_MM,
    metadata: dict | None = None,
) -> EvalReport:
    """Score S hypothesis sets against ground truth frames.

    ``predictions`` is a sequence of S pose lists, each with one pose per
    ground-truth frame. Per frame, MPJPE and PA-MPJPE take the minimum over
    hypotheses; PCK/AUC are computed on the MPJPE-minimizing hypothesis.
    """
    preds = [list(h) for h in predictions]
    gts = list(ground_truth)
    if not preds or any(len(h) != len(gts) for h in preds):
        raise ConfigError("each hypothesis set must cover every ground-truth frame")
    pelvis = (skeleton.pelvis_index if skeleton else 0)
    n = len(gts)
    out = EvalReport(
        n_hypotheses=len(preds),
        mpjpe_mm=np.zeros(n),
        pa_mpjpe_mm=np.zeros(n),
        pck=np.zeros(n),
        auc=np.zeros(n),
        metadata=metadata or {},
    )
    for i, gt in enumerate(gts):
        gt_j = root_aligned(gt, pelvis) if root_relative else _as_joints(gt)
        errs = []
        for hyp in preds:
            pd = root_aligned(hyp[i], pelvis) if root_relative else _as_joints(hyp[i])
            errs.append((mpjpe(pd, gt_j), pd))
        best_err, best_pose = min(errs, key=lambda e: e[0])
        out.mpjpe_mm[i] = best_err
        out.pa_mpjpe_mm[i] = min(pa_mpjpe(pd, gt_j) for _, pd in errs)
        out.pck[i], out.auc[i] = pck_auc(best_pose, gt_j, pck_threshold_mm, auc_grid_mm)
    return out


def format_report_table(reports: list[EvalReport]) -> str:
    """Aligned-column summary, one row per hypothesis count."""
    header = f"{'S':>4}  {'MPJPE(mm)':>10}  {'PA-MPJPE(mm)':>13}  {'PCK':>6}  {'AUC':>6}"
    lines = [header, "-" * len(header)]
    for r in reports:
        lines.append(
            f"{r.n_hypotheses:>4}  {r.mean_mpjpe_mm:>10.2f}  {r.mean_pa_mpjpe_mm:>13.2f}"
            f"  {r.mean_pck:>6.3f}  {r.mean_auc:>6.3f}"
        )
    return "\n".join(lines)
