"""Zero-shot 2D-to-3D pose lifting: reprojection optimization with a score prior."""

from .anchors import AnchorSet, AnchorSource, kmeans_anchors, random_generate_anchors, random_sample_anchors
from .geometry import (
    CameraIntrinsics,
    SimilarityTransform,
    pixels_to_rays,
    procrustes_align,
    project,
    project_onto_rays,
    project_points,
    rotation_z,
)
from .metrics import EvalReport, evaluate, min_mpjpe, mpjpe, mpjpe_root_relative, pa_mpjpe, pck_auc
from .optimizer import (
    Hypothesis,
    HypothesisResult,
    OptimizationTrace,
    OptimizerConfig,
    initial_pose_optimize,
    make_hypotheses,
    optimize_multi_hypothesis,
    optimize_pose,
    solve_translation,
)
from .sampling import denoise, sample
from .score_model import ModelConfig, ScoreModel, dsm_loss
from .sde import PerturbationKernel, SdeConfig, perturb
from .skeleton import (
    Frame,
    Pose2D,
    Pose3D,
    SkeletonSpec,
    default_skeleton,
    flip_lr,
    from_pelvis_relative,
    rotate_about_z,
    select_lsp14,
    to_pelvis_relative,
)
from .synthetic import SyntheticConfig, SyntheticDataset, generate_synthetic
from .training import TrainConfig, train

__version__ = "0.1.0"
