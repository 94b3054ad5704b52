import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from poselift.errors import JointCountMismatch
from poselift.geometry import rotation_z
from poselift.metrics import (
    EvalReport,
    evaluate,
    format_report_table,
    min_mpjpe,
    mpjpe,
    mpjpe_root_relative,
    pa_mpjpe,
    pck_auc,
)

from conftest import random_pose


class TestMpjpe:
    def test_identical_is_zero(self, rng):
        pose = random_pose(rng)
        assert mpjpe(pose, pose) == 0.0

    def test_uniform_offset_exact(self, rng):
        pose = random_pose(rng)
        assert abs(mpjpe(pose + np.array([0.05, 0.0, 0.0]), pose) - 50.0) < 1e-9

    def test_matches_bruteforce_loop(self, rng):
        a, b = random_pose(rng), random_pose(rng)
        by_hand = np.mean([np.sqrt(((a[j] - b[j]) ** 2).sum()) for j in range(len(a))]) * 1000
        assert abs(mpjpe(a, b) - by_hand) < 1e-9

    def test_joint_count_mismatch(self, rng):
        with pytest.raises(JointCountMismatch):
            mpjpe(random_pose(rng, 17), random_pose(rng, 14))

    def test_root_relative_removes_offset(self, rng):
        pose = random_pose(rng)
        assert mpjpe_root_relative(pose + 3.0, pose) < 1e-9


class TestPaMpjpe:
    def test_identical_is_zero(self, rng):
        pose = random_pose(rng)
        assert pa_mpjpe(pose, pose) < 1e-9

    @given(seed=st.integers(0, 2**31 - 1), angle=st.floats(-3, 3), scale=st.floats(0.3, 4.0))
    def test_similarity_transform_removed(self, seed, angle, scale):
        r = np.random.default_rng(seed)
        gt = random_pose(r)
        pred = scale * gt @ rotation_z(angle).T + r.normal(0, 2, 3)
        assert pa_mpjpe(pred, gt) < 1e-6

    def test_never_exceeds_mpjpe_on_root_aligned_pairs(self, rng):
        for _ in range(100):
            a, b = random_pose(rng), random_pose(rng)
            a -= a[0]
            b -= b[0]
            assert pa_mpjpe(a, b) <= mpjpe(a, b) + 1e-9


class TestMinMpjpe:
    def test_single_hypothesis_equals_mpjpe(self, rng):
        a, b = random_pose(rng), random_pose(rng)
        assert min_mpjpe([a], b, root_relative=False) == mpjpe(a, b)

    def test_ground_truth_in_set_gives_zero(self, rng):
        gt = random_pose(rng)
        preds = [random_pose(rng), gt.copy(), random_pose(rng)]
        assert min_mpjpe(preds, gt, root_relative=False) == 0.0

    def test_monotone_in_nested_sets(self, rng):
        gt = random_pose(rng)
        preds = [random_pose(rng) for _ in range(8)]
        values = [min_mpjpe(preds[: k + 1], gt, root_relative=False) for k in range(8)]
        assert all(values[i + 1] <= values[i] for i in range(7))

    def test_min_not_above_each_hypothesis(self, rng):
        gt = random_pose(rng)
        preds = [random_pose(rng) for _ in range(5)]
        best = min_mpjpe(preds, gt, root_relative=False)
        for p in preds:
            assert best <= mpjpe(p, gt)


class TestPckAuc:
    def test_identical_pose_perfect(self, rng):
        pose = random_pose(rng)
        pck, auc = pck_auc(pose, pose)
        assert pck == 1.0 and auc == 1.0

    def test_all_joints_just_over_threshold(self):
        gt = np.zeros((5, 3))
        pred = gt + np.array([0.151, 0.0, 0.0])
        pck, _ = pck_auc(pred, gt)
        assert pck == 0.0

    def test_hand_computed_three_joints(self):
        gt = np.zeros((3, 3))
        pred = gt.copy()
        pred[0, 0] = 0.010
        pred[1, 0] = 0.100
        pred[2, 0] = 0.200
        pck, auc = pck_auc(pred, gt)
        assert abs(pck - 2.0 / 3.0) < 1e-12
        # per joint: thresholds 0..150 step 5 -> 31 grid points
        # 10mm in at >=10 -> 29/31, 100mm in at >=100 -> 11/31, 200mm never
        expected_auc = (29 + 11 + 0) / (3 * 31)
        assert abs(auc - expected_auc) < 1e-12


class TestEvaluate:
    def test_gt_vs_gt_all_perfect(self, rng):
        gts = [random_pose(rng) for _ in range(4)]
        report = evaluate([gts], gts)
        assert report.mean_mpjpe_mm == 0.0
        assert report.mean_pa_mpjpe_mm < 1e-9
        assert report.mean_pck == 1.0 and report.mean_auc == 1.0

    def test_min_over_hypotheses(self, rng):
        gts = [random_pose(rng) for _ in range(3)]
        bad = [g + rng.normal(0, 0.4, g.shape) for g in gts]
        report = evaluate([bad, [g.copy() for g in gts]], gts)
        assert report.mean_mpjpe_mm < 1e-9
        assert report.n_hypotheses == 2

    def test_aggregation_permutation_invariant(self, rng):
        gts = [random_pose(rng) for _ in range(6)]
        preds = [g + rng.normal(0, 0.05, g.shape) for g in gts]
        fwd = evaluate([preds], gts)
        perm = [3, 1, 5, 0, 4, 2]
        rev = evaluate([[preds[i] for i in perm]], [gts[i] for i in perm])
        assert abs(fwd.mean_mpjpe_mm - rev.mean_mpjpe_mm) < 1e-12
        assert abs(fwd.mean_auc - rev.mean_auc) < 1e-12

    def test_table_contains_columns(self, rng):
        gts = [random_pose(rng) for _ in range(2)]
        table = format_report_table([evaluate([gts], gts)])
        for column in ("MPJPE", "PA-MPJPE", "PCK", "AUC"):
            assert column in table
