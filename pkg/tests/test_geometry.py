import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from poselift.errors import DegeneratePose, NonPositiveDepth
from poselift.geometry import (
    CameraIntrinsics,
    pixels_to_rays,
    procrustes_align,
    project,
    project_onto_rays,
    project_points,
    rotation_z,
)
from poselift.skeleton import Frame, Pose2D, Pose3D

from conftest import random_pose

CAM = CameraIntrinsics(fx=1000.0, fy=1100.0, cx=500.0, cy=400.0)


def random_front_pose(rng, n=17):
    pose = random_pose(rng, n)
    pose[:, 2] += 4.0
    return pose


class TestProject:
    def test_principal_axis_point(self):
        cam = CameraIntrinsics(1.0, 1.0, 0.0, 0.0)
        p2d = project(Pose3D([[0.0, 0.0, 1.0]]), cam)
        np.testing.assert_array_equal(p2d.pixels, [[0.0, 0.0]])
        np.testing.assert_array_equal(p2d.confidence, [1.0])

    def test_pinhole_formula(self):
        cam = CameraIntrinsics(100.0, 100.0, 50.0, 50.0)
        p2d = project(Pose3D([[1.0, 2.0, 2.0]]), cam)
        np.testing.assert_allclose(p2d.pixels, [[100.0, 150.0]])

    def test_nonpositive_depth_names_joint(self):
        with pytest.raises(NonPositiveDepth, match="joint 1"):
            project_points(np.array([[0.0, 0.0, 1.0], [0.0, 0.0, -0.5]]), CAM)

    def test_roundtrip_through_rays(self, rng):
        pose = random_front_pose(rng)
        p2d = project(Pose3D(pose), CAM)
        rays = pixels_to_rays(p2d, CAM)
        back, front = project_onto_rays(pose, np.zeros(3), rays)
        assert front.all()
        np.testing.assert_allclose(back, pose, atol=1e-9)


class TestPixelsToRays:
    def test_principal_point_is_optical_axis(self):
        rays = pixels_to_rays(Pose2D([[CAM.cx, CAM.cy]]), CAM)
        np.testing.assert_allclose(rays, [[0.0, 0.0, 1.0]], atol=1e-12)

    def test_unit_offset(self):
        rays = pixels_to_rays(Pose2D([[CAM.cx + CAM.fx, CAM.cy]]), CAM)
        np.testing.assert_allclose(rays, [[1.0, 0.0, 1.0] / np.sqrt(2.0)], atol=1e-12)

    @given(
        u=st.floats(-5000, 5000),
        v=st.floats(-5000, 5000),
        lam=st.floats(0.01, 100.0),
    )
    def test_points_along_ray_reproject_to_pixel(self, u, v, lam):
        rays = pixels_to_rays(Pose2D([[u, v]]), CAM)
        assert rays[0, 2] > 0
        np.testing.assert_allclose(np.linalg.norm(rays[0]), 1.0, atol=1e-9)
        px = project_points(lam * rays, CAM)
        np.testing.assert_allclose(px, [[u, v]], atol=1e-9)


class TestProjectOntoRays:
    def test_point_on_ray_unchanged(self):
        ray = np.array([[3.0, 1.0, 2.0]]) / np.linalg.norm([3.0, 1.0, 2.0])
        point = 2.5 * ray
        out, front = project_onto_rays(point, np.zeros(3), ray)
        assert front.all()
        np.testing.assert_allclose(out, point, atol=1e-12)

    def test_orthogonal_projection_onto_z_axis(self):
        out, front = project_onto_rays(
            np.array([[1.0, 0.0, 1.0]]), np.zeros(3), np.array([[0.0, 0.0, 1.0]])
        )
        np.testing.assert_allclose(out, [[0.0, 0.0, 1.0]], atol=1e-12)
        assert front.all()

    def test_behind_camera_flagged_not_raised(self):
        out, front = project_onto_rays(
            np.array([[0.0, 0.0, -2.0]]), np.zeros(3), np.array([[0.0, 0.0, 1.0]])
        )
        assert not front.any()
        assert np.all(np.isfinite(out))

    def test_reprojection_error_tiny_after_snap(self, rng):
        pose = random_front_pose(rng)
        trans = rng.normal(0.0, 1.0, 3)
        target_px = project_points(pose + trans, CAM)
        rays = pixels_to_rays(Pose2D(target_px), CAM)
        snapped, front = project_onto_rays(rng.normal(0, 1, pose.shape), trans, rays)
        px = project_points((snapped + trans)[front], CAM)
        np.testing.assert_allclose(px, target_px[front], atol=1e-7)

    def test_idempotent(self, rng):
        pose = random_front_pose(rng)
        trans = np.array([0.3, -0.2, 1.0])
        p2d = project(Pose3D(pose + trans), CAM)
        rays = pixels_to_rays(p2d, CAM)
        once, _ = project_onto_rays(pose, trans, rays)
        twice, _ = project_onto_rays(once, trans, rays)
        np.testing.assert_allclose(twice, once, atol=1e-12)


class TestRotationZ:
    def test_identity_at_zero(self):
        np.testing.assert_array_equal(rotation_z(0.0), np.eye(3))

    def test_half_turn(self):
        np.testing.assert_allclose(rotation_z(np.pi) @ [1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], atol=1e-12)

    @given(a=st.floats(-10, 10), b=st.floats(-10, 10))
    def test_group_property(self, a, b):
        np.testing.assert_allclose(rotation_z(a) @ rotation_z(b), rotation_z(a + b), atol=1e-12)

    def test_orthonormal_1000_angles(self, rng):
        for angle in rng.uniform(-2 * np.pi, 2 * np.pi, 1000):
            r = rotation_z(angle)
            np.testing.assert_allclose(r.T @ r, np.eye(3), atol=1e-9)
            assert abs(np.linalg.det(r) - 1.0) < 1e-9


class TestProcrustes:
    def test_identity_alignment(self, rng):
        pose = random_pose(rng)
        tf, aligned = procrustes_align(pose, pose)
        np.testing.assert_allclose(aligned, pose, atol=1e-9)
        np.testing.assert_allclose(tf.rotation, np.eye(3), atol=1e-9)
        assert abs(tf.scale - 1.0) < 1e-9

    def test_recovers_similarity_transform(self, rng):
        src = random_pose(rng)
        tgt = 2.0 * src @ rotation_z(np.deg2rad(30.0)).T + np.array([1.0, 2.0, 3.0])
        tf, aligned = procrustes_align(src, tgt)
        assert abs(tf.scale - 2.0) < 1e-9
        np.testing.assert_allclose(aligned, tgt, atol=1e-9)

    def test_colinear_source(self):
        src = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
        rot = rotation_z(0.7)
        tgt = src @ rot.T + np.array([0.5, -0.25, 1.0])
        _, aligned = procrustes_align(src, tgt)
        np.testing.assert_allclose(aligned, tgt, atol=1e-9)

    def test_degenerate_source_raises(self):
        with pytest.raises(DegeneratePose):
            procrustes_align(np.zeros((5, 3)), np.random.default_rng(0).normal(size=(5, 3)))

    @given(seed=st.integers(0, 2**31 - 1), angle=st.floats(-3.0, 3.0), scale=st.floats(0.2, 5.0))
    def test_residual_invariant_under_source_similarity(self, seed, angle, scale):
        r = np.random.default_rng(seed)
        src = random_pose(r)
        tgt = random_pose(r)
        _, aligned_a = procrustes_align(src, tgt)
        moved = scale * src @ rotation_z(angle).T + r.normal(0, 1, 3)
        _, aligned_b = procrustes_align(moved, tgt)
        res_a = np.linalg.norm(aligned_a - tgt)
        res_b = np.linalg.norm(aligned_b - tgt)
        assert abs(res_a - res_b) < 1e-9 * max(1.0, res_a)

    def test_rigid_mode_keeps_unit_scale(self, rng):
        src = random_pose(rng)
        tgt = 3.0 * src
        tf, _ = procrustes_align(src, tgt, with_scale=False)
        assert tf.scale == 1.0
