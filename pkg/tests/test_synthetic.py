import numpy as np
import pytest

from poselift.errors import ConfigError
from poselift.geometry import project_points
from poselift.skeleton import bone_lengths
from poselift.synthetic import (
    DEFAULT_BONE_LENGTHS,
    SyntheticConfig,
    generate_synthetic,
)


class TestConfig:
    def test_defaults_valid(self):
        SyntheticConfig()

    def test_rejects_negative_length(self):
        with pytest.raises(ConfigError):
            SyntheticConfig(bone_lengths={**DEFAULT_BONE_LENGTHS, "head": -0.1})

    def test_rejects_degenerate_range(self):
        with pytest.raises(ConfigError):
            SyntheticConfig(fov_deg_range=(50.0, 50.0))

    def test_dict_roundtrip(self):
        cfg = SyntheticConfig(count=7, noise_sigma_px=2.0, seed=5)
        again = SyntheticConfig.from_dict(cfg.to_dict())
        assert again == cfg


class TestGenerator:
    def test_zero_noise_projections_exact(self, spec17):
        ds = generate_synthetic(SyntheticConfig(count=20, seed=3), spec17)
        np.testing.assert_array_equal(ds.pixels, ds.clean_pixels)
        assert np.all(ds.confidence == 1.0)
        for i in range(len(ds)):
            px = project_points(ds.poses_cam[i], ds.cameras[i])
            np.testing.assert_allclose(px, ds.clean_pixels[i], atol=1e-9)

    def test_bone_lengths_exact(self, spec17):
        ds = generate_synthetic(SyntheticConfig(count=25, seed=4), spec17)
        for which in (ds.poses_cam, ds.poses_world):
            for pose in which:
                got = bone_lengths(pose, spec17)
                want = [DEFAULT_BONE_LENGTHS[spec17.joint_names[c]] for c, _ in spec17.bones()]
                np.testing.assert_allclose(got, want, atol=1e-9)

    def test_all_depths_positive(self, spec17):
        ds = generate_synthetic(SyntheticConfig(count=50, seed=5), spec17)
        assert ds.poses_cam[:, :, 2].min() > 0.5

    def test_noise_and_confidence_model(self, spec17):
        ds = generate_synthetic(SyntheticConfig(count=400, seed=6, noise_sigma_px=3.0), spec17)
        resid = ds.pixels - ds.clean_pixels
        assert abs(resid.std() - 3.0) < 0.15
        assert ds.confidence.min() >= 0.1 and ds.confidence.max() <= 1.0
        # larger injected noise must mean lower confidence
        r2 = (resid**2).sum(axis=2).ravel()
        conf = ds.confidence.ravel()
        noisy_mask = r2 > np.median(r2)
        assert conf[noisy_mask].mean() < conf[~noisy_mask].mean()

    def test_determinism(self, spec17):
        a = generate_synthetic(SyntheticConfig(count=10, seed=8), spec17)
        b = generate_synthetic(SyntheticConfig(count=10, seed=8), spec17)
        np.testing.assert_array_equal(a.poses_cam, b.poses_cam)
        np.testing.assert_array_equal(a.pixels, b.pixels)

    def test_left_right_symmetry_statistics(self, spec17):
        ds = generate_synthetic(SyntheticConfig(count=10_000, seed=9), spec17)
        norms = np.linalg.norm(ds.poses_world, axis=2)  # (N, J) distance from pelvis
        for left, right in spec17.flip_pairs:
            l_mean = norms[:, left].mean()
            r_mean = norms[:, right].mean()
            assert abs(l_mean - r_mean) / max(l_mean, r_mean) < 0.05
