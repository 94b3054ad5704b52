import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    max_examples=50,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def spec17():
    from poselift.skeleton import default_skeleton

    return default_skeleton()


@pytest.fixture()
def rng():
    return np.random.default_rng(0)


def random_pose(rng, n_joints: int = 17, scale: float = 0.5) -> np.ndarray:
    return rng.normal(0.0, scale, (n_joints, 3))


@pytest.fixture(scope="session")
def plausible_poses(spec17):
    """A small bank of kinematically valid pelvis-relative poses."""
    from poselift.synthetic import SyntheticConfig, generate_synthetic

    ds = generate_synthetic(SyntheticConfig(count=64, seed=123), spec17)
    return ds.poses_cam - ds.poses_cam[:, [spec17.pelvis_index], :]


@pytest.fixture(scope="session")
def tiny_trained(plausible_poses):
    """A small prior trained on one repeated pose, strong enough to pull."""
    from poselift.score_model import ModelConfig
    from poselift.training import TrainConfig, train

    target = plausible_poses[0]
    data = np.repeat(target[None], 256, axis=0)
    model, history = train(
        data,
        TrainConfig(
            epochs=2500,
            batch_size=256,
            learning_rate=2e-3,
            warmup_iters=100,
            seed=1,
            augment_flip=False,
        ),
        model_config=ModelConfig(hidden=64, depth=2, fourier_dim=32),
    )
    return model, target, history
