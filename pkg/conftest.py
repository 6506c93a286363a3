import numpy as np
import pytest

from app.robot_model import default_topology
from app.schemas import CameraIntrinsics, SimNoise, SimulationConfig, TrajectorySpec
from app.sim.pipeline import simulate


def small_intrinsics() -> CameraIntrinsics:
    # same field of view as the 1280x720, f=600 default
    return CameraIntrinsics(fx=225.0, fy=225.0, cx=240.0, cy=135.0, width=480, height=270)


def small_simulation(frames: int = 3, noise: SimNoise = None, gait: str = "roll", **extra) -> SimulationConfig:
    return SimulationConfig(
        intrinsics=small_intrinsics(),
        trajectory=TrajectorySpec(frames=frames, gait=gait),
        noise=noise if noise is not None else SimNoise.noise_free(),
        **extra,
    )


@pytest.fixture
def topology():
    return default_topology()


@pytest.fixture
def intrinsics():
    return small_intrinsics()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def noise_free_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("datasets") / "noise_free"
    return simulate(small_simulation(frames=4), root, workers=2, progress=False)
