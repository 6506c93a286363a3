import json

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from app.dataset import (
    FRAME_DTYPE,
    Dataset,
    TrajectoryWriter,
    cable_series,
    encode_frame,
    read_trajectory,
    trajectory_poses,
    write_dataset,
    write_trajectory,
)
from app.exceptions import DatasetError
from app.geometry import RigidPose
from app.perception import ObservedFrame
from app.schemas import FrameDiagnostics, FrameRecord, Roi, SimNoise
from app.sim import simulate
from app.sim.trajectory import initial_configuration
from app.tracker.base import pose_records

from conftest import small_simulation


def random_frame(rng, intrinsics, index, cables) -> ObservedFrame:
    shape = (intrinsics.height, intrinsics.width)
    return ObservedFrame(
        depth=rng.uniform(0.0, 2.0, size=shape).astype(np.float32),
        hsv=rng.integers(0, 256, size=shape + (3,)).astype(np.uint8),
        cable_measurements=cables,
        timestamp=index / 10.0,
        index=index,
    )


@pytest.fixture
def tiny_dataset(tmp_path, rng, topology, intrinsics):
    poses = initial_configuration(topology)
    cables = {cable: 0.2 + 0.01 * k for k, cable in enumerate(topology.cables)}
    partial = dict(list(cables.items())[:5])
    frames = [random_frame(rng, intrinsics, 0, cables), random_frame(rng, intrinsics, 1, partial)]
    truth = [(poses, [True, True, True]), (poses, [True, False, True])]
    rois = [Roi(u_min=10 * e, v_min=0, u_max=10 * e + 9, v_max=9) for e in range(6)]
    dataset = write_dataset(tmp_path / "tiny", frames, truth, topology, intrinsics, rois, RigidPose.identity())
    return dataset, frames, poses


def test_dataset_round_trip(tiny_dataset, topology):
    dataset, frames, poses = tiny_dataset
    assert len(dataset) == 2
    assert dataset.topology.cables == topology.cables
    assert [r.u_min for r in dataset.rois()] == [0, 10, 20, 30, 40, 50]

    for original in frames:
        loaded = dataset.frame(original.index)
        np.testing.assert_array_equal(loaded.depth, original.depth)
        np.testing.assert_array_equal(loaded.hsv, original.hsv)
        assert loaded.cable_measurements == pytest.approx(original.cable_measurements)
        assert loaded.timestamp == pytest.approx(original.timestamp)

    truth = dataset.ground_truth(0)
    for pose, expected in zip(truth, poses):
        np.testing.assert_allclose(pose.translation, expected.translation, atol=1e-12)
        np.testing.assert_allclose(pose.rotation.as_matrix(), expected.rotation.as_matrix(), atol=1e-12)
    assert dataset.ground_truth(1)[1] is None


def test_frame_file_is_the_raw_grid(tiny_dataset, intrinsics):
    dataset, frames, _ = tiny_dataset
    path = dataset.root / "frames" / "000000.depthhsv"
    assert path.stat().st_size == intrinsics.width * intrinsics.height * 7
    assert FRAME_DTYPE.itemsize == 7
    assert path.read_bytes() == encode_frame(frames[0]).tobytes()


def test_corrupt_frame_names_the_frame(tiny_dataset):
    dataset, _, _ = tiny_dataset
    path = dataset.root / "frames" / "000001.depthhsv"
    path.write_bytes(path.read_bytes()[:-3])
    dataset.frame(0)
    with pytest.raises(DatasetError) as excinfo:
        dataset.frame(1)
    assert excinfo.value.frame == 1


def test_unknown_major_version_is_rejected(tiny_dataset):
    dataset, _, _ = tiny_dataset
    meta_path = dataset.root / "meta.json"
    meta = json.loads(meta_path.read_text())
    meta["format_version"] = "1.7"
    meta_path.write_text(json.dumps(meta))
    assert Dataset(dataset.root).meta.format_version == "1.7"

    meta["format_version"] = "2.0"
    meta_path.write_text(json.dumps(meta))
    with pytest.raises(DatasetError):
        Dataset(dataset.root)


def test_missing_frames_and_ground_truth(tiny_dataset):
    dataset, _, _ = tiny_dataset
    (dataset.root / "gt" / "000001.poses").unlink()
    assert dataset.ground_truth(1) is None
    assert dataset.ground_truth(0) is not None

    (dataset.root / "frames" / "000000.depthhsv").unlink()
    with pytest.raises(DatasetError) as excinfo:
        Dataset(dataset.root)
    assert excinfo.value.frame == 0
    with pytest.raises(DatasetError):
        Dataset(dataset.root / "nowhere")


def test_cable_series_marks_missing_readings(tiny_dataset, topology):
    dataset, _, _ = tiny_dataset
    series = cable_series(dataset)
    assert set(series) == set(topology.cables)
    first, last = topology.cables[0], topology.cables[-1]
    np.testing.assert_allclose(series[first], [0.2, 0.2])
    assert series[last][0] == pytest.approx(0.28)
    assert np.isnan(series[last][1])


def test_trajectory_files(tmp_path, topology):
    poses = [RigidPose(Rotation.from_rotvec([0.1 * k, 0.0, 0.0]), np.array([k, 0.0, 1.0])) for k in range(3)]
    records = [FrameRecord(frame=k, rods=pose_records(poses, topology), diagnostics=FrameDiagnostics()) for k in range(4)]
    path = tmp_path / "trajectory.jsonl"
    assert write_trajectory(path, records) == 4
    loaded = read_trajectory(path)
    assert [r.frame for r in loaded] == [0, 1, 2, 3]
    restored = trajectory_poses(loaded[2])
    np.testing.assert_allclose(restored[1].translation, [1.0, 0.0, 1.0])

    streamed = tmp_path / "streamed.jsonl"
    with TrajectoryWriter(streamed) as writer:
        writer.write(records[0])
        assert len(read_trajectory(streamed)) == 1
    assert writer.count == 1

    path.write_text(path.read_text() + "{not json\n")
    with pytest.raises(DatasetError):
        read_trajectory(path)


def test_simulation_does_not_depend_on_worker_count(tmp_path):
    config = small_simulation(frames=3, noise=SimNoise())
    one = simulate(config, tmp_path / "one", workers=1, progress=False)
    three = simulate(config, tmp_path / "three", workers=3, progress=False)
    for index in range(3):
        name = f"{index:06d}.depthhsv"
        assert (one.root / "frames" / name).read_bytes() == (three.root / "frames" / name).read_bytes()
        assert one.cables(index) == three.cables(index)
    assert one.rois() == three.rois()


def test_simulated_dataset_layout(noise_free_dataset):
    dataset = noise_free_dataset
    assert len(dataset) == 4
    assert dataset.meta.has_ground_truth
    assert dataset.meta.local_frame_convention
    for index in range(4):
        assert dataset.frame(index).index == index
        truth = dataset.ground_truth(index)
        assert len(truth) == 3
        # the camera looks down from 1.2 m, rod centers sit in front of it
        assert all(0.8 < pose.translation[2] < 1.2 for pose in truth)
