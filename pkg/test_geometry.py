import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from app.exceptions import DegenerateGeometryError, InvalidArgumentError
from app.geometry import (
    Correspondence,
    CorrespondenceSet,
    RigidPose,
    Segment,
    closest_points_between_segments,
    correspondence_weight,
    geodesic_distance,
    kabsch_weighted,
    minimal_rotation_between,
    quat_wxyz,
    segment_distances,
)


def random_pose(rng) -> RigidPose:
    return RigidPose(Rotation.random(random_state=int(rng.integers(1 << 31))), rng.normal(size=3))


def test_kabsch_recovers_known_transforms(rng):
    for _ in range(1000):
        n = int(rng.integers(3, 51))
        model = rng.normal(size=(n, 3))
        truth = random_pose(rng)
        weights = rng.uniform(0.1, 1.0, n)
        estimate = kabsch_weighted(CorrespondenceSet(model, truth.apply(model), weights))
        residual = estimate.apply(model) - truth.apply(model)
        assert np.sqrt(np.mean(np.sum(residual**2, axis=1))) < 1e-8


def test_kabsch_never_returns_a_reflection(rng):
    model = rng.normal(size=(10, 3))
    mirrored = model * np.array([1.0, 1.0, -1.0])
    estimate = kabsch_weighted(CorrespondenceSet(model, mirrored, np.ones(10)))
    assert np.linalg.det(estimate.rotation.as_matrix()) == pytest.approx(1.0)


def test_kabsch_rejects_degenerate_sets():
    with pytest.raises(DegenerateGeometryError):
        kabsch_weighted(CorrespondenceSet(np.zeros((2, 3)), np.zeros((2, 3)), np.ones(2)))

    line = np.outer(np.arange(5.0), [1.0, 0.0, 0.0])
    with pytest.raises(DegenerateGeometryError) as excinfo:
        kabsch_weighted(CorrespondenceSet(line, line, np.ones(5)))
    assert excinfo.value.rank == 1


def test_correspondence_set_validates_columns():
    with pytest.raises(InvalidArgumentError):
        CorrespondenceSet(np.zeros((3, 3)), np.zeros((2, 3)), np.ones(3))
    with pytest.raises(InvalidArgumentError):
        CorrespondenceSet(np.zeros((1, 3)), np.zeros((1, 3)), np.array([1.5]))


def test_weighted_rmse_of_pairs():
    pairs = [
        Correspondence(np.zeros(3), np.array([0.0, 0.0, 0.1]), 0.25),
        Correspondence(np.ones(3), np.ones(3), 0.75),
    ]
    correspondences = CorrespondenceSet.from_pairs(pairs)
    assert len(correspondences) == 2
    assert correspondences.weighted_rmse() == pytest.approx(0.05)
    shift = RigidPose(Rotation.identity(), np.array([0.0, 0.0, 0.1]))
    # the shift fixes the first pair and breaks the second
    assert correspondences.weighted_rmse(shift) == pytest.approx(np.sqrt(0.75 * 0.01))
    assert CorrespondenceSet.from_pairs([]).weighted_rmse() == 0.0


def test_correspondence_weight():
    assert correspondence_weight(0.0, 0.1) == 1.0
    assert correspondence_weight(0.1, 0.1) == 0.0
    assert correspondence_weight(0.05, 0.1) == pytest.approx(0.75)
    assert correspondence_weight(0.2, 0.1) == 0.0
    with pytest.raises(InvalidArgumentError):
        correspondence_weight(0.01, 0.0)


def test_closest_points_of_crossing_segments():
    s1 = Segment([-1.0, 0.0, 0.0], [1.0, 0.0, 0.0])
    s2 = Segment([0.0, -1.0, 1.0], [0.0, 1.0, 1.0])
    c1, c2, dist = closest_points_between_segments(s1, s2)
    assert dist == pytest.approx(1.0)
    np.testing.assert_allclose(c1, [0.0, 0.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(c2, [0.0, 0.0, 1.0], atol=1e-12)


def test_closest_points_of_parallel_segments_start_at_first_endpoint():
    s1 = Segment([0.0, 0.0, 0.0], [0.0, 0.0, 1.0])
    s2 = Segment([0.1, 0.0, 0.0], [0.1, 0.0, 1.0])
    c1, _, dist = closest_points_between_segments(s1, s2)
    assert dist == pytest.approx(0.1)
    np.testing.assert_allclose(c1, [0.0, 0.0, 0.0], atol=1e-12)


def test_closest_points_beat_sampling_oracle(rng):
    grid = np.linspace(0.0, 1.0, 100)
    for _ in range(200):
        a0, a1, b0, b1 = rng.normal(size=(4, 3))
        s1, s2 = Segment(a0, a1), Segment(b0, b1)
        _, _, dist = closest_points_between_segments(s1, s2)
        p = a0 + grid[:, None] * (a1 - a0)
        q = b0 + grid[:, None] * (b1 - b0)
        sampled = np.min(np.linalg.norm(p[:, None, :] - q[None, :, :], axis=-1))
        assert dist <= sampled + 1e-12


def test_segment_rejects_coincident_endpoints():
    with pytest.raises(InvalidArgumentError):
        Segment([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])


def test_minimal_rotation_between(rng):
    for _ in range(20):
        a, b = rng.normal(size=(2, 3))
        rotation = minimal_rotation_between(a, b)
        np.testing.assert_allclose(rotation.apply(a / np.linalg.norm(a)), b / np.linalg.norm(b), atol=1e-12)
        cosine = a @ b / np.linalg.norm(a) / np.linalg.norm(b)
        assert rotation.magnitude() == pytest.approx(np.arccos(cosine), abs=1e-9)

    flip = minimal_rotation_between([0.0, 0.0, 1.0], [0.0, 0.0, -1.0])
    assert flip.magnitude() == pytest.approx(np.pi)
    with pytest.raises(InvalidArgumentError):
        minimal_rotation_between([0.0, 0.0, 0.0], [1.0, 0.0, 0.0])


def test_geodesic_distance():
    r1 = Rotation.from_rotvec([0.0, 0.0, 0.2])
    r2 = Rotation.from_rotvec([0.0, 0.0, 0.5])
    assert geodesic_distance(r1, r2) == pytest.approx(0.3)
    assert geodesic_distance(r1, r1) == pytest.approx(0.0, abs=1e-12)


def test_pose_compose_and_inverse(rng):
    pose = random_pose(rng)
    points = rng.normal(size=(5, 3))
    identity = pose.compose(pose.inverse())
    np.testing.assert_allclose(identity.apply(points), points, atol=1e-12)
    np.testing.assert_allclose(RigidPose.from_matrix(pose.as_matrix()).apply(points), pose.apply(points), atol=1e-12)


def test_quaternions_are_canonical(rng):
    for _ in range(20):
        rotation = Rotation.random(random_state=int(rng.integers(1 << 31)))
        quat = quat_wxyz(rotation)
        assert quat[0] >= 0
        assert np.linalg.norm(quat) == pytest.approx(1.0)
    with pytest.raises(InvalidArgumentError):
        RigidPose.from_wxyz([2.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0])


def test_kabsch_commutes_with_a_rigid_change_of_frame(rng):
    for _ in range(100):
        n = int(rng.integers(4, 30))
        model = rng.normal(size=(n, 3))
        observed = random_pose(rng).apply(model) + rng.normal(scale=0.01, size=(n, 3))
        weights = rng.uniform(0.1, 1.0, n)
        frame = random_pose(rng)

        estimate = kabsch_weighted(CorrespondenceSet(model, observed, weights))
        moved = kabsch_weighted(CorrespondenceSet(frame.apply(model), frame.apply(observed), weights))
        points = rng.normal(size=(5, 3))
        np.testing.assert_allclose(
            moved.apply(frame.apply(points)), frame.apply(estimate.apply(points)), atol=1e-9
        )


def test_vectorized_segment_distances_match_the_pairwise_solver(rng):
    a, b = rng.normal(size=(2, 3))
    starts = rng.normal(size=(200, 3))
    ends = rng.normal(size=(200, 3))
    distances = segment_distances(starts, ends, a, b)
    for k in range(200):
        _, _, expected = closest_points_between_segments(Segment(starts[k], ends[k]), Segment(a, b))
        assert distances[k] == pytest.approx(expected, abs=1e-10)

    from_origin = segment_distances(np.zeros(3), ends, a, b)
    assert from_origin.shape == (200,)
    with pytest.raises(InvalidArgumentError):
        segment_distances(starts, ends, a, a)


def test_minimal_rotation_beats_every_twist(rng):
    twists = np.linspace(0.0, 2.0 * np.pi, 360, endpoint=False)
    for _ in range(1000):
        a, b = rng.normal(size=(2, 3))
        rotation = minimal_rotation_between(a, b)
        axis = b / np.linalg.norm(b)
        # every rotation taking a onto b is a twist about b after the minimal one
        candidates = Rotation.from_rotvec(twists[:, None] * axis) * rotation
        np.testing.assert_allclose(candidates.apply(a / np.linalg.norm(a)), np.tile(axis, (360, 1)), atol=1e-9)
        assert rotation.magnitude() <= candidates.magnitude().min() + 1e-9


def test_geodesic_distance_is_a_metric(rng):
    for _ in range(200):
        r1, r2, r3 = (Rotation.random(random_state=int(rng.integers(1 << 31))) for _ in range(3))
        d12 = geodesic_distance(r1, r2)
        assert 0.0 <= d12 <= np.pi + 1e-12
        assert d12 == pytest.approx(geodesic_distance(r2, r1), abs=1e-9)
        assert geodesic_distance(r1, r3) <= d12 + geodesic_distance(r2, r3) + 1e-9


def test_geodesic_distance_wraps_near_a_half_turn():
    almost = np.pi - 0.01
    r1 = Rotation.from_rotvec([0.0, 0.0, almost])
    r2 = Rotation.from_rotvec([0.0, 0.0, -almost])
    assert geodesic_distance(r1, r2) == pytest.approx(0.02, abs=1e-9)
    assert geodesic_distance(Rotation.identity(), Rotation.from_rotvec([0.0, np.pi, 0.0])) == pytest.approx(np.pi)
