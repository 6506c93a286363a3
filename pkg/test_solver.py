import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from app.exceptions import InvalidArgumentError, NumericalFailureError
from app.geometry import RigidPose
from app.perception import GroundPlane
from app.robot_model import all_endcap_positions
from app.sim.trajectory import initial_configuration
from app.solver import NlpProblem, check_gradient, minimize_constrained
from app.tracker.base import TrackerState, compute_closest_pairs
from app.tracker.constraints import build_constraints, rod_length_constraint
from app.tracker.correction import build_correction_problem


def quadratic(center):
    center = np.asarray(center, dtype=np.float64)

    def fn(x):
        diff = x - center
        return float(diff @ diff), 2.0 * diff

    return fn


def linear(coeffs, offset):
    coeffs = np.asarray(coeffs, dtype=np.float64)

    def fn(x):
        return float(coeffs @ x) + offset, coeffs.copy()

    return fn


def test_projection_onto_a_line():
    problem = NlpProblem(
        dimension=2,
        objective=quadratic([1.0, 1.0]),
        initial_point=[0.0, 0.0],
        equalities=[linear([1.0, 1.0], -1.0)],
    )
    result = minimize_constrained(problem)
    np.testing.assert_allclose(result.x, [0.5, 0.5], atol=1e-6)
    assert result.value == pytest.approx(0.5, abs=1e-6)
    assert result.converged
    assert result.max_violation == pytest.approx(abs(result.x.sum() - 1.0), abs=1e-12)


def test_active_inequality():
    problem = NlpProblem(
        dimension=1,
        objective=quadratic([0.0]),
        initial_point=[3.0],
        inequalities=[linear([1.0], -1.0)],
    )
    result = minimize_constrained(problem)
    assert result.x[0] == pytest.approx(1.0, abs=1e-6)
    assert result.converged
    assert result.value <= 9.0


def test_rod_length_stretches_symmetrically():
    a, b = np.zeros(3), np.array([0.30, 0.0, 0.0])
    problem = NlpProblem(
        dimension=6,
        objective=quadratic(np.concatenate([a, b])),
        initial_point=np.concatenate([a, b]),
        equalities=[rod_length_constraint(0, 1, 0.36, 6).fn],
    )
    result = minimize_constrained(problem)
    np.testing.assert_allclose(result.x[:3], [-0.03, 0.0, 0.0], atol=1e-6)
    np.testing.assert_allclose(result.x[3:], [0.33, 0.0, 0.0], atol=1e-6)
    assert result.converged


def test_identical_problems_give_identical_results():
    def make():
        return NlpProblem(
            dimension=2,
            objective=quadratic([1.0, 1.0]),
            initial_point=[0.3, -0.2],
            equalities=[linear([1.0, 1.0], -1.0)],
        )

    first, second = minimize_constrained(make()), minimize_constrained(make())
    np.testing.assert_array_equal(first.x, second.x)
    assert first.iterations == second.iterations


def test_check_gradient_on_a_quadratic():
    problem = NlpProblem(dimension=3, objective=quadratic([1.0, -2.0, 0.5]), initial_point=np.zeros(3))
    assert check_gradient(problem, [0.3, 0.1, -0.7], h=1e-5) < 1e-6


def test_check_gradient_catches_a_wrong_gradient():
    def broken(x):
        value, grad = quadratic([0.0, 0.0])(x)
        grad[1] += 1.0
        return value, grad

    problem = NlpProblem(dimension=2, objective=broken, initial_point=np.zeros(2))
    assert check_gradient(problem, [0.2, 0.4]) > 0.1
    with pytest.raises(InvalidArgumentError):
        check_gradient(problem, [0.2, 0.4], h=0.0)


def test_inactive_inequality_is_ignored():
    problem = NlpProblem(
        dimension=2,
        objective=quadratic([2.0, 2.0]),
        initial_point=[0.0, 0.0],
        inequalities=[linear([1.0, 1.0], -1.0)],
    )
    result = minimize_constrained(problem)
    np.testing.assert_allclose(result.x, [2.0, 2.0], atol=1e-6)
    assert result.converged


def test_nonlinear_equality_on_unit_circle():
    def circle(x):
        return float(x @ x) - 1.0, 2.0 * x

    problem = NlpProblem(
        dimension=2,
        objective=linear([1.0, 0.0], 0.0),
        initial_point=[-0.6, 0.8],
        equalities=[circle],
    )
    result = minimize_constrained(problem)
    np.testing.assert_allclose(result.x, [-1.0, 0.0], atol=1e-5)
    assert result.converged


def test_non_finite_objective_raises():
    problem = NlpProblem(dimension=2, objective=lambda x: (np.nan, np.zeros(2)), initial_point=[0.0, 0.0])
    with pytest.raises(NumericalFailureError):
        minimize_constrained(problem)


def test_initial_point_shape_is_checked():
    with pytest.raises(InvalidArgumentError):
        NlpProblem(dimension=2, objective=quadratic([0.0, 0.0]), initial_point=[0.0, 0.0, 0.0])


def test_correction_gradients_match_finite_differences(topology, rng):
    poses = initial_configuration(topology)
    ground = GroundPlane(rotation=Rotation.identity(), translation=np.zeros(3), inliers=0, normal=np.array([0.0, 0.0, 1.0]))
    state = TrackerState(poses=poses, closest_pairs=compute_closest_pairs(poses, topology), ground=ground)
    constraints = build_constraints(state, topology, ground)

    truth = all_endcap_positions(poses, topology)
    anchors = truth + rng.normal(scale=0.01, size=truth.shape)
    measurements = {
        (i, j): float(np.linalg.norm(truth[i] - truth[j])) + rng.normal(scale=0.005) for i, j in topology.cables
    }
    problem = build_correction_problem(
        anchors, measurements, rng.uniform(0.1, 1.0, 6), rng.uniform(0.0, 0.25, 9), constraints, topology
    )
    for _ in range(5):
        point = anchors.reshape(-1) + rng.normal(scale=0.02, size=18)
        assert check_gradient(problem, point) < 1e-4

    shifted = [RigidPose(p.rotation, p.translation + 0.003) for p in poses]
    assert check_gradient(problem, all_endcap_positions(shifted, topology).reshape(-1)) < 1e-4
