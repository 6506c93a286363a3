import logging
import time
from typing import Dict, Optional, Tuple

import numpy as np

from app.exceptions import DegenerateGeometryError, NumericalFailureError
from app.geometry import CorrespondenceSet, kabsch_weighted
from app.perception import ObservedFrame, add_dummy_points, dmax_schedule, visible_model_points
from app.robot_model import TensegrityTopology
from app.schemas import FrameDiagnostics, FrameTiming, IterationDiagnostics, SolverConfig
from app.solver import NlpProblem, minimize_constrained
from app.tracker.base import BaseTracker, TrackerState, derive_seed, total_displacement
from app.tracker.constraints import report_violations, rod_length_constraint
from app.tracker.correction import cable_lengths, poses_from_endcaps
from app.tracker.transition import observe_endcaps

logger = logging.getLogger(__name__)

# pins the six rigid-motion directions the cable residuals leave free
GAUGE_WEIGHT = 1e-3


def solve_shape(
    measurements: Dict[Tuple[int, int], float],
    previous_endcaps: np.ndarray,
    topology: TensegrityTopology,
    solver_config: Optional[SolverConfig] = None,
) -> np.ndarray:
    """Endcap configuration best explaining the cable readings under exact rod lengths"""
    previous = np.asarray(previous_endcaps, dtype=np.float64).reshape(-1, 3)
    lengths, present = cable_lengths(measurements, topology)
    for k, (i, j) in enumerate(topology.cables):
        if not present[k]:
            lengths[k] = np.linalg.norm(previous[i] - previous[j])
    target = previous.reshape(-1)
    dimension = 3 * topology.n_endcaps

    def objective(x: np.ndarray):
        diff = x - target
        value = GAUGE_WEIGHT * float(diff @ diff)
        grad = 2.0 * GAUGE_WEIGHT * diff
        for (i, j), length in zip(topology.cables, lengths):
            d = x[3 * i : 3 * i + 3] - x[3 * j : 3 * j + 3]
            dist = np.linalg.norm(d)
            residual = dist - length
            value += residual * residual
            g = 2.0 * residual * d / (dist + 1e-12)
            grad[3 * i : 3 * i + 3] += g
            grad[3 * j : 3 * j + 3] -= g
        return value, grad

    problem = NlpProblem(
        dimension=dimension,
        objective=objective,
        initial_point=target,
        equalities=[rod_length_constraint(i, j, topology.rod_length, dimension).fn for i, j in topology.endcap_of_rod],
    )
    result = minimize_constrained(problem, solver_config)
    if not result.converged:
        logger.debug("shape solve stopped early: %s", result.message)
    return result.x.reshape(-1, 3)


class RigidBodyTracker(BaseTracker):
    """Reconstructs the shape from cable readings, then registers it as one rigid body"""

    def track_frame(self, state: TrackerState, frame: ObservedFrame) -> Tuple[TrackerState, FrameDiagnostics, FrameTiming]:
        config = self.config
        started = time.perf_counter()
        points = self.frame_points(frame, state)
        diagnostics = FrameDiagnostics(ground_detected=state.ground is not None)
        timing = FrameTiming(frame=frame.index)

        previous = state.endcaps(self.topology)
        tic = time.perf_counter()
        try:
            shape = solve_shape(frame.cable_measurements, previous, self.topology, self.solver_config)
        except NumericalFailureError as exc:
            raise exc.with_context(frame=frame.index) from exc
        placed = kabsch_weighted(CorrespondenceSet(shape, previous, np.ones(len(shape)))).apply(shape)
        poses = poses_from_endcaps(placed, state.poses, self.topology)
        timing.correction_ms.append((time.perf_counter() - tic) * 1e3)

        anchors = np.vstack(
            [visible_model_points(self.models[e], state.poses[self.topology.rod_of_endcap(e)]) for e in range(self.topology.n_endcaps)]
        )
        previous_observed = np.vstack([np.zeros((0, 3))] + list(state.previous_observed.values()))
        rod_points: Dict[int, np.ndarray] = {}
        for iteration in range(config.max_outer_iterations):
            tic = time.perf_counter()
            d_max = dmax_schedule(iteration, config.dmax)
            per_endcap = observe_endcaps(points, poses, self.models, self.topology, d_max)
            correspondences = CorrespondenceSet()
            for _, _, matches, _ in per_endcap:
                correspondences = correspondences.concat(matches)
            correspondences = add_dummy_points(
                correspondences,
                anchors,
                previous_observed,
                config.dummy_count,
                derive_seed(config.seed, frame.index, iteration),
            )
            record = IterationDiagnostics(iteration=iteration, d_max=d_max)
            try:
                delta = kabsch_weighted(correspondences)
                candidate = [delta.compose(pose) for pose in poses]
            except DegenerateGeometryError as exc:
                logger.debug("whole-body registration skipped at iteration %d: %s", iteration, exc)
                candidate = poses
            timing.transition_ms.append((time.perf_counter() - tic) * 1e3)

            diagnostics.visibility = [entry[3].visibility for entry in per_endcap]
            for rod, (i, j) in enumerate(self.topology.endcap_of_rod):
                rod_points[rod] = np.vstack([per_endcap[i][1], per_endcap[j][1]])
            record.displacement = total_displacement(poses, candidate, self.topology)
            diagnostics.iterations.append(record)
            poses = candidate
            if record.displacement < config.convergence_tol:
                break

        new_state = self.advance(state, poses, frame, rod_points)
        diagnostics.violation = report_violations(new_state, state, self.topology)
        timing.total_ms = (time.perf_counter() - started) * 1e3
        self.log_frame(frame, diagnostics)
        return new_state, diagnostics, timing
