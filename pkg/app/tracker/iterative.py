import logging
import time
from typing import List, Optional, Tuple

import numpy as np

from app.geometry import RigidPose
from app.perception import CameraIntrinsics, ObservedFrame
from app.robot_model import EndcapModel, TensegrityTopology
from app.schemas import FrameDiagnostics, FrameTiming, IterationDiagnostics, SolverConfig, TrackerConfig
from app.tracker.base import BaseTracker, TrackerState, total_displacement
from app.tracker.constraints import ConstraintSet, build_constraints, report_violations
from app.tracker.correction import correction_step, poses_from_endcaps
from app.tracker.rigid_body import RigidBodyTracker
from app.tracker.transition import TransitionResult, transition_step
from app.tracker.weights import compute_adaptive_weights

logger = logging.getLogger(__name__)


class IterativeTracker(BaseTracker):
    """Alternates per-rod registration with a joint constrained correction"""

    def track_frame(self, state: TrackerState, frame: ObservedFrame) -> Tuple[TrackerState, FrameDiagnostics, FrameTiming]:
        config = self.config
        started = time.perf_counter()
        points = self.frame_points(frame, state)
        constraints = build_constraints(state, self.topology, state.ground, config)
        diagnostics = FrameDiagnostics(
            constrained_pairs=constraints.separation_pairs(), ground_detected=state.ground is not None
        )
        timing = FrameTiming(frame=frame.index)
        correct_each_iteration = config.enable_correction and not config.post_hoc_correction

        poses = list(state.poses)
        transition: Optional[TransitionResult] = None
        for iteration in range(config.max_outer_iterations):
            tic = time.perf_counter()
            transition = transition_step(
                state, points, self.models, self.topology, config, iteration, current=poses, frame_index=frame.index
            )
            timing.transition_ms.append((time.perf_counter() - tic) * 1e3)
            record = IterationDiagnostics(iteration=iteration, d_max=transition.d_max)

            candidate = transition.poses
            if correct_each_iteration:
                tic = time.perf_counter()
                candidate = self._correct(transition, frame, constraints, diagnostics, record, iteration)
                timing.correction_ms.append((time.perf_counter() - tic) * 1e3)

            record.displacement = total_displacement(poses, candidate, self.topology)
            diagnostics.iterations.append(record)
            poses = candidate
            logger.debug("frame %d iteration %d: displacement %.2e", frame.index, iteration, record.displacement)
            if record.displacement < config.convergence_tol:
                break

        if config.enable_correction and config.post_hoc_correction and transition is not None:
            transition.poses = poses
            tic = time.perf_counter()
            record = diagnostics.iterations[-1]
            poses = self._correct(transition, frame, constraints, diagnostics, record, len(diagnostics.iterations) - 1)
            timing.correction_ms.append((time.perf_counter() - tic) * 1e3)

        if transition is not None:
            diagnostics.visibility = transition.visibility
            if not diagnostics.unary_weights:
                unary, binary = compute_adaptive_weights(
                    transition.visibility, self.topology, config.weights, config.static_weights
                )
                diagnostics.unary_weights = unary.tolist()
                diagnostics.binary_weights = binary.tolist()

        new_state = self.advance(state, poses, frame, transition.rod_points if transition is not None else None)
        diagnostics.violation = report_violations(new_state, state, self.topology)
        timing.total_ms = (time.perf_counter() - started) * 1e3
        self.log_frame(frame, diagnostics)
        return new_state, diagnostics, timing

    def _correct(
        self,
        transition: TransitionResult,
        frame: ObservedFrame,
        constraints: ConstraintSet,
        diagnostics: FrameDiagnostics,
        record: IterationDiagnostics,
        iteration: int,
    ) -> List[RigidPose]:
        config = self.config
        unary, binary = compute_adaptive_weights(
            transition.visibility, self.topology, config.weights, config.static_weights
        )
        if not config.enable_binary_loss:
            binary = np.zeros_like(binary)
        result = correction_step(
            transition.poses,
            frame.cable_measurements,
            constraints,
            (unary, binary),
            self.topology,
            self.solver_config,
            cable_gate=config.cable_outlier_gate,
            max_jump=config.max_correction_jump,
            context={"frame": frame.index, "iteration": iteration},
        )
        if not result.solver.converged:
            logger.warning(
                "frame %d iteration %d: correction did not converge (eq %.1e, ineq %.1e, kkt %.1e)",
                frame.index, iteration, result.solver.eq_violation, result.solver.ineq_violation,
                result.solver.kkt_residual,
            )
        record.objective = result.solver.value
        record.solver_iterations = result.solver.iterations
        record.solver_converged = result.solver.converged
        diagnostics.unary_weights = unary.tolist()
        diagnostics.binary_weights = result.binary_weights.tolist()
        diagnostics.gated_cables = sorted(set(diagnostics.gated_cables) | set(result.gated_cables))
        diagnostics.rejected_endcaps = sorted(set(diagnostics.rejected_endcaps) | set(result.rejected_endcaps))
        return poses_from_endcaps(result.endcaps, transition.poses, self.topology)


def track_frame(
    state: TrackerState,
    frame: ObservedFrame,
    models: List[EndcapModel],
    intrinsics: CameraIntrinsics,
    config: TrackerConfig,
    topology: TensegrityTopology,
    solver_config: Optional[SolverConfig] = None,
) -> Tuple[TrackerState, FrameDiagnostics]:
    """Run one frame with the tracker variant selected by ``config``"""
    tracker_cls = RigidBodyTracker if config.rigid_body_mode else IterativeTracker
    tracker = tracker_cls(topology, intrinsics, config, solver_config, models)
    new_state, diagnostics, _ = tracker.track_frame(state, frame)
    return new_state, diagnostics
