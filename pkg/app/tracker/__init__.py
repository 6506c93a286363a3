from app.tracker.base import (
    BaseTracker,
    ClosestPair,
    EndcapObservation,
    FramePoints,
    TrackerState,
    compute_closest_pairs,
    pose_records,
)
from app.tracker.constraints import ConstraintSet, build_constraints
from app.tracker.controller import TrackingController
from app.tracker.correction import build_correction_problem, correction_step
from app.tracker.initialization import initialize_from_rois
from app.tracker.iterative import IterativeTracker, track_frame
from app.tracker.rigid_body import RigidBodyTracker, solve_shape
from app.tracker.transition import TransitionResult, transition_step
from app.tracker.weights import compute_adaptive_weights

__all__ = [
    "BaseTracker",
    "ClosestPair",
    "ConstraintSet",
    "EndcapObservation",
    "FramePoints",
    "IterativeTracker",
    "RigidBodyTracker",
    "TrackerState",
    "TrackingController",
    "TransitionResult",
    "build_constraints",
    "build_correction_problem",
    "compute_adaptive_weights",
    "compute_closest_pairs",
    "correction_step",
    "initialize_from_rois",
    "pose_records",
    "solve_shape",
    "track_frame",
    "transition_step",
]
