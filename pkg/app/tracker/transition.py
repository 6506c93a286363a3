import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from app.exceptions import DegenerateGeometryError
from app.geometry import CorrespondenceSet, RigidPose, as_points, kabsch_weighted
from app.perception import (
    add_dummy_points,
    clean_endcap_points,
    dmax_schedule,
    filter_endcap_noise,
    find_correspondences,
    shaft_clear,
    visible_model_points,
)
from app.robot_model import EndcapModel, TensegrityTopology, all_endcap_positions
from app.schemas import TrackerConfig
from app.tracker.base import EndcapObservation, FramePoints, TrackerState, derive_seed

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class TransitionResult:
    poses: List[RigidPose]
    observations: List[EndcapObservation]
    d_max: float
    # per rod, the gated observed points used this iteration
    rod_points: Dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def visibility(self) -> List[float]:
        return [obs.visibility for obs in self.observations]


def gather_endcap_points(
    candidates: np.ndarray,
    endcap: int,
    centers: np.ndarray,
    same_color: List[int],
    d_max: float,
    radius: float,
) -> np.ndarray:
    """Observed points owned by ``endcap``: nearest among same-colored endcaps, within reach, outlier- and depth-filtered"""
    candidates = as_points(candidates)
    if len(candidates) == 0:
        return candidates
    dist = np.linalg.norm(candidates - centers[endcap], axis=1)
    keep = dist <= d_max + radius
    for other in same_color:
        if other != endcap:
            keep &= dist <= np.linalg.norm(candidates - centers[other], axis=1)
    return clean_endcap_points(candidates[keep], radius)


def expected_endcap_points(model: EndcapModel, pose: RigidPose, topology: TensegrityTopology) -> np.ndarray:
    """Model points the camera can see past the endcap's own shaft, cut by the observations' depth window"""
    visible = visible_model_points(model, pose)
    # the other endcap of a rod sits at the mirrored local offset
    center, other = pose.apply(model.center), pose.apply(-model.center)
    visible = visible[shaft_clear(visible, center, other, topology.shaft_radius)]
    return filter_endcap_noise(visible, topology.endcap_radius)


def _same_color_groups(topology: TensegrityTopology) -> Dict[int, List[int]]:
    by_color: Dict[object, List[int]] = {}
    for e, hsv_range in enumerate(topology.endcap_hsv):
        by_color.setdefault(hsv_range, []).append(e)
    return {e: by_color[hsv_range] for e, hsv_range in enumerate(topology.endcap_hsv)}


def observe_endcaps(
    points: FramePoints,
    poses: List[RigidPose],
    models: List[EndcapModel],
    topology: TensegrityTopology,
    d_max: float,
) -> List[tuple]:
    """Per endcap: (visible model points, observed points, correspondences, observation)"""
    centers = all_endcap_positions(poses, topology)
    groups = _same_color_groups(topology)
    result = []
    for endcap in range(topology.n_endcaps):
        rod = topology.rod_of_endcap(endcap)
        visible = expected_endcap_points(models[endcap], poses[rod], topology)
        observed = gather_endcap_points(
            points.by_endcap[endcap], endcap, centers, groups[endcap], d_max, topology.endcap_radius
        )
        matches = find_correspondences(visible, observed, d_max)
        ratio = min(1.0, len(matches) / len(visible)) if len(visible) else 0.0
        observation = EndcapObservation(
            endcap=endcap, points=observed, visibility=ratio, matched=len(matches), rendered=len(visible)
        )
        result.append((visible, observed, matches, observation))
    return result


def transition_step(
    state: TrackerState,
    points: FramePoints,
    models: List[EndcapModel],
    topology: TensegrityTopology,
    config: TrackerConfig,
    iteration: int,
    current: Optional[List[RigidPose]] = None,
    frame_index: Optional[int] = None,
) -> TransitionResult:
    """One registration pass per rod: ``P̂ = δP · P``.

    ``state`` holds the previous frame (dummy anchors); ``current`` is the
    estimate being refined and defaults to the previous poses.
    """
    poses = list(current if current is not None else state.poses)
    d_max = dmax_schedule(iteration, config.dmax)
    frame_index = state.frame_index + 1 if frame_index is None else frame_index
    per_endcap = observe_endcaps(points, poses, models, topology, d_max)

    new_poses = list(poses)
    rod_points: Dict[int, np.ndarray] = {}
    for rod, (i, j) in enumerate(topology.endcap_of_rod):
        correspondences = CorrespondenceSet()
        for endcap in (i, j):
            visible, observed, matches, _ = per_endcap[endcap]
            correspondences = correspondences.concat(matches)
            if config.symmetric_correspondences and len(visible):
                reverse = find_correspondences(observed, visible, d_max)
                correspondences = correspondences.concat(
                    CorrespondenceSet(reverse.observed_points, reverse.model_points, reverse.weights)
                )
        rod_points[rod] = np.vstack([per_endcap[i][1], per_endcap[j][1]])

        anchor_model = np.vstack(
            [visible_model_points(models[e], state.poses[rod]) for e in (i, j)]
        )
        correspondences = add_dummy_points(
            correspondences,
            anchor_model,
            state.previous_observed.get(rod, np.zeros((0, 3))),
            config.dummy_count,
            derive_seed(config.seed, frame_index, iteration, rod),
        )
        try:
            delta = kabsch_weighted(correspondences)
        except DegenerateGeometryError as exc:
            logger.debug("rod %d keeps its pose at iteration %d: %s", rod, iteration, exc)
            continue
        new_poses[rod] = delta.compose(poses[rod])

    return TransitionResult(
        poses=new_poses,
        observations=[entry[3] for entry in per_endcap],
        d_max=d_max,
        rod_points=rod_points,
    )
