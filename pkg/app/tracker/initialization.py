import logging
from typing import List, Optional

import numpy as np
from scipy.spatial.transform import Rotation

from app.exceptions import InitializationError, InvalidArgumentError, PlaneNotFoundError
from app.perception import (
    CameraIntrinsics,
    GroundPlane,
    ObservedFrame,
    Roi,
    backproject,
    detect_ground_plane,
    clean_endcap_points,
    segment_endcap_pixels,
)
from app.robot_model import TensegrityTopology, pose_from_endcaps
from app.schemas import RansacConfig, TrackerConfig
from app.tracker.base import TrackerState, compute_closest_pairs

logger = logging.getLogger(__name__)


def endcap_centroid(
    frame: ObservedFrame,
    intrinsics: CameraIntrinsics,
    topology: TensegrityTopology,
    endcap: int,
    roi: Roi,
    min_points: int = 5,
) -> np.ndarray:
    """Centroid of the endcap pixels in ``roi`` that survive outlier rejection and the depth window"""
    pixels = segment_endcap_pixels(frame, topology.endcap_hsv[endcap], roi)
    points, _ = backproject(frame, intrinsics, pixels)
    points = clean_endcap_points(points, topology.endcap_radius)
    if len(points) < min_points:
        raise InitializationError(
            f"endcap {endcap} has {len(points)} usable points in its RoI, need {min_points}", endcap=endcap
        )
    return points.mean(axis=0)


def try_detect_ground(frame: ObservedFrame, intrinsics: CameraIntrinsics, config: RansacConfig) -> Optional[GroundPlane]:
    try:
        ground = detect_ground_plane(frame, intrinsics, config)
    except PlaneNotFoundError as exc:
        logger.warning("ground plane not found on the first frame, ground constraint disabled: %s", exc)
        return None
    logger.info("ground plane detected with %d inliers", ground.inliers)
    return ground


def initialize_from_rois(
    frame: ObservedFrame,
    rois: List[Roi],
    intrinsics: CameraIntrinsics,
    topology: TensegrityTopology,
    config: Optional[TrackerConfig] = None,
) -> TrackerState:
    """First-frame poses from endcap centroids; twist about each axis is set to zero"""
    config = config or TrackerConfig()
    if len(rois) != topology.n_endcaps:
        raise InvalidArgumentError(f"need {topology.n_endcaps} RoIs, got {len(rois)}")
    frame.check_intrinsics(intrinsics)

    centers = np.array(
        [
            endcap_centroid(frame, intrinsics, topology, e, rois[e], config.min_init_points)
            for e in range(topology.n_endcaps)
        ]
    )
    poses = []
    for rod, (i, j) in enumerate(topology.endcap_of_rod):
        try:
            poses.append(pose_from_endcaps(centers[i], centers[j], Rotation.identity()))
        except Exception as exc:
            raise InitializationError(f"rod {rod}: {exc}", endcap=i) from exc

    ground = try_detect_ground(frame, intrinsics, config.ransac) if config.enable_ground_constraint else None
    return TrackerState(
        poses=poses,
        closest_pairs=compute_closest_pairs(poses, topology),
        ground=ground,
        frame_index=frame.index,
    )
