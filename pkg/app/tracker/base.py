import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from app.geometry import RigidPose, Segment, closest_segment_parameters
from app.perception import (
    CameraIntrinsics,
    GroundPlane,
    ObservedFrame,
    backproject,
    color_pixels,
    search_window,
    segment_endcap_pixels,
)
from app.robot_model import EndcapModel, RodState, TensegrityTopology, all_endcap_positions, sample_endcap_model
from app.schemas import FrameDiagnostics, FrameTiming, RodPoseRecord, SolverConfig, TrackerConfig

logger = logging.getLogger(__name__)

INTERIOR_EPS = 1e-6


@dataclass(frozen=True, eq=False)
class ClosestPair:
    """Closest points of two rod axes, frozen from the previous frame.

    ``z_a``/``z_b`` are local axis coordinates on each rod; ``direction`` is
    the unit vector from rod a's point to rod b's point at that time.
    """

    rod_a: int
    rod_b: int
    z_a: float
    z_b: float
    point_a: np.ndarray
    point_b: np.ndarray
    direction: Optional[np.ndarray]
    interior: bool

    @property
    def constrained(self) -> bool:
        return self.interior and self.direction is not None


@dataclass(eq=False)
class EndcapObservation:
    endcap: int
    points: np.ndarray
    visibility: float
    matched: int = 0
    rendered: int = 0


@dataclass(eq=False)
class TrackerState:
    poses: List[RigidPose]
    closest_pairs: List[ClosestPair] = field(default_factory=list)
    ground: Optional[GroundPlane] = None
    frame_index: int = 0
    # per rod, last frame's gated observed points; pool for dummy anchors
    previous_observed: Dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def rods(self) -> List[RodState]:
        return [RodState(rod, pose) for rod, pose in enumerate(self.poses)]

    def endcaps(self, topology: TensegrityTopology) -> np.ndarray:
        return all_endcap_positions(self.poses, topology)

    def clone(self) -> "TrackerState":
        return replace(self, poses=list(self.poses), closest_pairs=list(self.closest_pairs),
                       previous_observed=dict(self.previous_observed))


def compute_closest_pairs(poses: List[RigidPose], topology: TensegrityTopology) -> List[ClosestPair]:
    """Closest-point cache for every rod pair, in each rod's local axis coordinate"""
    endcaps = all_endcap_positions(poses, topology)
    half = topology.rod_length / 2.0
    pairs = []
    for a, b in topology.rod_pairs():
        ia, ja = topology.endcap_of_rod[a]
        ib, jb = topology.endcap_of_rod[b]
        seg_a, seg_b = Segment(endcaps[ia], endcaps[ja]), Segment(endcaps[ib], endcaps[jb])
        s, t = closest_segment_parameters(seg_a, seg_b)
        point_a, point_b = seg_a.point_at(s), seg_b.point_at(t)
        gap = point_b - point_a
        distance = float(np.linalg.norm(gap))
        interior = INTERIOR_EPS < s < 1 - INTERIOR_EPS and INTERIOR_EPS < t < 1 - INTERIOR_EPS
        pairs.append(
            ClosestPair(
                rod_a=a,
                rod_b=b,
                z_a=half - s * topology.rod_length,
                z_b=half - t * topology.rod_length,
                point_a=point_a,
                point_b=point_b,
                direction=gap / distance if distance > 1e-12 else None,
                interior=interior,
            )
        )
    return pairs


@dataclass(eq=False)
class FramePoints:
    """Back-projected pixels of every endcap color in one frame"""

    by_endcap: Dict[int, np.ndarray]

    @classmethod
    def from_frame(
        cls,
        frame: ObservedFrame,
        intrinsics: CameraIntrinsics,
        topology: TensegrityTopology,
        centers: Optional[np.ndarray] = None,
        reach: Optional[float] = None,
    ) -> "FramePoints":
        """Segment the whole image, or only the windows within ``reach`` of the estimated endcap ``centers``"""
        if centers is None or reach is None:
            channels = frame.hsv_float()
            cache = {}
            for hsv_range in topology.endcap_hsv:
                if hsv_range not in cache:
                    cache[hsv_range], _ = backproject(frame, intrinsics, color_pixels(channels, hsv_range))
            return cls(by_endcap={e: cache[hsv_range] for e, hsv_range in enumerate(topology.endcap_hsv)})

        by_endcap = {}
        for endcap, hsv_range in enumerate(topology.endcap_hsv):
            roi = search_window(centers[endcap], reach, intrinsics)
            if roi is None:
                by_endcap[endcap] = np.zeros((0, 3))
                continue
            by_endcap[endcap], _ = backproject(frame, intrinsics, segment_endcap_pixels(frame, hsv_range, roi))
        return cls(by_endcap=by_endcap)


def pose_records(poses: List[RigidPose], topology: TensegrityTopology) -> List[RodPoseRecord]:
    records = []
    for state in (RodState(rod, pose) for rod, pose in enumerate(poses)):
        top, bottom = state.endcaps(topology)
        records.append(
            RodPoseRecord(
                rod=state.rod,
                quaternion_wxyz=state.pose.quaternion_wxyz().tolist(),
                translation=state.pose.translation.tolist(),
                endcaps=[top.tolist(), bottom.tolist()],
            )
        )
    return records


def derive_seed(*keys: int) -> int:
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


class BaseTracker(ABC):
    """Base class for all per-frame pose trackers"""

    def __init__(
        self,
        topology: TensegrityTopology,
        intrinsics: CameraIntrinsics,
        config: Optional[TrackerConfig] = None,
        solver_config: Optional[SolverConfig] = None,
        models: Optional[List[EndcapModel]] = None,
    ):
        self.topology = topology
        self.intrinsics = intrinsics
        self.config = config or TrackerConfig()
        self.solver_config = solver_config or SolverConfig()
        self.models = models or sample_endcap_model(topology, self.config.samples_per_endcap, self.config.seed)

    @property
    def name(self) -> str:
        return type(self).__name__

    @abstractmethod
    def track_frame(self, state: TrackerState, frame: ObservedFrame) -> Tuple[TrackerState, FrameDiagnostics, FrameTiming]:
        """Advance ``state`` from t-1 to the frame's timestep"""

    def frame_points(self, frame: ObservedFrame, state: Optional[TrackerState] = None) -> FramePoints:
        """Endcap-colored points near the previous estimate; an endcap moving farther than the first match radius is lost"""
        frame.check_intrinsics(self.intrinsics)
        if state is None:
            return FramePoints.from_frame(frame, self.intrinsics, self.topology)
        centers = all_endcap_positions(state.poses, self.topology)
        reach = self.config.dmax.initial + self.topology.endcap_radius
        return FramePoints.from_frame(frame, self.intrinsics, self.topology, centers, reach)

    def advance(
        self,
        state: TrackerState,
        poses: List[RigidPose],
        frame: ObservedFrame,
        rod_points: Optional[Dict[int, np.ndarray]] = None,
    ) -> TrackerState:
        observed = dict(state.previous_observed)
        if rod_points:
            observed.update({rod: pts for rod, pts in rod_points.items() if len(pts)})
        return TrackerState(
            poses=poses,
            closest_pairs=compute_closest_pairs(poses, self.topology),
            ground=state.ground,
            frame_index=frame.index,
            previous_observed=observed,
        )

    def log_frame(self, frame: ObservedFrame, diagnostics: FrameDiagnostics) -> None:
        logger.debug(
            "%s frame %d: %d iterations, r=%s",
            self.name,
            frame.index,
            len(diagnostics.iterations),
            np.round(diagnostics.visibility, 2).tolist(),
        )


def total_displacement(before: List[RigidPose], after: List[RigidPose], topology: TensegrityTopology) -> float:
    moved = all_endcap_positions(after, topology) - all_endcap_positions(before, topology)
    return float(np.sum(np.linalg.norm(moved, axis=1)))
