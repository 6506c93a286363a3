import logging
from typing import Dict, Iterator, List, Optional, Tuple, Type

from app.perception import CameraIntrinsics, ObservedFrame, Roi
from app.robot_model import EndcapModel, TensegrityTopology, sample_endcap_model
from app.schemas import FrameRecord, FrameTiming, TrackingConfig
from app.tracker.base import BaseTracker, TrackerState, pose_records
from app.tracker.initialization import initialize_from_rois
from app.tracker.iterative import IterativeTracker
from app.tracker.rigid_body import RigidBodyTracker

logger = logging.getLogger(__name__)


class TrackingController:
    """Runs the configured tracker over a frame sequence"""

    trackers: Dict[str, Type[BaseTracker]] = {
        "iterative": IterativeTracker,
        "rigid_body": RigidBodyTracker,
    }

    def __init__(self, topology: TensegrityTopology, intrinsics: CameraIntrinsics, config: Optional[TrackingConfig] = None):
        self.topology = topology
        self.intrinsics = intrinsics
        self.config = config or TrackingConfig()
        self.tracker_config = self.config.effective_tracker()
        self.models: List[EndcapModel] = sample_endcap_model(
            topology, self.tracker_config.samples_per_endcap, self.tracker_config.seed
        )
        mode = "rigid_body" if self.tracker_config.rigid_body_mode else "iterative"
        self.tracker = self.trackers[mode](topology, intrinsics, self.tracker_config, self.config.solver, self.models)
        logger.info("tracking with %s (ablation: %s)", self.tracker.name, self.config.ablation or "none")

    def initialize(self, frame: ObservedFrame, rois: List[Roi]) -> TrackerState:
        return initialize_from_rois(frame, rois, self.intrinsics, self.topology, self.tracker_config)

    def run(self, frames: Iterator[ObservedFrame], rois: List[Roi]) -> Iterator[Tuple[FrameRecord, FrameTiming]]:
        """Initialize on the first frame, then track every frame including the first"""
        state: Optional[TrackerState] = None
        for frame in frames:
            if state is None:
                state = self.initialize(frame, rois)
            state, diagnostics, timing = self.tracker.track_frame(state, frame)
            yield FrameRecord(frame=frame.index, rods=pose_records(state.poses, self.topology), diagnostics=diagnostics), timing
