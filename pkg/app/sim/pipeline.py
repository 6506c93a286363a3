import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional, Union

from tqdm import tqdm

from app.config import settings
from app.dataset import Dataset, DatasetWriter
from app.geometry import RigidPose
from app.perception import ObservedFrame
from app.robot_model import TensegrityTopology, default_topology
from app.schemas import SimulationConfig
from app.sim.cables import simulate_cables
from app.sim.render import derive_rois, render_frame, render_scene
from app.sim.trajectory import (
    GroundTruthFrame,
    apply_gt_dropout,
    camera_pose,
    generate_trajectory,
    initial_configuration,
)

logger = logging.getLogger(__name__)


def simulation_topology(config: SimulationConfig) -> TensegrityTopology:
    return default_topology(config.rod_length, config.endcap_radius, config.rod_diameter)


def hidden_endcaps(config: SimulationConfig, frame: int) -> List[int]:
    return [window.endcap for window in config.occlusions if window.active(frame)]


class Simulator:
    """Synthetic RGB-D + cable dataset generator"""

    def __init__(self, config: Optional[SimulationConfig] = None, workers: Optional[int] = None):
        self.config = config or SimulationConfig()
        self.workers = workers or settings.RENDER_WORKERS
        self.topology = simulation_topology(self.config)
        self.camera_to_world: RigidPose = camera_pose(self.config)
        self.world_to_camera = self.camera_to_world.inverse()

    def trajectory(self) -> List[GroundTruthFrame]:
        start = initial_configuration(self.topology, self.config.base_radius, self.config.twist_deg)
        frames = generate_trajectory(self.config.trajectory, self.topology, start)
        return apply_gt_dropout(frames, self.config.gt_dropout_probability, self.config.seed)

    def observe(self, gt: GroundTruthFrame) -> ObservedFrame:
        frame = render_frame(
            gt,
            self.topology,
            self.config.intrinsics,
            self.camera_to_world,
            self.config.noise,
            self.config.seed,
            hidden_endcaps(self.config, gt.index),
            timestamp=gt.index / self.config.frame_rate,
        )
        frame.cable_measurements = simulate_cables(gt, self.topology, self.config.noise, self.config.seed)
        return frame

    def rois(self, gt: GroundTruthFrame):
        scene = render_scene(
            gt, self.topology, self.config.intrinsics, self.camera_to_world, hidden_endcaps(self.config, gt.index)
        )
        centers = self.world_to_camera.apply(gt.endcaps(self.topology))
        return derive_rois(scene.labels, self.topology, self.config.intrinsics, centers, self.config.roi_margin)

    def run(self, out: Union[str, Path], progress: bool = True) -> Dataset:
        """Render every frame and stream it to ``out``; frames are rendered in parallel chunks"""
        trajectory = self.trajectory()
        writer = DatasetWriter(
            out,
            self.topology,
            self.config.intrinsics,
            self.camera_to_world,
            self.config.frame_rate,
            len(trajectory),
        )
        writer.write_rois(self.rois(trajectory[0]))
        logger.info("simulating %d frames into %s with %d workers", len(trajectory), out, self.workers)

        chunk = max(1, 2 * self.workers)
        with ThreadPoolExecutor(max_workers=self.workers) as pool, tqdm(
            total=len(trajectory), desc="simulate", disable=not progress
        ) as bar:
            for begin in range(0, len(trajectory), chunk):
                batch = trajectory[begin : begin + chunk]
                for gt, frame in zip(batch, pool.map(self.observe, batch)):
                    writer.write_frame(frame)
                    camera_truth = gt.transformed(self.world_to_camera)
                    writer.write_ground_truth(gt.index, camera_truth.poses, camera_truth.available)
                    bar.update(1)
        return Dataset(out)


def simulate(config: SimulationConfig, out: Union[str, Path], workers: Optional[int] = None, progress: bool = True) -> Dataset:
    return Simulator(config, workers).run(out, progress)
