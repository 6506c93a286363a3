from app.sim.cables import simulate_cables
from app.sim.pipeline import Simulator, simulate
from app.sim.render import derive_rois, render_frame, render_scene
from app.sim.trajectory import GroundTruthFrame, camera_pose, generate_trajectory, initial_configuration

__all__ = [
    "GroundTruthFrame",
    "Simulator",
    "camera_pose",
    "derive_rois",
    "generate_trajectory",
    "initial_configuration",
    "render_frame",
    "render_scene",
    "simulate",
    "simulate_cables",
]
