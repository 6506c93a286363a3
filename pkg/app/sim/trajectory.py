"""Kinematic ground-truth trajectories in the world frame (ground at z = 0)."""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from app.exceptions import InfeasibleTrajectoryError
from app.geometry import RigidPose, Segment, closest_points_between_segments
from app.robot_model import TensegrityTopology, all_endcap_positions, pose_from_endcaps
from app.schemas import SimulationConfig, TrajectorySpec

logger = logging.getLogger(__name__)

GROUND_MARGIN = 5e-4
FEASIBILITY_TOL = 1e-12
MAX_BISECTIONS = 100


@dataclass(eq=False)
class GroundTruthFrame:
    index: int
    poses: List[RigidPose]
    # False where the reference system lost the rod
    available: List[bool] = field(default_factory=list)

    def __post_init__(self):
        if not self.available:
            self.available = [True] * len(self.poses)

    def endcaps(self, topology: TensegrityTopology) -> np.ndarray:
        return all_endcap_positions(self.poses, topology)

    def cable_distances(self, topology: TensegrityTopology) -> Dict[Tuple[int, int], float]:
        endcaps = self.endcaps(topology)
        return {(i, j): float(np.linalg.norm(endcaps[i] - endcaps[j])) for i, j in topology.cables}

    def transformed(self, transform: RigidPose) -> "GroundTruthFrame":
        return GroundTruthFrame(self.index, [transform.compose(p) for p in self.poses], list(self.available))


def initial_configuration(topology: TensegrityTopology, base_radius: float = 0.12, twist_deg: float = 130.0) -> List[RigidPose]:
    """Standing prism: bottom endcaps on a triangle, top triangle twisted by ``twist_deg``"""
    chord = 2.0 * base_radius * np.sin(np.radians(twist_deg) / 2.0)
    if chord >= topology.rod_length:
        raise InfeasibleTrajectoryError("rod too short for the requested base radius and twist")
    height = np.sqrt(topology.rod_length**2 - chord**2)
    lift = topology.rod_diameter / 2.0 + GROUND_MARGIN

    poses = []
    for rod in range(topology.n_rods):
        phi = 2.0 * np.pi * rod / topology.n_rods
        bottom = np.array([base_radius * np.cos(phi), base_radius * np.sin(phi), lift])
        top_phi = phi + np.radians(twist_deg)
        top = np.array([base_radius * np.cos(top_phi), base_radius * np.sin(top_phi), lift + height])
        poses.append(pose_from_endcaps(top, bottom, Rotation.identity()))
    return poses


def min_rod_separation(poses: List[RigidPose], topology: TensegrityTopology) -> float:
    endcaps = all_endcap_positions(poses, topology)
    best = np.inf
    for a, b in topology.rod_pairs():
        ia, ja = topology.endcap_of_rod[a]
        ib, jb = topology.endcap_of_rod[b]
        _, _, dist = closest_points_between_segments(Segment(endcaps[ia], endcaps[ja]), Segment(endcaps[ib], endcaps[jb]))
        best = min(best, dist)
    return float(best)


def is_feasible(
    poses: List[RigidPose],
    previous: Optional[List[RigidPose]],
    topology: TensegrityTopology,
    max_displacement: float,
) -> bool:
    endcaps = all_endcap_positions(poses, topology)
    if endcaps[:, 2].min() < topology.rod_diameter / 2.0 - FEASIBILITY_TOL:
        return False
    if topology.n_rods > 1 and min_rod_separation(poses, topology) < topology.rod_diameter - FEASIBILITY_TOL:
        return False
    if previous is not None:
        moved = np.linalg.norm(endcaps - all_endcap_positions(previous, topology), axis=1)
        if moved.max() > max_displacement + FEASIBILITY_TOL:
            return False
    return True


def rest_on_ground(poses: List[RigidPose], topology: TensegrityTopology) -> List[RigidPose]:
    """Shift vertically so the lowest endcap sits just above the ground"""
    lowest = all_endcap_positions(poses, topology)[:, 2].min()
    shift = RigidPose(Rotation.identity(), np.array([0.0, 0.0, topology.rod_diameter / 2.0 + GROUND_MARGIN - lowest]))
    return [shift.compose(p) for p in poses]


def _roll_motion(
    spec: TrajectorySpec, topology: TensegrityTopology, frame: int, offset: float = 0.0
) -> Callable[[List[RigidPose], float], List[RigidPose]]:
    heading = np.radians(spec.heading_deg)
    forward = np.array([np.cos(heading), np.sin(heading), 0.0])
    side = np.array([-np.sin(heading), np.cos(heading), 0.0])
    phase = 2.0 * np.pi / spec.wobble_period
    wobble = np.radians(spec.wobble_deg) * (np.sin(phase * frame + offset) - np.sin(phase * (frame - 1) + offset))

    def motion(poses: List[RigidPose], fraction: float) -> List[RigidPose]:
        centroid = all_endcap_positions(poses, topology).mean(axis=0)
        spin = Rotation.from_rotvec(side * fraction * spec.step / spec.rolling_radius) * Rotation.from_rotvec(
            forward * fraction * wobble
        )
        about = RigidPose(spin, centroid - spin.apply(centroid) + fraction * spec.step * forward)
        return rest_on_ground([about.compose(p) for p in poses], topology)

    return motion


def _script_motion(spec: TrajectorySpec, frame: int) -> Callable[[List[RigidPose], float], List[RigidPose]]:
    step = spec.script[frame - 1] if frame - 1 < len(spec.script) else []

    def motion(poses: List[RigidPose], fraction: float) -> List[RigidPose]:
        moved = list(poses)
        for rod, twist in enumerate(step[: len(poses)]):
            twist = np.asarray(twist, dtype=np.float64)
            spin = Rotation.from_rotvec(fraction * twist[:3])
            pose = poses[rod]
            moved[rod] = RigidPose(spin * pose.rotation, pose.translation + fraction * twist[3:])
        return moved

    return motion


def generate_trajectory(
    spec: TrajectorySpec,
    topology: TensegrityTopology,
    start: Optional[List[RigidPose]] = None,
) -> List[GroundTruthFrame]:
    """Feasible world-frame pose sequence; oversized steps are shrunk by bisection.

    The seed sets the phase of the roll wobble.
    """
    poses = start if start is not None else initial_configuration(topology)
    if spec.gait == "roll":
        heading = np.radians(spec.heading_deg)
        back = -0.5 * spec.step * (spec.frames - 1) * np.array([np.cos(heading), np.sin(heading), 0.0])
        poses = [RigidPose(Rotation.identity(), back).compose(p) for p in poses]
    if not is_feasible(poses, None, topology, spec.max_displacement):
        raise InfeasibleTrajectoryError("initial configuration violates rod separation or ground clearance")

    offset = float(np.random.default_rng(spec.seed).uniform(0.0, 2.0 * np.pi))
    frames = [GroundTruthFrame(0, list(poses))]
    for frame in range(1, spec.frames):
        if spec.gait == "static":
            frames.append(GroundTruthFrame(frame, list(poses)))
            continue
        motion = _roll_motion(spec, topology, frame, offset) if spec.gait == "roll" else _script_motion(spec, frame)

        candidate = motion(poses, 1.0)
        if not is_feasible(candidate, poses, topology, spec.max_displacement):
            low, high = 0.0, 1.0
            for _ in range(MAX_BISECTIONS):
                mid = 0.5 * (low + high)
                if is_feasible(motion(poses, mid), poses, topology, spec.max_displacement):
                    low = mid
                else:
                    high = mid
            if low == 0.0:
                raise InfeasibleTrajectoryError(f"frame {frame}: no feasible fraction of the scripted step")
            logger.debug("frame %d: step shrunk to %.3g of the script", frame, low)
            candidate = motion(poses, low)
        poses = candidate
        frames.append(GroundTruthFrame(frame, list(poses)))
    return frames


def camera_pose(config: SimulationConfig) -> RigidPose:
    """Camera → world for an overhead camera looking straight down"""
    return RigidPose(Rotation.from_matrix(np.diag([1.0, -1.0, -1.0])), np.array([0.0, 0.0, config.camera_height]))


def apply_gt_dropout(frames: List[GroundTruthFrame], probability: float, seed: int) -> List[GroundTruthFrame]:
    if probability <= 0:
        return frames
    for gt in frames:
        rng = np.random.default_rng(np.random.SeedSequence([seed, gt.index, 3]))
        gt.available = [bool(x) for x in rng.random(len(gt.poses)) >= probability]
    return frames
