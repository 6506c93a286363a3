import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from app.exceptions import NumericalFailureError
from app.geometry import RigidPose
from app.robot_model import TensegrityTopology, all_endcap_positions, pose_from_endcaps
from app.schemas import SolverConfig
from app.solver import NlpProblem, SolverResult, minimize_constrained
from app.tracker.constraints import ConstraintSet

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class CorrectionResult:
    endcaps: np.ndarray
    solver: SolverResult
    binary_weights: np.ndarray
    gated_cables: List[Tuple[int, int]] = field(default_factory=list)
    rejected_endcaps: List[int] = field(default_factory=list)


def correction_objective(
    anchors: np.ndarray,
    unary: np.ndarray,
    cables: List[Tuple[int, int]],
    lengths: np.ndarray,
    binary: np.ndarray,
):
    """Σ w_i |q_i - q̂_i|² + Σ w_ij (|q_i - q_j| - l_ij)² over stacked endcaps"""
    anchors = np.asarray(anchors, dtype=np.float64).reshape(-1, 3)
    unary = np.asarray(unary, dtype=np.float64)
    target = anchors.reshape(-1)
    per_coord = np.repeat(unary, 3)

    def fn(x: np.ndarray):
        diff = x - target
        value = float(np.sum(per_coord * diff * diff))
        grad = 2.0 * per_coord * diff
        for (i, j), length, w in zip(cables, lengths, binary):
            if w == 0.0:
                continue
            d = x[3 * i : 3 * i + 3] - x[3 * j : 3 * j + 3]
            dist = np.linalg.norm(d)
            residual = dist - length
            value += w * residual * residual
            g = 2.0 * w * residual * d / (dist + 1e-12)
            grad[3 * i : 3 * i + 3] += g
            grad[3 * j : 3 * j + 3] -= g
        return value, grad

    return fn


def cable_lengths(measurements: Dict[Tuple[int, int], float], topology: TensegrityTopology) -> Tuple[np.ndarray, np.ndarray]:
    """Measured length per cable and a mask of cables that have a reading"""
    lengths = np.zeros(len(topology.cables))
    present = np.zeros(len(topology.cables), dtype=bool)
    for k, (i, j) in enumerate(topology.cables):
        value = measurements.get((i, j), measurements.get((j, i)))
        if value is not None and value > 0:
            lengths[k] = value
            present[k] = True
    return lengths, present


def build_correction_problem(
    anchors: np.ndarray,
    measurements: Dict[Tuple[int, int], float],
    unary: np.ndarray,
    binary: np.ndarray,
    constraints: ConstraintSet,
    topology: TensegrityTopology,
) -> NlpProblem:
    lengths, present = cable_lengths(measurements, topology)
    binary = np.where(present, binary, 0.0)
    equalities, inequalities = constraints.evaluators()
    return NlpProblem(
        dimension=3 * topology.n_endcaps,
        objective=correction_objective(anchors, unary, topology.cables, lengths, binary),
        initial_point=np.asarray(anchors, dtype=np.float64).reshape(-1),
        equalities=equalities,
        inequalities=inequalities,
    )


def gate_cables(
    anchors: np.ndarray,
    measurements: Dict[Tuple[int, int], float],
    binary: np.ndarray,
    topology: TensegrityTopology,
    gate: Optional[float],
) -> Tuple[np.ndarray, List[Tuple[int, int]]]:
    lengths, present = cable_lengths(measurements, topology)
    binary = np.where(present, np.asarray(binary, dtype=np.float64), 0.0)
    gated = []
    if gate is None:
        return binary, gated
    for k, (i, j) in enumerate(topology.cables):
        if present[k] and abs(np.linalg.norm(anchors[i] - anchors[j]) - lengths[k]) > gate:
            binary[k] = 0.0
            gated.append((i, j))
    return binary, gated


def correction_step(
    poses: List[RigidPose],
    cable_measurements: Dict[Tuple[int, int], float],
    constraints: ConstraintSet,
    weights: Tuple[np.ndarray, np.ndarray],
    topology: TensegrityTopology,
    solver_config: Optional[SolverConfig] = None,
    cable_gate: Optional[float] = None,
    max_jump: Optional[float] = None,
    context: Optional[dict] = None,
) -> CorrectionResult:
    """Jointly re-place all endcaps, warm-started at the transition estimate"""
    anchors = all_endcap_positions(poses, topology)
    unary, binary = weights
    binary, gated = gate_cables(anchors, cable_measurements, binary, topology, cable_gate)
    if gated:
        logger.debug("cables %s disagree with the estimate beyond the gate; ignored", gated)

    problem = build_correction_problem(anchors, cable_measurements, unary, binary, constraints, topology)
    try:
        result = minimize_constrained(problem, solver_config)
    except NumericalFailureError as exc:
        raise exc.with_context(**(context or {})) from exc

    endcaps = result.x.reshape(-1, 3).copy()
    rejected = []
    if max_jump is not None:
        moved = np.linalg.norm(endcaps - anchors, axis=1)
        for endcap in np.flatnonzero(moved > max_jump):
            endcaps[endcap] = anchors[endcap]
            rejected.append(int(endcap))
        if rejected:
            logger.warning("correction moved endcaps %s more than %.3f m; kept transition estimate", rejected, max_jump)

    return CorrectionResult(endcaps=endcaps, solver=result, binary_weights=binary, gated_cables=gated, rejected_endcaps=rejected)


def poses_from_endcaps(endcaps: np.ndarray, previous: List[RigidPose], topology: TensegrityTopology) -> List[RigidPose]:
    return [
        pose_from_endcaps(endcaps[i], endcaps[j], previous[rod].rotation, topology)
        for rod, (i, j) in enumerate(topology.endcap_of_rod)
    ]
