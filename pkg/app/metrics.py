"""Trajectory accuracy metrics: per-rod pose error, 2cm-5deg rate, CoM and shape error."""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.dataset import Dataset, trajectory_poses
from app.exceptions import UndefinedMetricError, UsageError
from app.geometry import RigidPose
from app.robot_model import all_endcap_positions
from app.schemas import FrameRecord, TrajectoryReport

logger = logging.getLogger(__name__)

TRANSLATION_THRESHOLD = 0.02
ROTATION_THRESHOLD_DEG = 5.0

Edge = Tuple[int, int]


@dataclass(frozen=True)
class PoseError:
    translation: float
    rotation_deg: float
    rod: int = 0
    frame: int = 0
    gt_available: bool = True


def rod_pose_error(estimate: RigidPose, truth: RigidPose, rod: int = 0, frame: int = 0) -> PoseError:
    """Center distance and unsigned main-axis angle"""
    translation = float(np.linalg.norm(estimate.translation - truth.translation))
    cosine = min(abs(float(estimate.axis @ truth.axis)), 1.0)
    return PoseError(translation, float(np.degrees(np.arccos(cosine))), rod, frame, True)


def within_2cm_5deg(errors: Sequence[PoseError]) -> float:
    evaluable = [e for e in errors if e.gt_available]
    if not evaluable:
        raise UndefinedMetricError("no rod poses with ground truth to evaluate")
    hits = sum(1 for e in evaluable if e.translation < TRANSLATION_THRESHOLD and e.rotation_deg < ROTATION_THRESHOLD_DEG)
    return 100.0 * hits / len(evaluable)


def com_error(estimates: Sequence[RigidPose], truths: Sequence[Optional[RigidPose]]) -> Optional[float]:
    """Distance between mean rod centers; None unless every rod has ground truth"""
    if any(t is None for t in truths):
        return None
    est = np.mean([p.translation for p in estimates], axis=0)
    gt = np.mean([p.translation for p in truths], axis=0)
    return float(np.linalg.norm(est - gt))


def shape_error(estimated_endcaps: np.ndarray, true_endcaps: np.ndarray, edges: Sequence[Edge]) -> float:
    """Mean absolute discrepancy of endcap-pair distances over ``edges``"""
    if len(edges) == 0:
        raise UndefinedMetricError("shape error needs at least one edge")
    est = np.asarray(estimated_endcaps, dtype=np.float64)
    gt = np.asarray(true_endcaps, dtype=np.float64)
    gaps = [abs(np.linalg.norm(est[i] - est[j]) - np.linalg.norm(gt[i] - gt[j])) for i, j in edges]
    return float(np.mean(gaps))


def measured_shape_error(cable_measurements: Dict[Edge, float], true_endcaps: np.ndarray, edges: Sequence[Edge]) -> Optional[float]:
    """Shape error of the raw cable readings; edges without a reading are skipped"""
    gt = np.asarray(true_endcaps, dtype=np.float64)
    gaps = []
    for i, j in edges:
        reading = cable_measurements.get((i, j), cable_measurements.get((j, i)))
        if reading is not None:
            gaps.append(abs(reading - np.linalg.norm(gt[i] - gt[j])))
    return float(np.mean(gaps)) if gaps else None


def _mean_std(values: List[float]) -> Tuple[Optional[float], Optional[float]]:
    if not values:
        return None, None
    array = np.asarray(values, dtype=np.float64)
    return float(array.mean()), float(array.std())


@dataclass
class FrameErrors:
    frame: int
    rods: List[Optional[PoseError]]
    com: Optional[float]
    shape: Optional[float]
    measured_shape: Optional[float]


def frame_errors(records: Sequence[FrameRecord], dataset: Dataset) -> List[FrameErrors]:
    if len(records) != len(dataset):
        raise UsageError(f"trajectory has {len(records)} frames, dataset has {len(dataset)}")
    topology = dataset.topology
    results = []
    for record in records:
        if record.frame >= len(dataset):
            raise UsageError(f"trajectory frame {record.frame} is outside the dataset")
        estimates = trajectory_poses(record)
        truths = dataset.ground_truth(record.frame)
        if truths is None:
            results.append(FrameErrors(record.frame, [None] * len(estimates), None, None, None))
            continue
        rods = [
            rod_pose_error(est, gt, rod, record.frame) if gt is not None else None
            for rod, (est, gt) in enumerate(zip(estimates, truths))
        ]
        com = com_error(estimates, truths)
        shape = measured = None
        if com is not None:
            true_endcaps = all_endcap_positions(truths, topology)
            shape = shape_error(all_endcap_positions(estimates, topology), true_endcaps, topology.cables)
            cables = {(c.i, c.j): c.length for c in dataset.cables(record.frame).cables}
            measured = measured_shape_error(cables, true_endcaps, topology.cables)
        results.append(FrameErrors(record.frame, rods, com, shape, measured))
    return results


def evaluate_trajectory(records: Sequence[FrameRecord], dataset: Dataset) -> TrajectoryReport:
    per_frame = frame_errors(records, dataset)
    rod_errors = [e for f in per_frame for e in f.rods if e is not None]
    if not rod_errors:
        raise UndefinedMetricError("dataset carries no ground truth for any tracked frame")

    trans_mean, trans_std = _mean_std([e.translation for e in rod_errors])
    rot_mean, rot_std = _mean_std([e.rotation_deg for e in rod_errors])
    com_mean, com_std = _mean_std([f.com for f in per_frame if f.com is not None])
    shape_mean, shape_std = _mean_std([f.shape for f in per_frame if f.shape is not None])
    measured_mean, measured_std = _mean_std([f.measured_shape for f in per_frame if f.measured_shape is not None])
    evaluated = sum(1 for f in per_frame if any(e is not None for e in f.rods))

    report = TrajectoryReport(
        mean_translation_error=trans_mean,
        std_translation_error=trans_std,
        mean_rotation_error=rot_mean,
        std_rotation_error=rot_std,
        pct_within_2cm_5deg=within_2cm_5deg(rod_errors),
        mean_com_error=com_mean,
        std_com_error=com_std,
        mean_shape_error=shape_mean,
        std_shape_error=shape_std,
        mean_measured_shape_error=measured_mean,
        std_measured_shape_error=measured_std,
        frames_evaluated=evaluated,
        frames_without_ground_truth=len(per_frame) - evaluated,
        com_frames_skipped=sum(1 for f in per_frame if f.com is None and any(e is not None for e in f.rods)),
        rod_evaluations=len(rod_errors),
    )
    logger.info(
        "evaluated %d frames: %.2f cm / %.2f deg, %.1f%% within 2cm-5deg",
        evaluated,
        100.0 * trans_mean,
        rot_mean,
        report.pct_within_2cm_5deg,
    )
    return report
