import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Type, TypeVar, Union

import numpy as np
from pydantic import BaseModel, ValidationError
from tqdm import tqdm

from app import __version__
from app.config import settings
from app.dataset import Dataset, TrajectoryWriter, read_trajectory
from app.exceptions import DatasetError, UsageError
from app.metrics import evaluate_trajectory
from app.plotting import plot_run
from app.schemas import FrameTiming, RunManifest, SimulationConfig, TimingBudget, TimingSummary, TrackingConfig, TrajectoryReport
from app.sim.pipeline import simulate
from app.tracker.controller import TrackingController

logger = logging.getLogger(__name__)

ConfigT = TypeVar("ConfigT", bound=BaseModel)
PathLike = Union[str, Path]

TRAJECTORY_FILE = "trajectory.jsonl"
MANIFEST_FILE = "manifest.json"
REPORT_FILE = "report.json"


def _field_errors(exc: ValidationError) -> str:
    return "; ".join(f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in exc.errors())


def load_config(model: Type[ConfigT], path: Optional[PathLike] = None, overrides: Optional[dict] = None) -> ConfigT:
    """Parse a JSON config file (or defaults) into ``model``; bad input is a usage error naming the field"""
    data: dict = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except OSError as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise UsageError(f"config {path} must hold a JSON object")
    for dotted, value in (overrides or {}).items():
        node = data
        *parents, leaf = dotted.split(".")
        for key in parents:
            node = node.setdefault(key, {})
        node[leaf] = value
    try:
        return model.model_validate(data)
    except ValidationError as exc:
        raise UsageError(f"invalid {model.__name__}: {_field_errors(exc)}") from exc


def summarize_timing(timings: List[FrameTiming], budget: TimingBudget) -> TimingSummary:
    transition = [ms for t in timings for ms in t.transition_ms]
    correction = [ms for t in timings for ms in t.correction_ms]
    frames = [t.total_ms for t in timings]
    summary = TimingSummary(
        mean_transition_ms=float(np.mean(transition)) if transition else 0.0,
        max_transition_ms=float(np.max(transition)) if transition else 0.0,
        mean_correction_ms=float(np.mean(correction)) if correction else 0.0,
        max_correction_ms=float(np.max(correction)) if correction else 0.0,
        mean_frame_ms=float(np.mean(frames)) if frames else 0.0,
    )
    summary.frame_hz = 1e3 / summary.mean_frame_ms if summary.mean_frame_ms > 0 else 0.0
    summary.within_budget = (
        summary.mean_transition_ms <= budget.transition_ms
        and summary.mean_correction_ms <= budget.correction_ms
        and (not frames or summary.frame_hz >= budget.frame_hz)
    )
    return summary


class PipelineService:
    """simulate → track → evaluate → plot over on-disk datasets and runs"""

    def __init__(self, progress: bool = True, workers: Optional[int] = None):
        self.progress = progress
        self.workers = workers or settings.RENDER_WORKERS

    def simulate(self, config: SimulationConfig, out: PathLike) -> Dataset:
        dataset = simulate(config, out, self.workers, self.progress)
        logger.info("dataset ready: %s (%d frames)", out, len(dataset))
        return dataset

    def track(
        self,
        dataset_path: PathLike,
        config: TrackingConfig,
        out: PathLike,
        max_frames: Optional[int] = None,
    ) -> RunManifest:
        dataset = Dataset(dataset_path)
        rois = dataset.rois()
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        trajectory_path = out / TRAJECTORY_FILE
        manifest_path = out / MANIFEST_FILE

        manifest = RunManifest(
            code_version=__version__,
            config=config,
            ablation=config.ablation,
            seeds={"tracker": config.tracker.seed, "ransac": config.tracker.ransac.seed},
            dataset=str(Path(dataset_path)),
            max_frames=max_frames,
            outputs={"trajectory": str(trajectory_path), "manifest": str(manifest_path)},
        )
        manifest_path.write_text(manifest.model_dump_json(indent=2))

        total = len(dataset) if max_frames is None else min(max_frames, len(dataset))
        try:
            controller = TrackingController(dataset.topology, dataset.intrinsics, config)
            with TrajectoryWriter(trajectory_path) as writer:
                stream = controller.run(dataset.frames(max_frames), rois)
                for record, timing in tqdm(stream, total=total, desc="track", disable=not self.progress):
                    writer.write(record)
                    manifest.frame_timings.append(timing)
        except Exception as exc:
            self._fail(manifest, manifest_path, trajectory_path, exc)
            raise

        manifest.timing = summarize_timing(manifest.frame_timings, config.timing_budget)
        manifest.status = "completed"
        manifest_path.write_text(manifest.model_dump_json(indent=2))
        if not manifest.timing.within_budget:
            logger.warning(
                "timing budget exceeded: transition %.2f ms, correction %.2f ms, %.1f Hz",
                manifest.timing.mean_transition_ms,
                manifest.timing.mean_correction_ms,
                manifest.timing.frame_hz,
            )
        logger.info("tracked %d frames into %s", len(manifest.frame_timings), trajectory_path)
        return manifest

    @staticmethod
    def _fail(manifest: RunManifest, manifest_path: Path, trajectory_path: Path, exc: Exception) -> None:
        logger.error("tracking failed: %s", exc)
        trajectory_path.unlink(missing_ok=True)
        manifest.status = "failed"
        manifest.error = str(exc)
        manifest.outputs = {"manifest": str(manifest_path)}
        manifest_path.write_text(manifest.model_dump_json(indent=2))

    def evaluate(self, trajectory_path: PathLike, dataset_path: PathLike, out: Optional[PathLike] = None) -> TrajectoryReport:
        dataset = Dataset(dataset_path)
        trajectory_path = Path(trajectory_path)
        if trajectory_path.is_dir():
            trajectory_path = trajectory_path / TRAJECTORY_FILE
        report = evaluate_trajectory(read_trajectory(trajectory_path), dataset)
        out = Path(out) if out is not None else trajectory_path.parent / REPORT_FILE
        try:
            out.write_text(report.model_dump_json(indent=2))
        except OSError as exc:
            raise DatasetError(f"cannot write {out}: {exc}", path=out) from exc
        return report

    def plot(self, trajectory_path: PathLike, dataset_path: PathLike, out: PathLike) -> Dict[str, List[Path]]:
        dataset = Dataset(dataset_path)
        trajectory_path = Path(trajectory_path)
        if trajectory_path.is_dir():
            trajectory_path = trajectory_path / TRAJECTORY_FILE
        return plot_run(read_trajectory(trajectory_path), dataset, out)


def report_table(report: TrajectoryReport) -> str:
    """Flat text table in cm / deg"""

    def cm(value: Optional[float]) -> str:
        return f"{100.0 * value:.2f}" if value is not None else "n/a"

    rows = [
        ("translation (cm)", cm(report.mean_translation_error), cm(report.std_translation_error)),
        ("axis (deg)", f"{report.mean_rotation_error:.2f}", f"{report.std_rotation_error:.2f}"),
        ("CoM (cm)", cm(report.mean_com_error), cm(report.std_com_error)),
        ("shape (cm)", cm(report.mean_shape_error), cm(report.std_shape_error)),
        ("measured shape (cm)", cm(report.mean_measured_shape_error), cm(report.std_measured_shape_error)),
    ]
    lines = [f"{'metric':<22}{'mean':>10}{'std':>10}"]
    lines += [f"{name:<22}{mean:>10}{std:>10}" for name, mean, std in rows]
    lines.append(f"{'2cm-5deg (%)':<22}{report.pct_within_2cm_5deg:>10.1f}")
    lines.append(f"frames evaluated: {report.frames_evaluated} (without ground truth: {report.frames_without_ground_truth})")
    return "\n".join(lines)
