"""On-disk dataset and trajectory formats.

Layout of a dataset root::

    meta.json                 DatasetMeta
    rois.json                 frame-0 regions of interest, one per endcap
    frames/%06d.depthhsv      little-endian grid, per pixel f4 depth + 3×u1 HSV
    frames/%06d.cables        CableFile
    gt/%06d.poses             GroundTruthFile (camera frame), optional per frame
"""

import json
import logging
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ValidationError

from app.exceptions import DatasetError
from app.geometry import RigidPose
from app.perception import CameraIntrinsics, ObservedFrame, Roi
from app.robot_model import TensegrityTopology, all_endcap_positions
from app.schemas import (
    FORMAT_VERSION,
    CableFile,
    CableReading,
    DatasetMeta,
    FrameRecord,
    GroundTruthFile,
    PoseRecord,
    RoiFile,
)
from app.tracker.base import pose_records

logger = logging.getLogger(__name__)

FRAME_DTYPE = np.dtype([("depth", "<f4"), ("hsv", "u1", (3,))])
FRAME_SUFFIX = ".depthhsv"
CABLE_SUFFIX = ".cables"
GT_SUFFIX = ".poses"

PathLike = Union[str, Path]


def frame_name(index: int, suffix: str) -> str:
    return f"{index:06d}{suffix}"


def pose_record(pose: RigidPose) -> PoseRecord:
    return PoseRecord(quaternion_wxyz=pose.quaternion_wxyz().tolist(), translation=pose.translation.tolist())


def pose_from_record(record: PoseRecord) -> RigidPose:
    return RigidPose.from_wxyz(record.quaternion_wxyz, record.translation)


def _write_json(path: Path, model: BaseModel) -> None:
    try:
        path.write_text(model.model_dump_json(indent=2))
    except OSError as exc:
        raise DatasetError(f"cannot write {path}: {exc}", path=path) from exc


def _read_json(path: Path, model: type, frame: Optional[int] = None):
    try:
        return model.model_validate_json(path.read_text())
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}", path=path, frame=frame) from exc
    except ValidationError as exc:
        raise DatasetError(f"malformed {path.name}: {exc}", path=path, frame=frame) from exc


def encode_frame(frame: ObservedFrame) -> np.ndarray:
    grid = np.empty(frame.depth.shape, dtype=FRAME_DTYPE)
    grid["depth"] = frame.depth
    grid["hsv"] = frame.hsv
    return grid


class DatasetWriter:
    """Streams frames to disk; meta and RoIs are written up front"""

    def __init__(
        self,
        root: PathLike,
        topology: TensegrityTopology,
        intrinsics: CameraIntrinsics,
        camera_pose: RigidPose,
        frame_rate: float,
        frame_count: int,
        has_ground_truth: bool = True,
    ):
        self.root = Path(root)
        self.topology = topology
        self.intrinsics = intrinsics
        self.meta = DatasetMeta(
            topology=topology,
            intrinsics=intrinsics,
            camera_pose=pose_record(camera_pose),
            frame_rate=frame_rate,
            frame_count=frame_count,
            has_ground_truth=has_ground_truth,
        )
        try:
            (self.root / "frames").mkdir(parents=True, exist_ok=True)
            if has_ground_truth:
                (self.root / "gt").mkdir(exist_ok=True)
        except OSError as exc:
            raise DatasetError(f"cannot create dataset at {self.root}: {exc}", path=self.root) from exc
        _write_json(self.root / "meta.json", self.meta)

    def write_rois(self, rois: List[Roi]) -> None:
        if len(rois) != self.topology.n_endcaps:
            raise DatasetError(f"expected {self.topology.n_endcaps} RoIs, got {len(rois)}", path=self.root)
        _write_json(self.root / "rois.json", RoiFile(rois=rois))

    def write_frame(self, frame: ObservedFrame) -> None:
        frame.check_intrinsics(self.intrinsics)
        path = self.root / "frames" / frame_name(frame.index, FRAME_SUFFIX)
        try:
            encode_frame(frame).tofile(path)
        except OSError as exc:
            raise DatasetError(f"cannot write {path}: {exc}", path=path, frame=frame.index) from exc
        cables = CableFile(
            frame=frame.index,
            timestamp=frame.timestamp,
            cables=[CableReading(i=i, j=j, length=length) for (i, j), length in sorted(frame.cable_measurements.items())],
        )
        _write_json(self.root / "frames" / frame_name(frame.index, CABLE_SUFFIX), cables)

    def write_ground_truth(self, index: int, poses: List[RigidPose], available: Optional[List[bool]] = None) -> None:
        """Camera-frame poses; rods flagged unavailable are written as null"""
        available = available if available is not None else [True] * len(poses)
        records = pose_records(poses, self.topology)
        rods = [record if ok else None for record, ok in zip(records, available)]
        _write_json(self.root / "gt" / frame_name(index, GT_SUFFIX), GroundTruthFile(frame=index, rods=rods))


def write_dataset(
    root: PathLike,
    frames: Iterable[ObservedFrame],
    ground_truth: Optional[Iterable[Tuple[List[RigidPose], List[bool]]]],
    topology: TensegrityTopology,
    intrinsics: CameraIntrinsics,
    rois: List[Roi],
    camera_pose: RigidPose,
    frame_rate: float = 10.0,
) -> "Dataset":
    frames = list(frames)
    truth = list(ground_truth) if ground_truth is not None else None
    if truth is not None and len(truth) != len(frames):
        raise DatasetError(f"{len(frames)} frames but {len(truth)} ground-truth entries", path=root)
    writer = DatasetWriter(root, topology, intrinsics, camera_pose, frame_rate, len(frames), truth is not None)
    writer.write_rois(rois)
    for k, frame in enumerate(frames):
        writer.write_frame(frame)
        if truth is not None:
            poses, available = truth[k]
            writer.write_ground_truth(frame.index, poses, available)
    return Dataset(root)


class Dataset:
    """Validated read access to a dataset root"""

    def __init__(self, root: PathLike):
        self.root = Path(root)
        meta_path = self.root / "meta.json"
        if not meta_path.is_file():
            raise DatasetError(f"no meta.json in {self.root}", path=self.root)
        self.meta: DatasetMeta = _read_json(meta_path, DatasetMeta)
        major = self.meta.format_version.split(".")[0]
        if major != FORMAT_VERSION.split(".")[0]:
            raise DatasetError(f"unsupported dataset format {self.meta.format_version}", path=meta_path)
        self._check_frames()

    def _check_frames(self) -> None:
        found = sorted(int(p.stem) for p in (self.root / "frames").glob(f"*{FRAME_SUFFIX}") if p.stem.isdigit())
        if found != list(range(self.meta.frame_count)):
            missing = sorted(set(range(self.meta.frame_count)) - set(found))
            raise DatasetError(
                f"frame files are not contiguous from 0 (expected {self.meta.frame_count}, missing {missing[:5]})",
                path=self.root / "frames",
                frame=missing[0] if missing else None,
            )

    @property
    def topology(self) -> TensegrityTopology:
        return self.meta.topology

    @property
    def intrinsics(self) -> CameraIntrinsics:
        return self.meta.intrinsics

    @property
    def camera_pose(self) -> RigidPose:
        return pose_from_record(self.meta.camera_pose)

    def __len__(self) -> int:
        return self.meta.frame_count

    def rois(self) -> List[Roi]:
        path = self.root / "rois.json"
        if not path.is_file():
            raise DatasetError(f"no rois.json in {self.root}", path=self.root)
        rois = _read_json(path, RoiFile).rois
        if len(rois) != self.topology.n_endcaps:
            raise DatasetError(f"expected {self.topology.n_endcaps} RoIs, got {len(rois)}", path=path)
        return rois

    def frame_payload(self, index: int) -> np.ndarray:
        path = self.root / "frames" / frame_name(index, FRAME_SUFFIX)
        expected = self.intrinsics.width * self.intrinsics.height
        try:
            grid = np.fromfile(path, dtype=FRAME_DTYPE)
        except OSError as exc:
            raise DatasetError(f"cannot read {path}: {exc}", path=path, frame=index) from exc
        if grid.size != expected or path.stat().st_size != expected * FRAME_DTYPE.itemsize:
            raise DatasetError(f"frame {index} is corrupt: {path.stat().st_size} bytes", path=path, frame=index)
        return grid.reshape(self.intrinsics.height, self.intrinsics.width)

    def cables(self, index: int) -> CableFile:
        return _read_json(self.root / "frames" / frame_name(index, CABLE_SUFFIX), CableFile, frame=index)

    def frame(self, index: int) -> ObservedFrame:
        if not 0 <= index < len(self):
            raise DatasetError(f"frame {index} out of range", path=self.root, frame=index)
        grid = self.frame_payload(index)
        cables = self.cables(index)
        return ObservedFrame(
            depth=grid["depth"].copy(),
            hsv=grid["hsv"].copy(),
            cable_measurements={(c.i, c.j): c.length for c in cables.cables},
            timestamp=cables.timestamp,
            index=index,
        )

    def frames(self, max_frames: Optional[int] = None) -> Iterator[ObservedFrame]:
        count = len(self) if max_frames is None else min(max_frames, len(self))
        for index in range(count):
            yield self.frame(index)

    def ground_truth_file(self, index: int) -> Optional[GroundTruthFile]:
        path = self.root / "gt" / frame_name(index, GT_SUFFIX)
        if not path.is_file():
            return None
        return _read_json(path, GroundTruthFile, frame=index)

    def ground_truth(self, index: int) -> Optional[List[Optional[RigidPose]]]:
        """Camera-frame rod poses; None for the frame or for individual rods without truth"""
        record = self.ground_truth_file(index)
        if record is None:
            return None
        return [pose_from_record(rod) if rod is not None else None for rod in record.rods]


def write_trajectory(path: PathLike, records: Iterable[FrameRecord]) -> int:
    """One FrameRecord per line; returns the number written"""
    count = 0
    path = Path(path)
    try:
        with path.open("w") as fh:
            for record in records:
                fh.write(record.model_dump_json())
                fh.write("\n")
                count += 1
    except OSError as exc:
        raise DatasetError(f"cannot write {path}: {exc}", path=path) from exc
    return count


class TrajectoryWriter:
    """Line-at-a-time variant used while tracking"""

    def __init__(self, path: PathLike):
        self.path = Path(path)
        self._fh = self.path.open("w")
        self.count = 0

    def write(self, record: FrameRecord) -> None:
        self._fh.write(record.model_dump_json())
        self._fh.write("\n")
        self._fh.flush()
        self.count += 1

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "TrajectoryWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_trajectory(path: PathLike) -> List[FrameRecord]:
    path = Path(path)
    records = []
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}", path=path) from exc
    for number, line in enumerate(lines):
        if not line.strip():
            continue
        try:
            records.append(FrameRecord.model_validate(json.loads(line)))
        except (ValueError, ValidationError) as exc:
            raise DatasetError(f"{path.name} line {number + 1} is malformed: {exc}", path=path) from exc
    return records


def trajectory_poses(record: FrameRecord) -> List[RigidPose]:
    return [pose_from_record(rod) for rod in sorted(record.rods, key=lambda r: r.rod)]


def trajectory_endcaps(record: FrameRecord, topology: TensegrityTopology) -> np.ndarray:
    return all_endcap_positions(trajectory_poses(record), topology)


def cable_series(dataset: Dataset) -> Dict[Tuple[int, int], np.ndarray]:
    """Measured cable length per frame, NaN where a reading is missing"""
    series = {edge: np.full(len(dataset), np.nan) for edge in dataset.topology.cables}
    for index in range(len(dataset)):
        for reading in dataset.cables(index).cables:
            key = (reading.i, reading.j) if (reading.i, reading.j) in series else (reading.j, reading.i)
            if key in series:
                series[key][index] = reading.length
    return series
