from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.robot_model import LOCAL_FRAME_CONVENTION, TensegrityTopology

FORMAT_VERSION = "1.0"


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


# ---------------------------------------------------------------- camera / frames


class CameraIntrinsics(StrictModel):
    fx: float = Field(gt=0.0)
    fy: float = Field(gt=0.0)
    cx: float
    cy: float
    width: int = Field(gt=0)
    height: int = Field(gt=0)

    @model_validator(mode="after")
    def _principal_point_in_image(self) -> "CameraIntrinsics":
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        return self


class Roi(StrictModel):
    """Inclusive pixel box"""

    u_min: int = Field(ge=0)
    v_min: int = Field(ge=0)
    u_max: int = Field(ge=0)
    v_max: int = Field(ge=0)

    @model_validator(mode="after")
    def _nonempty(self) -> "Roi":
        if self.u_max < self.u_min or self.v_max < self.v_min:
            raise ValueError("roi is empty")
        return self

    def contains(self, u, v):
        return (u >= self.u_min) & (u <= self.u_max) & (v >= self.v_min) & (v <= self.v_max)

    def within(self, intrinsics: CameraIntrinsics) -> bool:
        return self.u_max < intrinsics.width and self.v_max < intrinsics.height


class PoseRecord(StrictModel):
    quaternion_wxyz: List[float] = Field(min_length=4, max_length=4)
    translation: List[float] = Field(min_length=3, max_length=3)


class RodPoseRecord(PoseRecord):
    rod: int = Field(ge=0)
    endcaps: Optional[List[List[float]]] = None


# ---------------------------------------------------------------- tracker configs


class DmaxConfig(StrictModel):
    initial: float = Field(default=0.10, gt=0.0)
    decay: float = Field(default=0.7, gt=0.0, le=1.0)
    floor: float = Field(default=0.01, gt=0.0)


class WeightConfig(StrictModel):
    unary_floor: float = Field(default=0.1, ge=0.0, le=1.0)
    binary_scale: float = Field(default=0.25, ge=0.0)
    high_ratio: float = Field(default=0.5, ge=0.0, le=1.0)
    low_ratio: float = Field(default=0.2, ge=0.0, le=1.0)


class RansacConfig(StrictModel):
    iterations: int = Field(default=200, ge=1)
    inlier_threshold: float = Field(default=0.01, gt=0.0)
    min_inlier_ratio: float = Field(default=0.1, ge=0.0, le=1.0)
    max_points: int = Field(default=20000, ge=3)
    seed: int = 0


class SolverConfig(StrictModel):
    max_iters: int = Field(default=100, ge=1)
    eq_tol: float = Field(default=1e-6, gt=0.0)
    ineq_tol: float = Field(default=1e-6, gt=0.0)
    kkt_tol: float = Field(default=1e-5, gt=0.0)


class TrackerConfig(StrictModel):
    max_outer_iterations: int = Field(default=6, ge=1)
    dmax: DmaxConfig = Field(default_factory=DmaxConfig)
    dummy_count: int = Field(default=50, ge=0)
    weights: WeightConfig = Field(default_factory=WeightConfig)
    enable_rod_constraints: bool = True
    enable_ground_constraint: bool = True
    enable_rod_length_constraint: bool = True
    enable_binary_loss: bool = True
    enable_correction: bool = True
    rigid_body_mode: bool = False
    post_hoc_correction: bool = False
    static_weights: bool = False
    symmetric_correspondences: bool = False
    cable_outlier_gate: Optional[float] = Field(default=0.10, gt=0.0)
    max_correction_jump: Optional[float] = Field(default=0.10, gt=0.0)
    convergence_tol: float = Field(default=1e-4, gt=0.0)
    samples_per_endcap: int = Field(default=200, ge=100)
    min_init_points: int = Field(default=5, ge=1)
    ransac: RansacConfig = Field(default_factory=RansacConfig)
    seed: int = 0


ABLATIONS: Dict[str, Dict[str, object]] = {
    "proposed": {},
    # registration with dummy points only
    "naive_icp": {
        "enable_correction": False,
        "enable_binary_loss": False,
        "enable_rod_constraints": False,
        "enable_ground_constraint": False,
        "enable_rod_length_constraint": False,
    },
    "rigid_body": {"rigid_body_mode": True},
    "post_hoc_correction": {"post_hoc_correction": True},
    "no_constraints": {"enable_rod_constraints": False, "enable_ground_constraint": False},
    "no_rod_constraints": {"enable_rod_constraints": False},
    "static_weights": {"static_weights": True},
}


def apply_ablation(config: TrackerConfig, name: Optional[str]) -> TrackerConfig:
    if name is None:
        return config
    if name not in ABLATIONS:
        raise ValueError(f"unknown ablation '{name}', expected one of {sorted(ABLATIONS)}")
    return config.model_copy(update=ABLATIONS[name])


class TimingBudget(StrictModel):
    transition_ms: float = Field(default=5.0, gt=0.0)
    correction_ms: float = Field(default=20.0, gt=0.0)
    frame_hz: float = Field(default=10.0, gt=0.0)


class TrackingConfig(StrictModel):
    tracker: TrackerConfig = Field(default_factory=TrackerConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    timing_budget: TimingBudget = Field(default_factory=TimingBudget)
    ablation: Optional[str] = None

    @field_validator("ablation")
    @classmethod
    def _known_ablation(cls, value: Optional[str]) -> Optional[str]:
        if value is not None and value not in ABLATIONS:
            raise ValueError(f"unknown ablation '{value}'")
        return value

    def effective_tracker(self) -> TrackerConfig:
        return apply_ablation(self.tracker, self.ablation)


# ---------------------------------------------------------------- simulation configs


class SimNoise(StrictModel):
    depth_sigma: float = Field(default=0.005, ge=0.0)
    misalignment_probability: float = Field(default=0.1, ge=0.0, le=1.0)
    misalignment_pixels: int = Field(default=2, ge=0)
    cable_sigma: float = Field(default=0.01, ge=0.0)
    slack_probability: float = Field(default=0.05, ge=0.0, le=1.0)
    slack_bias: float = Field(default=0.02)
    dropout_probability: float = Field(default=0.05, ge=0.0, le=1.0)

    @classmethod
    def noise_free(cls) -> "SimNoise":
        return cls(
            depth_sigma=0.0,
            misalignment_probability=0.0,
            cable_sigma=0.0,
            slack_probability=0.0,
            dropout_probability=0.0,
        )


class TrajectorySpec(StrictModel):
    frames: int = Field(default=100, ge=1)
    gait: Literal["static", "roll", "script"] = "roll"
    step: float = Field(default=0.01, ge=0.0)
    heading_deg: float = 0.0
    rolling_radius: float = Field(default=0.3, gt=0.0)
    wobble_deg: float = Field(default=3.0, ge=0.0)
    wobble_period: int = Field(default=20, ge=1)
    max_displacement: float = Field(default=0.02, gt=0.0)
    # per frame, per rod: [rx, ry, rz, tx, ty, tz] applied about the rod center
    script: List[List[List[float]]] = Field(default_factory=list)
    seed: int = 0

    @field_validator("script")
    @classmethod
    def _six_dof_steps(cls, value: List[List[List[float]]]) -> List[List[List[float]]]:
        for frame in value:
            for twist in frame:
                if len(twist) != 6:
                    raise ValueError("script twists must have 6 components")
        return value


class OcclusionWindow(StrictModel):
    endcap: int = Field(ge=0)
    start_frame: int = Field(ge=0)
    end_frame: int = Field(ge=0)

    def active(self, frame: int) -> bool:
        return self.start_frame <= frame < self.end_frame


class SimulationConfig(StrictModel):
    rod_length: float = Field(default=0.36, gt=0.0)
    endcap_radius: float = Field(default=0.0175, gt=0.0)
    rod_diameter: float = Field(default=0.035, gt=0.0)
    base_radius: float = Field(default=0.12, gt=0.0)
    twist_deg: float = 130.0
    intrinsics: CameraIntrinsics = Field(
        default_factory=lambda: CameraIntrinsics(fx=600.0, fy=600.0, cx=640.0, cy=360.0, width=1280, height=720)
    )
    camera_height: float = Field(default=1.2, gt=0.0)
    frame_rate: float = Field(default=10.0, gt=0.0)
    trajectory: TrajectorySpec = Field(default_factory=TrajectorySpec)
    noise: SimNoise = Field(default_factory=SimNoise)
    occlusions: List[OcclusionWindow] = Field(default_factory=list)
    gt_dropout_probability: float = Field(default=0.0, ge=0.0, le=1.0)
    roi_margin: int = Field(default=8, ge=0)
    seed: int = 0


# ---------------------------------------------------------------- dataset files


class DatasetMeta(StrictModel):
    format_version: str = FORMAT_VERSION
    topology: TensegrityTopology
    intrinsics: CameraIntrinsics
    # camera frame → world frame (ground plane z = 0)
    camera_pose: PoseRecord
    frame_rate: float = Field(gt=0.0)
    frame_count: int = Field(ge=1)
    local_frame_convention: str = LOCAL_FRAME_CONVENTION
    has_ground_truth: bool = True
    hsv_encoding: str = "h: 0-255 over 0-360 deg; s, v: 0-255 over [0, 1]"


class RoiFile(StrictModel):
    rois: List[Roi]


class CableReading(StrictModel):
    i: int = Field(ge=0)
    j: int = Field(ge=0)
    length: float = Field(gt=0.0)


class CableFile(StrictModel):
    frame: int = Field(ge=0)
    timestamp: float
    cables: List[CableReading]


class GroundTruthFile(StrictModel):
    frame: int = Field(ge=0)
    # None where the rod was not visible to the reference system
    rods: List[Optional[RodPoseRecord]]


# ---------------------------------------------------------------- tracker outputs


class ConstraintViolation(StrictModel):
    rod_length: float = 0.0
    ground: float = 0.0
    separation: float = 0.0


class IterationDiagnostics(StrictModel):
    iteration: int
    d_max: float
    objective: Optional[float] = None
    solver_iterations: int = 0
    solver_converged: Optional[bool] = None
    displacement: float = 0.0


class FrameDiagnostics(StrictModel):
    iterations: List[IterationDiagnostics] = Field(default_factory=list)
    visibility: List[float] = Field(default_factory=list)
    unary_weights: List[float] = Field(default_factory=list)
    binary_weights: List[float] = Field(default_factory=list)
    gated_cables: List[Tuple[int, int]] = Field(default_factory=list)
    rejected_endcaps: List[int] = Field(default_factory=list)
    constrained_pairs: List[Tuple[int, int]] = Field(default_factory=list)
    violation: ConstraintViolation = Field(default_factory=ConstraintViolation)
    ground_detected: bool = False


class FrameTiming(StrictModel):
    frame: int
    transition_ms: List[float] = Field(default_factory=list)
    correction_ms: List[float] = Field(default_factory=list)
    total_ms: float = 0.0


class FrameRecord(StrictModel):
    frame: int = Field(ge=0)
    rods: List[RodPoseRecord]
    diagnostics: FrameDiagnostics


class TimingSummary(StrictModel):
    mean_transition_ms: float = 0.0
    max_transition_ms: float = 0.0
    mean_correction_ms: float = 0.0
    max_correction_ms: float = 0.0
    mean_frame_ms: float = 0.0
    frame_hz: float = 0.0
    within_budget: bool = True


class RunManifest(StrictModel):
    status: Literal["running", "completed", "failed"] = "running"
    code_version: str
    config: TrackingConfig
    ablation: Optional[str] = None
    seeds: Dict[str, int] = Field(default_factory=dict)
    dataset: str
    max_frames: Optional[int] = None
    outputs: Dict[str, str] = Field(default_factory=dict)
    frame_timings: List[FrameTiming] = Field(default_factory=list)
    timing: Optional[TimingSummary] = None
    error: Optional[str] = None


class TrajectoryReport(StrictModel):
    mean_translation_error: float
    std_translation_error: float
    mean_rotation_error: float
    std_rotation_error: float
    pct_within_2cm_5deg: float = Field(ge=0.0, le=100.0)
    mean_com_error: Optional[float] = None
    std_com_error: Optional[float] = None
    mean_shape_error: Optional[float] = None
    std_shape_error: Optional[float] = None
    mean_measured_shape_error: Optional[float] = None
    std_measured_shape_error: Optional[float] = None
    shape_error_kind: str = "mean_absolute"
    frames_evaluated: int
    frames_without_ground_truth: int = 0
    com_frames_skipped: int = 0
    rod_evaluations: int = 0
