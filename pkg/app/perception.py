"""Raw frames to correspondences.

HSV segmentation, pinhole back-projection, the endcap depth-window filter,
camera-facing model points, nearest-neighbour matching under a shrinking
distance threshold, dummy anchors, and RANSAC ground-plane extraction.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

from app.exceptions import DatasetError, InvalidArgumentError, PlaneNotFoundError
from app.geometry import CorrespondenceSet, RigidPose, as_points, correspondence_weight, segment_distances
from app.robot_model import EndcapModel, HsvRange
from app.schemas import CameraIntrinsics, DmaxConfig, RansacConfig, Roi

logger = logging.getLogger(__name__)

__all__ = [
    "CameraIntrinsics",
    "GroundPlane",
    "ObservedFrame",
    "Roi",
    "add_dummy_points",
    "backproject",
    "box_corners",
    "clean_endcap_points",
    "color_pixels",
    "detect_ground_plane",
    "dmax_schedule",
    "filter_endcap_noise",
    "find_correspondences",
    "fit_ground_plane",
    "project_box",
    "project_to_3d",
    "reject_endcap_outliers",
    "search_window",
    "segment_endcap_pixels",
    "shaft_clear",
    "visible_model_points",
]

TIE_TOLERANCE = 1e-12
MIN_DEPTH = 1e-6


@dataclass(eq=False)
class ObservedFrame:
    """Organized depth + HSV grid with the cable readings of one timestep.

    ``hsv`` is stored as bytes: H over 0-360° scaled to 0-255, S and V over
    [0, 1] scaled to 0-255.
    """

    depth: np.ndarray
    hsv: np.ndarray
    cable_measurements: Dict[Tuple[int, int], float] = field(default_factory=dict)
    timestamp: float = 0.0
    index: int = 0

    def __post_init__(self):
        self.depth = np.asarray(self.depth, dtype=np.float32)
        self.hsv = np.asarray(self.hsv, dtype=np.uint8)
        if self.depth.ndim != 2 or self.hsv.shape != self.depth.shape + (3,):
            raise DatasetError(f"frame grids disagree: depth {self.depth.shape}, hsv {self.hsv.shape}", frame=self.index)
        if np.any(self.depth < 0) or not np.all(np.isfinite(self.depth)):
            raise DatasetError("depth must be finite and non-negative", frame=self.index)

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    def check_intrinsics(self, intrinsics: CameraIntrinsics) -> None:
        if (self.width, self.height) != (intrinsics.width, intrinsics.height):
            raise DatasetError(
                f"frame is {self.width}x{self.height}, intrinsics expect {intrinsics.width}x{intrinsics.height}",
                frame=self.index,
            )

    def hsv_float(self, roi: Optional[Roi] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Hue in degrees, saturation and value in [0, 1], over ``roi`` when given"""
        hsv = self.hsv if roi is None else self.hsv[roi.v_min : roi.v_max + 1, roi.u_min : roi.u_max + 1]
        hsv = hsv.astype(np.float64)
        return hsv[..., 0] * (360.0 / 255.0), hsv[..., 1] / 255.0, hsv[..., 2] / 255.0


@dataclass(frozen=True, eq=False)
class GroundPlane:
    """Camera → world transform putting the ground at z = 0, +z toward the camera"""

    rotation: Rotation
    translation: np.ndarray
    inliers: int
    normal: np.ndarray

    def height_of(self, points) -> np.ndarray:
        """World z of camera-frame points"""
        return as_points(points) @ self.rotation.as_matrix()[2] + self.translation[2]


# ---------------------------------------------------------------- projection


def project_to_3d(frame: ObservedFrame, intrinsics: CameraIntrinsics, pixel) -> Optional[np.ndarray]:
    u, v = int(pixel[0]), int(pixel[1])
    if not (0 <= u < frame.width and 0 <= v < frame.height):
        raise InvalidArgumentError(f"pixel ({u}, {v}) outside {frame.width}x{frame.height} image")
    d = float(frame.depth[v, u])
    if d <= 0:
        return None
    return np.array([(u - intrinsics.cx) * d / intrinsics.fx, (v - intrinsics.cy) * d / intrinsics.fy, d])


def backproject(frame: ObservedFrame, intrinsics: CameraIntrinsics, pixels) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized ``project_to_3d``; returns the valid points and the mask over ``pixels``"""
    pixels = np.asarray(pixels, dtype=np.int64).reshape(-1, 2)
    if len(pixels) == 0:
        return np.zeros((0, 3)), np.zeros(0, dtype=bool)
    u, v = pixels[:, 0], pixels[:, 1]
    if u.min() < 0 or v.min() < 0 or u.max() >= frame.width or v.max() >= frame.height:
        raise InvalidArgumentError("pixels outside the image")
    d = frame.depth[v, u].astype(np.float64)
    valid = d > 0
    d, u, v = d[valid], u[valid], v[valid]
    points = np.column_stack([(u - intrinsics.cx) * d / intrinsics.fx, (v - intrinsics.cy) * d / intrinsics.fy, d])
    return points, valid


def valid_points(frame: ObservedFrame, intrinsics: CameraIntrinsics) -> np.ndarray:
    vs, us = np.nonzero(frame.depth > 0)
    points, _ = backproject(frame, intrinsics, np.column_stack([us, vs]))
    return points


# ---------------------------------------------------------------- segmentation


def color_pixels(channels: Tuple[np.ndarray, np.ndarray, np.ndarray], hsv_range: HsvRange, roi: Optional[Roi] = None) -> np.ndarray:
    """Pixels of already-converted HSV channels inside ``hsv_range``; ``roi`` is the window they were cut from"""
    vs, us = np.nonzero(hsv_range.contains(*channels))
    if roi is not None:
        us, vs = us + roi.u_min, vs + roi.v_min
    return np.column_stack([us, vs])


def segment_endcap_pixels(frame: ObservedFrame, hsv_range: HsvRange, roi: Optional[Roi] = None) -> np.ndarray:
    """``(u, v)`` pixels whose color falls in ``hsv_range``, in row-major order.

    Only the ``roi`` window is converted to HSV floats.
    """
    return color_pixels(frame.hsv_float(roi), hsv_range, roi)


def box_corners(points, pad: float) -> np.ndarray:
    points = as_points(points)
    lo = points.min(axis=0) - pad
    hi = points.max(axis=0) + pad
    return np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])


def project_box(corners: np.ndarray, intrinsics: CameraIntrinsics) -> Optional[Tuple[slice, slice]]:
    """Image window covering the projection of a camera-frame point set"""
    if np.all(corners[:, 2] <= MIN_DEPTH):
        return None
    if np.any(corners[:, 2] <= MIN_DEPTH):
        return slice(0, intrinsics.height), slice(0, intrinsics.width)
    u = intrinsics.fx * corners[:, 0] / corners[:, 2] + intrinsics.cx
    v = intrinsics.fy * corners[:, 1] / corners[:, 2] + intrinsics.cy
    u0, u1 = int(np.floor(u.min())) - 1, int(np.ceil(u.max())) + 2
    v0, v1 = int(np.floor(v.min())) - 1, int(np.ceil(v.max())) + 2
    u0, v0 = max(u0, 0), max(v0, 0)
    u1, v1 = min(u1, intrinsics.width), min(v1, intrinsics.height)
    if u0 >= u1 or v0 >= v1:
        return None
    return slice(v0, v1), slice(u0, u1)


def search_window(center, reach: float, intrinsics: CameraIntrinsics) -> Optional[Roi]:
    """Pixel box holding every point within ``reach`` of ``center``; None when that ball is off-image"""
    window = project_box(box_corners(center, reach), intrinsics)
    if window is None:
        return None
    rows, cols = window
    return Roi(u_min=cols.start, v_min=rows.start, u_max=cols.stop - 1, v_max=rows.stop - 1)


def reject_endcap_outliers(points, endcap_radius: float, spread: float = 2.0) -> np.ndarray:
    """Keep points within ``spread`` endcap radii of the cloud's median.

    Stray endcap-colored pixels (color/depth misalignment) sit on whatever
    surface is behind them; the median stays on the endcap as long as they
    are a minority.
    """
    points = as_points(points)
    if len(points) == 0:
        return points
    center = np.median(points, axis=0)
    keep = np.linalg.norm(points - center, axis=1) <= spread * endcap_radius
    return points[keep]


def filter_endcap_noise(points, endcap_radius: float) -> np.ndarray:
    """Drop points deeper than the nearest point plus one endcap radius"""
    points = as_points(points)
    if len(points) == 0:
        return points
    keep = points[:, 2] <= points[:, 2].min() + endcap_radius
    return points[keep]


def clean_endcap_points(points, endcap_radius: float) -> np.ndarray:
    """Outlier rejection followed by the depth window"""
    return filter_endcap_noise(reject_endcap_outliers(points, endcap_radius), endcap_radius)


def _facing(world: np.ndarray, center: np.ndarray, camera_origin=None) -> np.ndarray:
    camera = np.zeros(3) if camera_origin is None else np.asarray(camera_origin, dtype=np.float64)
    return (world - center) @ (camera - center) > 0


def visible_mask(model: EndcapModel, pose: RigidPose, camera_origin=None) -> np.ndarray:
    return _facing(pose.apply(model.points), pose.apply(model.center), camera_origin)


def visible_model_points(model: EndcapModel, pose: RigidPose, camera_origin=None) -> np.ndarray:
    """World-frame model points on the camera-facing hemisphere of the endcap"""
    world = pose.apply(model.points)
    return world[_facing(world, pose.apply(model.center), camera_origin)]


def shaft_clear(points, axis_start, axis_end, shaft_radius: float, camera_origin=None) -> np.ndarray:
    """Mask of points whose line of sight passes outside a rod shaft"""
    points = as_points(points)
    if len(points) == 0:
        return np.zeros(0, dtype=bool)
    camera = np.zeros(3) if camera_origin is None else camera_origin
    return segment_distances(camera, points, axis_start, axis_end) >= shaft_radius


# ---------------------------------------------------------------- correspondences


def dmax_schedule(iteration: int, config: Optional[DmaxConfig] = None) -> float:
    if iteration < 0:
        raise InvalidArgumentError(f"iteration must be non-negative, got {iteration}")
    config = config or DmaxConfig()
    return max(config.floor, config.initial * config.decay**iteration)


def _pair_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum((a - b) ** 2, axis=-1))


def _pick_lowest_tied(distances: np.ndarray, indices: np.ndarray, sentinel: int) -> Tuple[np.ndarray, np.ndarray]:
    best = distances.min(axis=1)
    tied = distances <= best[:, None] + TIE_TOLERANCE
    chosen = np.where(tied, indices, sentinel).min(axis=1)
    return chosen, best


def find_correspondences(visible_model, observed, d_max: float, method: str = "kdtree") -> CorrespondenceSet:
    """Nearest observed point for every model point within ``d_max``.

    Ties within 1e-12 m go to the lowest observed index. ``method="brute"``
    evaluates every pair and must agree with the tree search exactly.
    """
    if not d_max > 0:
        raise InvalidArgumentError(f"d_max must be positive, got {d_max}")
    model = as_points(visible_model)
    observed = as_points(observed)
    n_obs = len(observed)
    if len(model) == 0 or n_obs == 0:
        return CorrespondenceSet()

    if method == "brute":
        indices = np.broadcast_to(np.arange(n_obs), (len(model), n_obs))
        distances = _pair_distances(model[:, None, :], observed[None, :, :])
    elif method == "kdtree":
        k = min(8, n_obs)
        _, indices = cKDTree(observed).query(model, k=k, distance_upper_bound=d_max * (1 + 1e-9) + TIE_TOLERANCE)
        indices = np.asarray(indices).reshape(len(model), k)
        missing = indices >= n_obs
        distances = _pair_distances(model[:, None, :], observed[np.minimum(indices, n_obs - 1)])
        distances[missing] = np.inf
    else:
        raise InvalidArgumentError(f"unknown correspondence method '{method}'")

    chosen, _ = _pick_lowest_tied(distances, indices, n_obs)
    found = chosen < n_obs
    chosen = np.where(found, chosen, 0)
    exact = _pair_distances(model, observed[chosen])
    keep = found & (exact <= d_max)
    return CorrespondenceSet(
        model[keep].copy(),
        observed[chosen[keep]].copy(),
        np.asarray(correspondence_weight(exact[keep], d_max), dtype=np.float64).reshape(-1),
    )


def add_dummy_points(
    correspondences: CorrespondenceSet,
    previous_model,
    previous_observed,
    count: int,
    seed: int,
) -> CorrespondenceSet:
    """Append ``count`` self-paired anchors drawn from the previous step's points"""
    if count < 0:
        raise InvalidArgumentError(f"dummy count must be non-negative, got {count}")
    pool = np.vstack([as_points(previous_model), as_points(previous_observed)])
    if count == 0 or len(pool) == 0:
        return correspondences

    rng = np.random.default_rng(seed)
    anchors = pool[rng.integers(0, len(pool), size=count)]
    base = float(correspondences.weights.mean()) if len(correspondences) else 1.0
    dummies = CorrespondenceSet(anchors, anchors.copy(), np.full(count, 0.5 * base))
    return correspondences.concat(dummies)


# ---------------------------------------------------------------- ground plane


def _plane_frame(normal: np.ndarray, origin: np.ndarray) -> Tuple[Rotation, np.ndarray]:
    x_axis = np.array([1.0, 0.0, 0.0]) - normal[0] * normal
    if np.linalg.norm(x_axis) < 1e-6:
        x_axis = np.array([0.0, 1.0, 0.0]) - normal[1] * normal
    x_axis /= np.linalg.norm(x_axis)
    y_axis = np.cross(normal, x_axis)
    matrix = np.vstack([x_axis, y_axis, normal])
    return Rotation.from_matrix(matrix), -matrix @ origin


def fit_ground_plane(points, config: Optional[RansacConfig] = None) -> GroundPlane:
    """Seeded RANSAC plane fit followed by a least-squares refit on the inliers"""
    config = config or RansacConfig()
    points = as_points(points)
    n = len(points)
    if n < 3:
        raise PlaneNotFoundError(f"need at least 3 valid depth points, got {n}")

    rng = np.random.default_rng(config.seed)
    sample = points if n <= config.max_points else points[np.sort(rng.choice(n, config.max_points, replace=False))]

    best_count, best_plane = -1, None
    for _ in range(config.iterations):
        p0, p1, p2 = sample[rng.choice(len(sample), 3, replace=False)]
        normal = np.cross(p1 - p0, p2 - p0)
        norm = np.linalg.norm(normal)
        if norm < 1e-12:
            continue
        normal /= norm
        count = int(np.count_nonzero(np.abs((sample - p0) @ normal) < config.inlier_threshold))
        if count > best_count:
            best_count, best_plane = count, (normal, p0)

    if best_plane is None:
        raise PlaneNotFoundError("all RANSAC samples were degenerate")

    normal, p0 = best_plane
    inliers = np.abs((points - p0) @ normal) < config.inlier_threshold
    centroid = points[inliers].mean(axis=0)
    _, _, vt = np.linalg.svd(points[inliers] - centroid, full_matrices=False)
    normal = vt[-1] / np.linalg.norm(vt[-1])
    inliers = np.abs((points - centroid) @ normal) < config.inlier_threshold
    count = int(np.count_nonzero(inliers))

    if count < config.min_inlier_ratio * n or count < 3:
        raise PlaneNotFoundError(f"best plane explains {count} of {n} points")

    # the camera (origin) must be on the +z side
    if -normal @ centroid < 0:
        normal = -normal
    rotation, translation = _plane_frame(normal, centroid)
    logger.debug("ground plane: normal=%s inliers=%d/%d", np.round(normal, 4), count, n)
    return GroundPlane(rotation=rotation, translation=translation, inliers=count, normal=normal)


def detect_ground_plane(frame: ObservedFrame, intrinsics: CameraIntrinsics, config: Optional[RansacConfig] = None) -> GroundPlane:
    return fit_ground_plane(valid_points(frame, intrinsics), config)
