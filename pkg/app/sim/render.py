"""Pinhole depth + HSV rendering by analytic ray casting.

Rays are generated with unit z component, so the hit parameter of a ray is
the pixel's depth. Primitives are the endcap spheres, thin rod cylinders and
the ground plane; the nearest hit per pixel wins.
"""

import logging
from dataclasses import dataclass
from typing import Iterable, List, Tuple

import numpy as np

from app.geometry import RigidPose
from app.perception import CameraIntrinsics, ObservedFrame, Roi, box_corners, project_box
from app.robot_model import HsvRange, TensegrityTopology, all_endcap_positions
from app.schemas import SimNoise
from app.sim.trajectory import GroundTruthFrame

logger = logging.getLogger(__name__)

LABEL_NONE = -1
LABEL_GROUND = 0
LABEL_ROD_BASE = 100
MIN_HIT = 1e-6
ROD_GRAY = (0, 0, 128)


@dataclass(eq=False)
class RenderedScene:
    depth: np.ndarray
    hsv: np.ndarray
    labels: np.ndarray


def hsv_bytes(hue_deg: float, sat: float, val: float) -> Tuple[int, int, int]:
    return (
        int(round((hue_deg % 360.0) / 360.0 * 255.0)) % 256,
        int(round(sat * 255.0)),
        int(round(val * 255.0)),
    )


def endcap_color(hsv_range: HsvRange) -> Tuple[int, int, int]:
    return hsv_bytes(*hsv_range.center())


def pixel_rays(intrinsics: CameraIntrinsics) -> Tuple[np.ndarray, np.ndarray]:
    """Ray directions ``((u-cx)/fx, (v-cy)/fy, 1)`` as two H×W grids"""
    u = (np.arange(intrinsics.width) - intrinsics.cx) / intrinsics.fx
    v = (np.arange(intrinsics.height) - intrinsics.cy) / intrinsics.fy
    return np.meshgrid(u, v)


def intersect_sphere(dx: np.ndarray, dy: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    """Nearest ray parameter hitting the sphere, ``inf`` on a miss"""
    a = dx * dx + dy * dy + 1.0
    b = dx * center[0] + dy * center[1] + center[2]
    c = center @ center - radius * radius
    disc = b * b - a * c
    with np.errstate(invalid="ignore"):
        lam = (b - np.sqrt(disc)) / a
    return np.where((disc >= 0) & (lam > MIN_HIT), lam, np.inf)


def intersect_cylinder(dx: np.ndarray, dy: np.ndarray, start: np.ndarray, end: np.ndarray, radius: float) -> np.ndarray:
    """Nearest hit on the open cylinder side between ``start`` and ``end``"""
    axis = end - start
    length = np.linalg.norm(axis)
    w = axis / length
    d_dot_w = dx * w[0] + dy * w[1] + w[2]
    mx, my, mz = dx - d_dot_w * w[0], dy - d_dot_w * w[1], 1.0 - d_dot_w * w[2]
    delta = -start
    delta_perp = delta - (delta @ w) * w
    a = mx * mx + my * my + mz * mz
    b = 2.0 * (mx * delta_perp[0] + my * delta_perp[1] + mz * delta_perp[2])
    c = delta_perp @ delta_perp - radius * radius
    disc = b * b - 4.0 * a * c
    with np.errstate(invalid="ignore", divide="ignore"):
        lam = (-b - np.sqrt(disc)) / (2.0 * a)
    height = lam * d_dot_w - start @ w
    hit = (disc >= 0) & (a > 1e-15) & (lam > MIN_HIT) & (height >= 0) & (height <= length)
    return np.where(hit, lam, np.inf)


def intersect_ground(dx: np.ndarray, dy: np.ndarray, camera_to_world: RigidPose) -> np.ndarray:
    row = camera_to_world.rotation.as_matrix()[2]
    height = camera_to_world.translation[2]
    slope = dx * row[0] + dy * row[1] + row[2]
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = -height / slope
    return np.where(np.isfinite(lam) & (lam > MIN_HIT), lam, np.inf)


def render_scene(
    gt: GroundTruthFrame,
    topology: TensegrityTopology,
    intrinsics: CameraIntrinsics,
    camera_to_world: RigidPose,
    hidden_endcaps: Iterable[int] = (),
    ground_texture_seed: int = 0,
) -> RenderedScene:
    """Noise-free z-buffered render of a world-frame ground-truth frame"""
    world_to_camera = camera_to_world.inverse()
    endcaps = world_to_camera.apply(all_endcap_positions(gt.poses, topology))
    dx, dy = pixel_rays(intrinsics)
    shape = (intrinsics.height, intrinsics.width)

    depth = intersect_ground(dx, dy, camera_to_world)
    labels = np.where(np.isfinite(depth), LABEL_GROUND, LABEL_NONE).astype(np.int16)

    def splat(window, lam, label):
        if window is None:
            return
        rows, cols = window
        local = lam(dx[rows, cols], dy[rows, cols])
        closer = local < depth[rows, cols]
        depth[rows, cols] = np.where(closer, local, depth[rows, cols])
        labels[rows, cols] = np.where(closer, label, labels[rows, cols])

    rod_radius = topology.shaft_radius
    for rod, (i, j) in enumerate(topology.endcap_of_rod):
        start, end = endcaps[j], endcaps[i]
        window = project_box(box_corners(np.vstack([start, end]), rod_radius), intrinsics)
        splat(window, lambda x, y, s=start, e=end: intersect_cylinder(x, y, s, e, rod_radius), LABEL_ROD_BASE + rod)

    hidden = set(hidden_endcaps)
    for endcap, center in enumerate(endcaps):
        if endcap in hidden:
            continue
        window = project_box(box_corners(center[None, :], topology.endcap_radius), intrinsics)
        splat(window, lambda x, y, c=center: intersect_sphere(x, y, c, topology.endcap_radius), endcap + 1)

    hsv = np.zeros(shape + (3,), dtype=np.uint8)
    texture = np.random.default_rng(ground_texture_seed)
    ground = labels == LABEL_GROUND
    n_ground = int(np.count_nonzero(ground))
    hsv[ground] = np.column_stack(
        [
            texture.integers(0, 256, n_ground),
            texture.integers(0, int(0.15 * 255) + 1, n_ground),
            texture.integers(int(0.4 * 255), int(0.8 * 255) + 1, n_ground),
        ]
    ).astype(np.uint8)
    hsv[labels >= LABEL_ROD_BASE] = ROD_GRAY
    for endcap in range(topology.n_endcaps):
        hsv[labels == endcap + 1] = endcap_color(topology.endcap_hsv[endcap])

    depth = np.where(np.isfinite(depth), depth, 0.0).astype(np.float32)
    return RenderedScene(depth=depth, hsv=hsv, labels=labels)


def apply_noise(scene: RenderedScene, noise: SimNoise, topology: TensegrityTopology, seed) -> Tuple[np.ndarray, np.ndarray]:
    """Depth jitter, color/depth misalignment and endcap pixel dropout; every draw happens regardless of settings"""
    rng = np.random.default_rng(seed)
    height, width = scene.depth.shape
    jitter = rng.normal(0.0, 1.0, size=(height, width))
    misaligned = rng.random((height, width)) < noise.misalignment_probability
    offsets = rng.integers(-noise.misalignment_pixels, noise.misalignment_pixels + 1, size=(2, height, width))
    dropped = rng.random((height, width)) < noise.dropout_probability

    valid = scene.depth > 0
    depth = scene.depth.astype(np.float64)
    depth = np.where(valid, np.maximum(depth + noise.depth_sigma * jitter, 1e-4), 0.0)

    rows, cols = np.mgrid[0:height, 0:width]
    src_rows = np.clip(rows + offsets[0], 0, height - 1)
    src_cols = np.clip(cols + offsets[1], 0, width - 1)
    hsv = scene.hsv.copy()
    hsv[misaligned] = scene.hsv[src_rows[misaligned], src_cols[misaligned]]

    endcap_pixels = (scene.labels >= 1) & (scene.labels <= topology.n_endcaps)
    depth[endcap_pixels & dropped] = 0.0
    return depth.astype(np.float32), hsv


def render_frame(
    gt: GroundTruthFrame,
    topology: TensegrityTopology,
    intrinsics: CameraIntrinsics,
    camera_to_world: RigidPose,
    noise: SimNoise,
    seed: int,
    hidden_endcaps: Iterable[int] = (),
    timestamp: float = 0.0,
) -> ObservedFrame:
    scene = render_scene(gt, topology, intrinsics, camera_to_world, hidden_endcaps, ground_texture_seed=seed)
    depth, hsv = apply_noise(scene, noise, topology, np.random.SeedSequence([seed, gt.index, 1]))
    return ObservedFrame(depth=depth, hsv=hsv, timestamp=timestamp, index=gt.index)


def derive_rois(
    labels: np.ndarray,
    topology: TensegrityTopology,
    intrinsics: CameraIntrinsics,
    centers: np.ndarray,
    margin: int = 8,
) -> List[Roi]:
    """Bounding box of each endcap's pixels in a label map, grown by ``margin``.

    ``centers`` are camera-frame endcap centers; an endcap without pixels gets
    a box around its projection.
    """
    rois = []
    for endcap in range(topology.n_endcaps):
        vs, us = np.nonzero(labels == endcap + 1)
        if len(us):
            u0, u1, v0, v1 = us.min(), us.max(), vs.min(), vs.max()
        else:
            c = centers[endcap]
            z = max(float(c[2]), MIN_HIT)
            u0 = u1 = int(round(intrinsics.fx * c[0] / z + intrinsics.cx))
            v0 = v1 = int(round(intrinsics.fy * c[1] / z + intrinsics.cy))
        u_min = int(np.clip(u0 - margin, 0, intrinsics.width - 1))
        u_max = int(np.clip(u1 + margin, 0, intrinsics.width - 1))
        v_min = int(np.clip(v0 - margin, 0, intrinsics.height - 1))
        v_max = int(np.clip(v1 + margin, 0, intrinsics.height - 1))
        rois.append(Roi(u_min=u_min, v_min=v_min, u_max=u_max, v_max=v_max))
    return rois
