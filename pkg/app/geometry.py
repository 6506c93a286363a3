"""Rigid-body and point-set primitives shared by the tracker and simulator.

Vectors are ``numpy`` arrays of shape ``(3,)`` and point sets ``(n, 3)``.
Rotations are ``scipy.spatial.transform.Rotation`` objects; they are exchanged
on disk as unit quaternions in ``(w, x, y, z)`` order.
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.transform import Rotation

from app.exceptions import DegenerateGeometryError, InvalidArgumentError

ArrayLike = Union[Sequence[float], np.ndarray]

Z_AXIS = np.array([0.0, 0.0, 1.0])


def as_vec3(value: ArrayLike) -> np.ndarray:
    vec = np.asarray(value, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(vec)):
        raise InvalidArgumentError(f"non-finite vector {vec}")
    return vec


def as_points(value: ArrayLike) -> np.ndarray:
    points = np.asarray(value, dtype=np.float64)
    if points.size == 0:
        return np.zeros((0, 3))
    return points.reshape(-1, 3)


def quat_wxyz(rotation: Rotation) -> np.ndarray:
    x, y, z, w = rotation.as_quat()
    quat = np.array([w, x, y, z])
    # canonical hemisphere so serialized quaternions are unique
    if quat[0] < 0:
        quat = -quat
    return quat


def rotation_from_wxyz(quat: ArrayLike) -> Rotation:
    w, x, y, z = np.asarray(quat, dtype=np.float64).reshape(4)
    norm = np.sqrt(w * w + x * x + y * y + z * z)
    if not np.isfinite(norm) or abs(norm - 1.0) > 1e-6:
        raise InvalidArgumentError(f"quaternion is not unit-norm (|q| = {norm})")
    return Rotation.from_quat([x, y, z, w])


@dataclass(frozen=True, eq=False)
class RigidPose:
    """Rotation plus translation; maps rod-local points into the camera frame"""

    rotation: Rotation
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @classmethod
    def identity(cls) -> "RigidPose":
        return cls(Rotation.identity(), np.zeros(3))

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "RigidPose":
        matrix = np.asarray(matrix, dtype=np.float64)
        return cls(Rotation.from_matrix(matrix[:3, :3]), matrix[:3, 3].copy())

    @classmethod
    def from_wxyz(cls, quat: ArrayLike, translation: ArrayLike) -> "RigidPose":
        return cls(rotation_from_wxyz(quat), as_vec3(translation))

    def as_matrix(self) -> np.ndarray:
        matrix = np.eye(4)
        matrix[:3, :3] = self.rotation.as_matrix()
        matrix[:3, 3] = self.translation
        return matrix

    @cached_property
    def _matrix(self) -> np.ndarray:
        return self.rotation.as_matrix()

    def apply(self, points: ArrayLike) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        if points.ndim == 1:
            return self._matrix @ points + self.translation
        if len(points) == 0:
            return np.zeros((0, 3))
        return points @ self._matrix.T + self.translation

    def compose(self, other: "RigidPose") -> "RigidPose":
        """Return ``self ∘ other`` (apply ``other`` first)"""
        return RigidPose(self.rotation * other.rotation, self.rotation.apply(other.translation) + self.translation)

    def inverse(self) -> "RigidPose":
        inv = self.rotation.inv()
        return RigidPose(inv, -inv.apply(self.translation))

    @property
    def axis(self) -> np.ndarray:
        """Unit main axis (local z) in the parent frame"""
        return self.rotation.apply(Z_AXIS)

    def quaternion_wxyz(self) -> np.ndarray:
        return quat_wxyz(self.rotation)


@dataclass(frozen=True, eq=False)
class Correspondence:
    model_point: np.ndarray
    observed_point: np.ndarray
    weight: float


@dataclass(frozen=True, eq=False)
class CorrespondenceSet:
    """Column-wise storage of weighted model/observed point pairs"""

    model_points: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    observed_points: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        if not (len(self.model_points) == len(self.observed_points) == len(self.weights)):
            raise InvalidArgumentError("correspondence columns differ in length")
        if len(self.weights) and (self.weights.min() < 0.0 or self.weights.max() > 1.0):
            raise InvalidArgumentError("correspondence weights must lie in [0, 1]")

    @classmethod
    def from_pairs(cls, pairs: Sequence[Correspondence]) -> "CorrespondenceSet":
        if not pairs:
            return cls()
        return cls(
            np.array([p.model_point for p in pairs], dtype=np.float64),
            np.array([p.observed_point for p in pairs], dtype=np.float64),
            np.array([p.weight for p in pairs], dtype=np.float64),
        )

    def __len__(self) -> int:
        return len(self.weights)

    def __iter__(self) -> Iterator[Correspondence]:
        for m, o, w in zip(self.model_points, self.observed_points, self.weights):
            yield Correspondence(m, o, float(w))

    def concat(self, other: "CorrespondenceSet") -> "CorrespondenceSet":
        return CorrespondenceSet(
            np.vstack([self.model_points, other.model_points]),
            np.vstack([self.observed_points, other.observed_points]),
            np.concatenate([self.weights, other.weights]),
        )

    def weighted_rmse(self, pose: Optional["RigidPose"] = None) -> float:
        if not len(self) or self.weights.sum() <= 0:
            return 0.0
        moved = self.model_points if pose is None else pose.apply(self.model_points)
        sq = np.sum((moved - self.observed_points) ** 2, axis=1)
        return float(np.sqrt(np.sum(self.weights * sq) / self.weights.sum()))


@dataclass(frozen=True, eq=False)
class Segment:
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", as_vec3(self.a))
        object.__setattr__(self, "b", as_vec3(self.b))
        if np.linalg.norm(self.b - self.a) <= 0:
            raise InvalidArgumentError("segment endpoints coincide")

    def point_at(self, s: float) -> np.ndarray:
        return self.a + s * (self.b - self.a)


def correspondence_weight(d, d_max: float):
    """Point-pair weight ``1 - (d / d_max)^2``, clipped to zero beyond ``d_max``"""
    if not d_max > 0:
        raise InvalidArgumentError(f"d_max must be positive, got {d_max}")
    dist = np.asarray(d, dtype=np.float64)
    weight = np.where(dist <= d_max, 1.0 - (dist / d_max) ** 2, 0.0)
    if weight.ndim == 0:
        return float(weight)
    return weight


def kabsch_weighted(correspondences: CorrespondenceSet) -> RigidPose:
    """Rigid transform minimizing the weighted squared distance model → observed.

    Weighted cross-covariance followed by a 3×3 SVD; the sign of the last
    singular direction is flipped when the solution would be a reflection.
    """
    model = correspondences.model_points
    observed = correspondences.observed_points
    weights = correspondences.weights
    total = float(weights.sum()) if len(weights) else 0.0
    if len(weights) < 3 or total <= 0:
        raise DegenerateGeometryError(
            f"need at least 3 weighted correspondences, got {len(weights)} (total weight {total})", rank=0
        )

    model_mean = weights @ model / total
    observed_mean = weights @ observed / total
    model_centered = model - model_mean
    observed_centered = observed - observed_mean

    sqrt_w = np.sqrt(weights)[:, None]
    spread = np.linalg.svd(sqrt_w * model_centered, compute_uv=False)
    rank = int(np.sum(spread > max(1e-12, 1e-9 * spread[0])))
    if rank < 2:
        raise DegenerateGeometryError(f"model points are collinear or coincident (rank {rank})", rank=rank)

    cross_cov = (weights[:, None] * model_centered).T @ observed_centered
    u, _, vt = np.linalg.svd(cross_cov)
    sign = 1.0 if np.linalg.det(vt.T @ u.T) >= 0 else -1.0
    rot = vt.T @ np.diag([1.0, 1.0, sign]) @ u.T
    translation = observed_mean - rot @ model_mean
    return RigidPose(Rotation.from_matrix(rot), translation)


def closest_segment_parameters(s1: Segment, s2: Segment) -> Tuple[float, float]:
    """Parameters ``(s, t)`` of the closest pair on two segments.

    Parallel segments resolve to the smallest ``s`` (then ``t``) among the
    optimal pairs so cached constraint geometry is reproducible.
    """
    d1 = s1.b - s1.a
    d2 = s2.b - s2.a
    r = s1.a - s2.a
    a = float(d1 @ d1)
    e = float(d2 @ d2)
    f = float(d2 @ r)
    c = float(d1 @ r)
    b = float(d1 @ d2)
    denom = a * e - b * b

    if denom > 1e-12 * a * e:
        s = float(np.clip((b * f - c * e) / denom, 0.0, 1.0))
    else:
        s = 0.0

    t = (b * s + f) / e
    if t < 0.0:
        t = 0.0
        s = float(np.clip(-c / a, 0.0, 1.0))
    elif t > 1.0:
        t = 1.0
        s = float(np.clip((b - c) / a, 0.0, 1.0))
    return s, float(t)


def segment_distances(starts: ArrayLike, ends: ArrayLike, a: ArrayLike, b: ArrayLike) -> np.ndarray:
    """Shortest distance from each segment ``starts[k] → ends[k]`` to the segment ``a → b``.

    Vectorized ``closest_segment_parameters``; ``starts`` may be a single point.
    """
    p, q = as_points(starts), as_points(ends)
    a, b = as_vec3(a), as_vec3(b)
    d1 = q - p
    d2 = b - a
    r = p - a
    len1 = np.sum(d1 * d1, axis=1)
    len2 = float(d2 @ d2)
    if len2 <= 0:
        raise InvalidArgumentError("segment endpoints coincide")
    f = r @ d2
    c = np.sum(d1 * r, axis=1)
    cross = d1 @ d2
    denom = len1 * len2 - cross**2

    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(denom > 1e-12 * len1 * len2, np.clip((cross * f - c * len2) / denom, 0.0, 1.0), 0.0)
        t = (cross * s + f) / len2
        s = np.where(t < 0.0, np.clip(-c / len1, 0.0, 1.0), s)
        s = np.where(t > 1.0, np.clip((cross - c) / len1, 0.0, 1.0), s)
    t = np.clip(t, 0.0, 1.0)
    gap = p + s[:, None] * d1 - (a + t[:, None] * d2)
    return np.linalg.norm(gap, axis=1)


def closest_points_between_segments(s1: Segment, s2: Segment) -> Tuple[np.ndarray, np.ndarray, float]:
    s, t = closest_segment_parameters(s1, s2)
    c1 = s1.point_at(s)
    c2 = s2.point_at(t)
    return c1, c2, float(np.linalg.norm(c2 - c1))


def minimal_rotation_between(v_from: ArrayLike, v_to: ArrayLike) -> Rotation:
    """Smallest-angle rotation carrying the direction of ``v_from`` onto ``v_to``"""
    a = np.asarray(v_from, dtype=np.float64)
    b = np.asarray(v_to, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0 or not np.isfinite(na * nb):
        raise InvalidArgumentError("minimal rotation needs two nonzero finite vectors")
    a, b = a / na, b / nb

    cross = np.cross(a, b)
    sin_angle = np.linalg.norm(cross)
    cos_angle = float(np.clip(a @ b, -1.0, 1.0))

    if sin_angle < 1e-12:
        if cos_angle > 0:
            return Rotation.identity()
        # antiparallel: half turn about a deterministic perpendicular
        basis = np.zeros(3)
        basis[int(np.argmin(np.abs(a)))] = 1.0
        axis = np.cross(a, basis)
        axis /= np.linalg.norm(axis)
        return Rotation.from_rotvec(np.pi * axis)

    angle = np.arctan2(sin_angle, cos_angle)
    return Rotation.from_rotvec(angle * cross / sin_angle)


def geodesic_distance(r1: Rotation, r2: Rotation) -> float:
    """Rotation angle of ``r1⁻¹ · r2`` in ``[0, π]``"""
    return float((r1.inv() * r2).magnitude())
