import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import networkx as nx
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.spatial.transform import Rotation

from app.exceptions import DegenerateGeometryError, InvalidArgumentError
from app.geometry import RigidPose, as_vec3, minimal_rotation_between

logger = logging.getLogger(__name__)

# Rod-local frame: z is the main axis, endcap i of a rod sits at +z.
LOCAL_FRAME_CONVENTION = "rod local z-axis is the main axis; first endcap of each rod at +l_rod/2"
SHAFT_RADIUS_FACTOR = 0.3


class HsvRange(BaseModel):
    """Inclusive HSV box; hue in degrees and allowed to wrap through 0"""

    model_config = ConfigDict(frozen=True)

    hue_min: float = Field(ge=0.0, le=360.0)
    hue_max: float = Field(ge=0.0, le=360.0)
    sat_min: float = Field(default=0.0, ge=0.0, le=1.0)
    sat_max: float = Field(default=1.0, ge=0.0, le=1.0)
    val_min: float = Field(default=0.0, ge=0.0, le=1.0)
    val_max: float = Field(default=1.0, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _check_bounds(self) -> "HsvRange":
        if self.sat_min > self.sat_max or self.val_min > self.val_max:
            raise ValueError("saturation/value minimum exceeds maximum")
        return self

    @property
    def wraps(self) -> bool:
        return self.hue_min > self.hue_max

    def contains(self, hue_deg, sat, val) -> np.ndarray:
        hue = np.asarray(hue_deg, dtype=np.float64) % 360.0
        if self.wraps:
            hue_ok = (hue >= self.hue_min) | (hue <= self.hue_max)
        else:
            hue_ok = (hue >= self.hue_min) & (hue <= self.hue_max)
        sat = np.asarray(sat, dtype=np.float64)
        val = np.asarray(val, dtype=np.float64)
        return hue_ok & (sat >= self.sat_min) & (sat <= self.sat_max) & (val >= self.val_min) & (val <= self.val_max)

    def center(self) -> Tuple[float, float, float]:
        span = (self.hue_max - self.hue_min) % 360.0
        hue = (self.hue_min + span / 2.0) % 360.0
        return hue, (self.sat_min + self.sat_max) / 2.0, (self.val_min + self.val_max) / 2.0


class TensegrityTopology(BaseModel):
    """Rods, endcaps, cables and appearance of an N-bar tensegrity"""

    model_config = ConfigDict(frozen=True)

    n_rods: int = Field(ge=1)
    rod_length: float = Field(gt=0.0)
    rod_diameter: float = Field(gt=0.0)
    endcap_radius: float = Field(gt=0.0)
    cables: List[Tuple[int, int]]
    endcap_hsv: List[HsvRange]
    endcap_of_rod: List[Tuple[int, int]]
    rod_colors: List[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_structure(self) -> "TensegrityTopology":
        n_endcaps = 2 * self.n_rods
        if len(self.endcap_of_rod) != self.n_rods:
            raise ValueError(f"endcap_of_rod must list {self.n_rods} rods")
        flat = sorted(e for pair in self.endcap_of_rod for e in pair)
        if flat != list(range(n_endcaps)):
            raise ValueError("every endcap must belong to exactly one rod")
        if len(self.endcap_hsv) != n_endcaps:
            raise ValueError(f"endcap_hsv must have {n_endcaps} entries")
        if not self.rod_length > self.rod_diameter:
            raise ValueError("rod_length must exceed rod_diameter")
        if self.endcap_radius > self.rod_diameter:
            raise ValueError("endcap_radius must not exceed rod_diameter")
        rod_of = {e: k for k, pair in enumerate(self.endcap_of_rod) for e in pair}
        for i, j in self.cables:
            if i == j or not (0 <= i < n_endcaps and 0 <= j < n_endcaps):
                raise ValueError(f"cable ({i}, {j}) has invalid endpoints")
            if rod_of[i] == rod_of[j]:
                raise ValueError(f"cable ({i}, {j}) connects endcaps of the same rod")
        if len(set(tuple(sorted(c)) for c in self.cables)) != len(self.cables):
            raise ValueError("duplicate cables")
        if not self.is_connected():
            raise ValueError("rods and cables must form one connected structure")
        return self

    @property
    def n_endcaps(self) -> int:
        return 2 * self.n_rods

    @property
    def shaft_radius(self) -> float:
        """Radius of the visible rod shaft, thinner than the endcaps"""
        return SHAFT_RADIUS_FACTOR * self.rod_diameter

    def rod_of_endcap(self, endcap: int) -> int:
        for rod, pair in enumerate(self.endcap_of_rod):
            if endcap in pair:
                return rod
        raise InvalidArgumentError(f"unknown endcap {endcap}")

    def rod_pairs(self) -> List[Tuple[int, int]]:
        return [(a, b) for a in range(self.n_rods) for b in range(a + 1, self.n_rods)]

    def rod_name(self, rod: int) -> str:
        return self.rod_colors[rod] if rod < len(self.rod_colors) else f"rod{rod}"

    def graph(self) -> nx.Graph:
        """Endcaps as nodes; rods and cables as typed edges"""
        g = nx.Graph()
        for endcap in range(self.n_endcaps):
            g.add_node(endcap, rod=self.rod_of_endcap(endcap))
        for rod, (i, j) in enumerate(self.endcap_of_rod):
            g.add_edge(i, j, type="rod", rod=rod, length=self.rod_length)
        for index, (i, j) in enumerate(self.cables):
            g.add_edge(i, j, type="cable", cable=index)
        return g

    def is_connected(self) -> bool:
        return nx.is_connected(self.graph())


def default_hsv_ranges() -> List[HsvRange]:
    red = HsvRange(hue_min=345.0, hue_max=15.0, sat_min=0.5, sat_max=1.0, val_min=0.3, val_max=1.0)
    green = HsvRange(hue_min=105.0, hue_max=135.0, sat_min=0.5, sat_max=1.0, val_min=0.3, val_max=1.0)
    blue = HsvRange(hue_min=225.0, hue_max=255.0, sat_min=0.5, sat_max=1.0, val_min=0.3, val_max=1.0)
    return [red, red, green, green, blue, blue]


def default_topology(
    rod_length: float = 0.36,
    endcap_radius: float = 0.0175,
    rod_diameter: Optional[float] = None,
) -> TensegrityTopology:
    """3-bar robot: rod k owns endcaps (2k, 2k+1); 2k is the top (+z) endcap.

    Cables: bottom triangle, top triangle and three top-to-bottom cables.
    """
    bottom = [1, 3, 5]
    top = [0, 2, 4]
    cables = [
        (bottom[0], bottom[1]), (bottom[1], bottom[2]), (bottom[2], bottom[0]),
        (top[0], top[1]), (top[1], top[2]), (top[2], top[0]),
        (top[0], bottom[1]), (top[1], bottom[2]), (top[2], bottom[0]),
    ]
    return TensegrityTopology(
        n_rods=3,
        rod_length=rod_length,
        rod_diameter=rod_diameter if rod_diameter is not None else 2.0 * endcap_radius,
        endcap_radius=endcap_radius,
        cables=cables,
        endcap_hsv=default_hsv_ranges(),
        endcap_of_rod=[(0, 1), (2, 3), (4, 5)],
        rod_colors=["red", "green", "blue"],
    )


@dataclass(frozen=True, eq=False)
class EndcapModel:
    endcap: int
    points: np.ndarray  # rod-local frame
    center: np.ndarray  # rod-local frame


@dataclass(frozen=True, eq=False)
class RodState:
    rod: int
    pose: RigidPose

    def endcaps(self, topology: TensegrityTopology) -> Tuple[np.ndarray, np.ndarray]:
        return endcap_positions(self.pose, topology)


def endcap_offsets(topology: TensegrityTopology) -> Tuple[np.ndarray, np.ndarray]:
    half = topology.rod_length / 2.0
    return np.array([0.0, 0.0, half]), np.array([0.0, 0.0, -half])


def endcap_positions(pose: RigidPose, topology: TensegrityTopology) -> Tuple[np.ndarray, np.ndarray]:
    top, bottom = endcap_offsets(topology)
    return pose.apply(top), pose.apply(bottom)


def all_endcap_positions(poses: List[RigidPose], topology: TensegrityTopology) -> np.ndarray:
    """Stack endcap centers of every rod into a ``(2N, 3)`` array by endcap index"""
    positions = np.zeros((topology.n_endcaps, 3))
    for rod, (i, j) in enumerate(topology.endcap_of_rod):
        positions[i], positions[j] = endcap_positions(poses[rod], topology)
    return positions


def pose_from_endcaps(q_i, q_j, previous: Rotation, topology: Optional[TensegrityTopology] = None) -> RigidPose:
    """Rod pose whose axis runs q_j → q_i, twisted as little as possible from ``previous``"""
    q_i, q_j = as_vec3(q_i), as_vec3(q_j)
    direction = q_i - q_j
    length = np.linalg.norm(direction)
    if length <= 1e-12:
        raise DegenerateGeometryError("endcaps coincide; rod axis undefined", rank=0)
    if topology is not None and abs(length - topology.rod_length) > 1e-3:
        logger.debug("endcap separation %.4f m differs from rod length %.4f m", length, topology.rod_length)

    previous_axis = previous.apply([0.0, 0.0, 1.0])
    delta = minimal_rotation_between(previous_axis, direction)
    return RigidPose(delta * previous, (q_i + q_j) / 2.0)


def fibonacci_sphere(n: int, radius: float, offset: float = 0.0) -> np.ndarray:
    k = np.arange(n) + 0.5
    z = 1.0 - 2.0 * k / n
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, 1.0))
    golden = np.pi * (3.0 - np.sqrt(5.0))
    phi = golden * k + offset
    return radius * np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def sample_endcap_model(topology: TensegrityTopology, samples_per_endcap: int = 200, seed: int = 0) -> List[EndcapModel]:
    """Quasi-uniform sphere samples around each endcap center, in rod-local coordinates"""
    if samples_per_endcap < 100:
        raise InvalidArgumentError("samples_per_endcap must be at least 100")
    rng = np.random.default_rng(seed)
    top, bottom = endcap_offsets(topology)

    models: List[EndcapModel] = [None] * topology.n_endcaps  # type: ignore[list-item]
    for i, j in topology.endcap_of_rod:
        for endcap, center in ((i, top), (j, bottom)):
            spin = Rotation.from_rotvec(rng.normal(size=3))
            shell = spin.apply(fibonacci_sphere(samples_per_endcap, topology.endcap_radius))
            models[endcap] = EndcapModel(endcap=endcap, points=shell + center, center=center.copy())
    return models
