"""Physical constraints on the stacked endcap vector ``x`` (endcap e at x[3e:3e+3]).

* rod length: ``|q_i - q_j| - l_rod = 0``
* rod separation: closest points frozen from the previous frame, re-expressed
  linearly in the current endcaps, must stay ``d_rod`` apart along the
  previous separating direction; this also forbids rods passing through each
  other
* ground: world height of every endcap at least ``d_rod / 2``
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from app.perception import GroundPlane
from app.robot_model import TensegrityTopology
from app.schemas import ConstraintViolation, TrackerConfig
from app.solver import Evaluator
from app.tracker.base import ClosestPair, TrackerState


@dataclass
class Constraint:
    kind: str
    members: Tuple[int, ...]
    fn: Evaluator


@dataclass
class ConstraintSet:
    equalities: List[Constraint] = field(default_factory=list)
    inequalities: List[Constraint] = field(default_factory=list)

    def evaluators(self) -> Tuple[List[Evaluator], List[Evaluator]]:
        return [c.fn for c in self.equalities], [c.fn for c in self.inequalities]

    def separation_pairs(self) -> List[Tuple[int, int]]:
        return [c.members for c in self.inequalities if c.kind == "separation"]

    def violation(self, x: np.ndarray) -> ConstraintViolation:
        worst = {"rod_length": 0.0, "ground": 0.0, "separation": 0.0}
        for c in self.equalities:
            worst[c.kind] = max(worst[c.kind], abs(c.fn(x)[0]))
        for c in self.inequalities:
            worst[c.kind] = max(worst[c.kind], -c.fn(x)[0])
        return ConstraintViolation(**worst)


def rod_length_constraint(i: int, j: int, rod_length: float, dimension: int) -> Constraint:
    def fn(x: np.ndarray):
        diff = x[3 * i : 3 * i + 3] - x[3 * j : 3 * j + 3]
        dist = np.linalg.norm(diff)
        grad = np.zeros(dimension)
        unit = diff / (dist + 1e-12)
        grad[3 * i : 3 * i + 3] = unit
        grad[3 * j : 3 * j + 3] = -unit
        return dist - rod_length, grad

    return Constraint("rod_length", (i, j), fn)


def separation_constraint(pair: ClosestPair, topology: TensegrityTopology, dimension: int) -> Constraint:
    """``n · (ĉ_b - ĉ_a) - d_rod >= 0`` with ĉ linear in the rod endcaps"""
    l_rod = topology.rod_length
    ia, ja = topology.endcap_of_rod[pair.rod_a]
    ib, jb = topology.endcap_of_rod[pair.rod_b]
    alpha_a = (pair.z_a + l_rod / 2.0) / l_rod
    alpha_b = (pair.z_b + l_rod / 2.0) / l_rod
    n = np.asarray(pair.direction, dtype=np.float64)

    grad = np.zeros(dimension)
    grad[3 * ia : 3 * ia + 3] -= alpha_a * n
    grad[3 * ja : 3 * ja + 3] -= (1.0 - alpha_a) * n
    grad[3 * ib : 3 * ib + 3] += alpha_b * n
    grad[3 * jb : 3 * jb + 3] += (1.0 - alpha_b) * n

    def fn(x: np.ndarray):
        return float(grad @ x) - topology.rod_diameter, grad.copy()

    return Constraint("separation", (pair.rod_a, pair.rod_b), fn)


def ground_constraint(endcap: int, ground: GroundPlane, rod_diameter: float, dimension: int) -> Constraint:
    row = ground.rotation.as_matrix()[2]
    offset = float(ground.translation[2])
    grad = np.zeros(dimension)
    grad[3 * endcap : 3 * endcap + 3] = row

    def fn(x: np.ndarray):
        return float(row @ x[3 * endcap : 3 * endcap + 3]) + offset - rod_diameter / 2.0, grad.copy()

    return Constraint("ground", (endcap,), fn)


def build_constraints(
    state: TrackerState,
    topology: TensegrityTopology,
    ground: Optional[GroundPlane],
    config: Optional[TrackerConfig] = None,
) -> ConstraintSet:
    """Constraint family for the correction of the frame after ``state``.

    Feature flags in ``config`` drop individual families; ``None`` builds all
    of them (used for reporting violations).
    """
    dimension = 3 * topology.n_endcaps
    constraints = ConstraintSet()
    use_length = config is None or config.enable_rod_length_constraint
    use_pairs = config is None or config.enable_rod_constraints
    use_ground = config is None or config.enable_ground_constraint

    if use_length:
        for i, j in topology.endcap_of_rod:
            constraints.equalities.append(rod_length_constraint(i, j, topology.rod_length, dimension))
    if use_pairs:
        for pair in state.closest_pairs:
            if pair.constrained:
                constraints.inequalities.append(separation_constraint(pair, topology, dimension))
    if use_ground and ground is not None:
        for endcap in range(topology.n_endcaps):
            constraints.inequalities.append(ground_constraint(endcap, ground, topology.rod_diameter, dimension))
    return constraints


def report_violations(new_state: TrackerState, previous: TrackerState, topology: TensegrityTopology) -> ConstraintViolation:
    """Violations of the full constraint family, whatever the tracker enforced"""
    full = build_constraints(previous, topology, previous.ground)
    return full.violation(new_state.endcaps(topology).reshape(-1))
