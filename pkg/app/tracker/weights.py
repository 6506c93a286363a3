from typing import Optional, Sequence, Tuple

import numpy as np

from app.exceptions import InvalidArgumentError
from app.robot_model import TensegrityTopology
from app.schemas import WeightConfig


def binary_weight(r_i: float, r_j: float, config: WeightConfig) -> float:
    if r_i > config.high_ratio and r_j > config.high_ratio:
        return 0.0
    if r_i < config.low_ratio or r_j < config.low_ratio:
        return config.binary_scale
    return config.binary_scale * (1.0 - 0.5 * (r_i + r_j))


def compute_adaptive_weights(
    visibility: Sequence[float],
    topology: TensegrityTopology,
    config: Optional[WeightConfig] = None,
    static: bool = False,
) -> Tuple[np.ndarray, np.ndarray]:
    """Unary weight per endcap and binary weight per cable from visibility ratios.

    Well-seen endcaps trust the camera; when either end of a cable is poorly
    seen, the cable reading takes over.
    """
    config = config or WeightConfig()
    ratios = np.asarray(visibility, dtype=np.float64)
    if ratios.shape != (topology.n_endcaps,):
        raise InvalidArgumentError(f"expected {topology.n_endcaps} visibility ratios, got {ratios.shape}")
    if np.any(ratios < 0) or np.any(ratios > 1):
        raise InvalidArgumentError("visibility ratios must lie in [0, 1]")

    if static:
        return np.ones(topology.n_endcaps), np.full(len(topology.cables), config.binary_scale)

    unary = np.maximum(ratios, config.unary_floor)
    binary = np.array([binary_weight(ratios[i], ratios[j], config) for i, j in topology.cables])
    return unary, binary
