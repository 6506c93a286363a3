from typing import Dict, Tuple

import numpy as np

from app.robot_model import TensegrityTopology
from app.schemas import SimNoise
from app.sim.trajectory import GroundTruthFrame

MIN_CABLE_LENGTH = 1e-6


def simulate_cables(gt: GroundTruthFrame, topology: TensegrityTopology, noise: SimNoise, seed: int) -> Dict[Tuple[int, int], float]:
    """Noisy cable length readings for one ground-truth frame.

    A slack cable reads long by ``slack_bias``; otherwise Gaussian noise is
    added. Both draws happen for every cable so the stream stays aligned when
    noise settings change.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, gt.index, 2]))
    n = len(topology.cables)
    jitter = rng.normal(0.0, 1.0, n)
    slack = rng.random(n) < noise.slack_probability

    readings = {}
    for k, ((i, j), length) in enumerate(gt.cable_distances(topology).items()):
        offset = noise.slack_bias if slack[k] else noise.cable_sigma * jitter[k]
        readings[(i, j)] = max(length + offset, MIN_CABLE_LENGTH)
    return readings
