"""Cable-distance and rod-error plots with their raw series as CSV."""

import logging
from pathlib import Path
from typing import Dict, List, Sequence, Union

import matplotlib

matplotlib.use("Agg")

import numpy as np
import pandas as pd
from matplotlib import pyplot as plt

from app.dataset import Dataset, cable_series, trajectory_endcaps
from app.exceptions import DatasetError
from app.metrics import frame_errors
from app.robot_model import all_endcap_positions
from app.schemas import FrameRecord

logger = logging.getLogger(__name__)


def cable_table(records: Sequence[FrameRecord], dataset: Dataset) -> pd.DataFrame:
    """Predicted, measured and true length per cable per frame (NaN where unknown)"""
    topology = dataset.topology
    measured = cable_series(dataset)
    rows = []
    for record in records:
        predicted = trajectory_endcaps(record, topology)
        truths = dataset.ground_truth(record.frame)
        true_endcaps = None
        if truths is not None and all(t is not None for t in truths):
            true_endcaps = all_endcap_positions(truths, topology)
        for i, j in topology.cables:
            rows.append(
                {
                    "frame": record.frame,
                    "cable": f"{i}-{j}",
                    "predicted": float(np.linalg.norm(predicted[i] - predicted[j])),
                    "measured": measured[(i, j)][record.frame],
                    "truth": float(np.linalg.norm(true_endcaps[i] - true_endcaps[j])) if true_endcaps is not None else np.nan,
                }
            )
    return pd.DataFrame(rows, columns=["frame", "cable", "predicted", "measured", "truth"])


def rod_error_table(records: Sequence[FrameRecord], dataset: Dataset) -> pd.DataFrame:
    rows = []
    for errors in frame_errors(records, dataset):
        for rod, error in enumerate(errors.rods):
            rows.append(
                {
                    "frame": errors.frame,
                    "rod": rod,
                    "translation_error": error.translation if error is not None else np.nan,
                    "rotation_error_deg": error.rotation_deg if error is not None else np.nan,
                }
            )
    return pd.DataFrame(rows, columns=["frame", "rod", "translation_error", "rotation_error_deg"])


def plot_cable(table: pd.DataFrame, name: str, path: Path) -> None:
    series = table[table["cable"] == name]
    fig, ax = plt.subplots(figsize=(8, 3))
    ax.plot(series["frame"], 100.0 * series["predicted"], label="predicted", color="tab:blue")
    ax.plot(series["frame"], 100.0 * series["measured"], label="measured", color="tab:orange", alpha=0.7)
    ax.plot(series["frame"], 100.0 * series["truth"], label="ground truth", color="tab:green", linestyle="--")
    ax.set_xlabel("frame")
    ax.set_ylabel("distance (cm)")
    ax.set_title(f"endcaps {name}")
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def plot_rod(table: pd.DataFrame, rod: int, path: Path, name: str = "") -> None:
    series = table[table["rod"] == rod]
    fig, (top, bottom) = plt.subplots(2, 1, sharex=True, figsize=(8, 4))
    top.plot(series["frame"], 100.0 * series["translation_error"], color="tab:red")
    top.set_ylabel("translation (cm)")
    bottom.plot(series["frame"], series["rotation_error_deg"], color="tab:purple")
    bottom.set_ylabel("axis (deg)")
    bottom.set_xlabel("frame")
    top.set_title(f"rod {rod} ({name})" if name else f"rod {rod}")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def plot_run(records: Sequence[FrameRecord], dataset: Dataset, out: Union[str, Path]) -> Dict[str, List[Path]]:
    """Write one SVG per cable and per rod plus ``cables.csv`` and ``rod_errors.csv``"""
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DatasetError(f"cannot create {out}: {exc}", path=out) from exc

    cables = cable_table(records, dataset)
    rods = rod_error_table(records, dataset)
    cables.to_csv(out / "cables.csv", index=False)
    rods.to_csv(out / "rod_errors.csv", index=False)

    written: Dict[str, List[Path]] = {"cables": [], "rods": [], "series": [out / "cables.csv", out / "rod_errors.csv"]}
    for i, j in dataset.topology.cables:
        path = out / f"cable_{i}_{j}.svg"
        plot_cable(cables, f"{i}-{j}", path)
        written["cables"].append(path)
    for rod in range(dataset.topology.n_rods):
        path = out / f"rod_{rod}_error.svg"
        plot_rod(rods, rod, path, dataset.topology.rod_name(rod))
        written["rods"].append(path)
    logger.info("wrote %d plots to %s", len(written["cables"]) + len(written["rods"]), out)
    return written
