"""
Plots - CSV tables and SVG figures for training curves, speed sweeps and reprojection overlays

SVG output is byte-stable: fixed hash salt, text kept as text, no date metadata.
"""

from pathlib import Path
from typing import Sequence, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402
import structlog  # noqa: E402

from tools.core.geometry import CameraIntrinsics  # noqa: E402
from tools.evaluation.evaluation import SpeedSweepResult  # noqa: E402
from tools.learning.regressor import LossBreakdown  # noqa: E402

logger = structlog.get_logger(__name__)

plt.rcParams["svg.hashsalt"] = "trajpose"
plt.rcParams["svg.fonttype"] = "none"

LOSS_COLUMNS = ["epoch", "total", "location", "orientation"]
SWEEP_COLUMNS = ["speed_mps", "t_err_m", "r_err_deg"]


def _write_csv(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n")
    return path


def _save_svg(fig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def loss_frame(history: Sequence[LossBreakdown]) -> pd.DataFrame:
    return pd.DataFrame(
        [(epoch, h.total, h.location_term, h.orientation_term) for epoch, h in enumerate(history)],
        columns=LOSS_COLUMNS,
    )


def write_loss_csv(history: Sequence[LossBreakdown], path: Union[str, Path]) -> Path:
    """One row per epoch: epoch,total,location,orientation"""
    return _write_csv(loss_frame(history), path)


def plot_loss_curve(history: Sequence[LossBreakdown], path: Union[str, Path]) -> Path:
    frame = loss_frame(history)
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for column in ("total", "location", "orientation"):
        (line,) = ax.plot(frame["epoch"], frame[column], label=column)
        line.set_gid(f"{column}_loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean loss")
    ax.legend()
    fig.tight_layout()
    logger.debug("loss_curve_plotted", path=str(path), epochs=len(frame))
    return _save_svg(fig, path)


def write_sweep_csv(result: SpeedSweepResult, path: Union[str, Path]) -> Path:
    """One row per sweep speed: speed_mps,t_err_m,r_err_deg"""
    return _write_csv(result.to_frame()[SWEEP_COLUMNS], path)


def plot_sweep(result: SpeedSweepResult, path: Union[str, Path]) -> Path:
    """Location and orientation error against the synthetic training speed"""
    frame = result.to_frame()
    fig, ax_t = plt.subplots(figsize=(6.4, 4.0))
    ax_r = ax_t.twinx()
    (loc_line,) = ax_t.plot(frame["speed_mps"], frame["t_err_m"], marker="o", color="tab:blue",
                            label="location error (m)")
    (ori_line,) = ax_r.plot(frame["speed_mps"], frame["r_err_deg"], marker="s", color="tab:orange",
                            label="orientation error (deg)")
    loc_line.set_gid("location_series")
    ori_line.set_gid("orientation_series")
    ax_t.set_xlabel("synthetic speed (m/s)")
    ax_t.set_ylabel("location error (m)")
    ax_r.set_ylabel("orientation error (deg)")
    ax_t.set_title(f"test set {result.test_set_id}")
    ax_t.legend(handles=[loc_line, ori_line], loc="upper center")
    fig.tight_layout()
    return _save_svg(fig, path)


def plot_reprojection(true_polygon: np.ndarray, reprojected: np.ndarray, K: CameraIntrinsics,
                      path: Union[str, Path]) -> Path:
    """Both polygons on an image-sized canvas, origin top-left"""
    dpi = 100
    fig = plt.figure(figsize=(K.width / dpi, K.height / dpi), dpi=dpi)
    ax = fig.add_axes([0.0, 0.0, 1.0, 1.0])
    ax.set_xlim(0, K.width)
    ax.set_ylim(K.height, 0)
    ax.set_axis_off()
    for polygon, gid, color in ((true_polygon, "true_polygon", "tab:green"),
                                (reprojected, "reprojected_polygon", "tab:red")):
        closed = np.vstack([polygon, polygon[:1]])
        (line,) = ax.plot(closed[:, 0], closed[:, 1], color=color, linewidth=2)
        line.set_gid(gid)
    ax.plot([K.cx], [K.cy], marker="+", color="black")
    return _save_svg(fig, path)
