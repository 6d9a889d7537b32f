"""
Track Ingest - Turn pre-tracked pedestrian points into fixed-spacing test trajectories

Input is a CSV with header ``track_id,frame,u,v``. Each track is resampled to one point every
round(fps * dt) frames, starting at its first frame. Wherever the next resampled frame is missing
the run ends and a new one starts at the next available frame. Runs are cut into consecutive
windows of max_len points; a shorter tail is kept when it has at least min_len points. Windows
with any point outside the image are dropped.
"""

import re
from pathlib import Path
from typing import List, Union

import numpy as np
import pandas as pd
import structlog

from tools.core.errors import ConfigError, MalformedRowError
from tools.core.geometry import CameraIntrinsics
from tools.simulation.simulator import MotionConfig, Trajectory2D

logger = structlog.get_logger(__name__)

TRACK_COLUMNS = ["track_id", "frame", "u", "v"]


def frame_stride(fps: float, dt: float) -> int:
    """Number of video frames between consecutive trajectory points"""
    if not fps > 0 or not dt > 0:
        raise ConfigError(f"fps and dt must be positive, got fps={fps} dt={dt}")
    stride = int(round(fps * dt))
    if stride < 1:
        raise ConfigError(f"fps {fps} and dt {dt} give a frame stride below 1")
    return stride


def _first_undecodable_line(path: Path) -> int:
    with open(path, "rb") as f:
        for line_number, raw in enumerate(f, start=1):
            try:
                raw.decode("utf-8")
            except UnicodeDecodeError:
                return line_number
    return 1


def read_tracks(path: Union[str, Path]) -> pd.DataFrame:
    """
    Load and validate a track CSV

    Returns:
        DataFrame with columns track_id (str), frame (int64), u, v (float64) and ``line``, the
        1-based file line of every row

    Raises:
        MalformedRowError: Bad header, non-numeric fields, fractional frames or frames that do
            not increase within a track
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"track file not found: {path}")
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True,
                         skip_blank_lines=False)
    except pd.errors.EmptyDataError as exc:
        raise MalformedRowError(f"{path.name} is empty", line=1) from exc
    except pd.errors.ParserError as exc:
        match = re.search(r"line (\d+)", str(exc))
        raise MalformedRowError(f"unparsable row in {path.name}", line=int(match.group(1)) if match else 1) from exc
    except UnicodeDecodeError as exc:
        raise MalformedRowError(f"{path.name} is not valid UTF-8", line=_first_undecodable_line(path)) from exc

    if list(df.columns) != TRACK_COLUMNS:
        raise MalformedRowError(f"expected header {','.join(TRACK_COLUMNS)}, got {','.join(df.columns)}", line=1)

    df["line"] = np.arange(len(df)) + 2
    for column in ("frame", "u", "v"):
        values = pd.to_numeric(df[column], errors="coerce")
        bad = values.isna() | ~np.isfinite(values.fillna(0.0))
        if bad.any():
            row = df[bad].iloc[0]
            raise MalformedRowError(f"{column} is not a finite number: {row[column]!r}", line=int(row["line"]))
        df[column] = values.astype(np.float64)

    fractional = df["frame"] != np.floor(df["frame"])
    if fractional.any():
        row = df[fractional].iloc[0]
        raise MalformedRowError(f"frame is not an integer: {row['frame']}", line=int(row["line"]))
    df["frame"] = df["frame"].astype(np.int64)

    empty_id = df["track_id"].str.strip() == ""
    if empty_id.any():
        raise MalformedRowError("track_id is empty", line=int(df[empty_id]["line"].iloc[0]))

    not_increasing = df.groupby("track_id", sort=False)["frame"].diff() <= 0
    if not_increasing.any():
        row = df[not_increasing].iloc[0]
        raise MalformedRowError(
            f"frame {row['frame']} of track {row['track_id']} does not increase", line=int(row["line"])
        )
    return df


def split_windows(points: np.ndarray, cfg: MotionConfig, overlap: int = 0) -> List[np.ndarray]:
    """Cut a contiguous resampled run into max_len windows plus a tail of at least min_len points"""
    step = cfg.max_len - overlap
    windows = []
    start = 0
    while start + cfg.max_len <= len(points):
        windows.append(points[start:start + cfg.max_len])
        start += step
    tail = points[start:]
    fresh = len(tail) - (overlap if windows else 0)
    if len(tail) >= cfg.min_len and fresh > 0:
        windows.append(tail)
    return windows


def _resampled_runs(frames: np.ndarray, stride: int) -> List[np.ndarray]:
    """Row indices of each run of points exactly one stride apart, re-anchored after every gap"""
    runs: List[List[int]] = []
    current: List[int] = []
    for i, frame in enumerate(frames):
        if current:
            step = frame - frames[current[-1]]
            if step < stride:
                continue
            if step == stride:
                current.append(i)
                continue
            runs.append(current)
        current = [i]
    if current:
        runs.append(current)
    return [np.asarray(run, dtype=np.int64) for run in runs]


def ingest_tracks(path: Union[str, Path], fps: float, dt: float, cfg: MotionConfig, K: CameraIntrinsics,
                  overlap: int = 0) -> List[Trajectory2D]:
    """
    Read a track CSV and produce test trajectories

    Args:
        path: CSV file with header track_id,frame,u,v
        fps: Video frame rate (required: a wrong value scales every apparent speed)
        dt: Trajectory time step in seconds
        cfg: Motion config providing min_len and max_len
        K: Intrinsics; windows with points outside the image are dropped
        overlap: Points shared by consecutive windows (0 = non-overlapping)

    Returns:
        Trajectories in track order (first appearance in the file), then time order
    """
    stride = frame_stride(fps, dt)
    if not 0 <= overlap < cfg.max_len:
        raise ConfigError(f"window overlap must be in [0, {cfg.max_len - 1}], got {overlap}")
    df = read_tracks(path)

    trajectories: List[Trajectory2D] = []
    dropped = 0
    for _, track in df.groupby("track_id", sort=False):
        frames = track["frame"].to_numpy()
        points = track[["u", "v"]].to_numpy(dtype=np.float64)
        for run in _resampled_runs(frames, stride):
            for window in split_windows(points[run], cfg, overlap):
                if np.all(K.contains(window)):
                    trajectories.append(Trajectory2D(window))
                else:
                    dropped += 1

    log = logger.bind(path=str(path), stride=stride, tracks=int(df["track_id"].nunique()))
    if not trajectories:
        log.warning("no_trajectories_ingested", dropped_out_of_image=dropped)
    else:
        log.info("tracks_ingested", trajectories=len(trajectories), dropped_out_of_image=dropped)
    return trajectories
