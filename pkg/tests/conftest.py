"""
Shared fixtures: cameras, poses, shrunken models and small run configs
"""

import math

import numpy as np
import pytest
import structlog
import yaml

from tools.core.geometry import CameraIntrinsics, CameraPose, EulerAngles
from tools.learning.regressor import ArchitectureConfig
from tools.simulation.simulator import MotionConfig, PoseGridSpec, SpeedModel


@pytest.fixture(autouse=True)
def _reset_structlog():
    """Drop logging config bound to a previous test's captured (now closed) stderr"""
    yield
    structlog.reset_defaults()


@pytest.fixture
def K():
    return CameraIntrinsics(fx=1000.0, fy=1000.0, cx=960.0, cy=540.0, width=1920, height=1080)


@pytest.fixture
def nominal_pose():
    return CameraPose.from_euler(5.0, EulerAngles.from_degrees(0.0, -30.0, 0.0))


@pytest.fixture
def top_down_pose():
    return CameraPose.from_euler(5.0, EulerAngles.from_degrees(0.0, -90.0, 0.0))


@pytest.fixture
def motion():
    return MotionConfig()


@pytest.fixture
def short_motion():
    return MotionConfig(min_len=5, max_len=9)


@pytest.fixture
def tiny_arch():
    """Shrunken regressor: LSTM h = 4, JE 8x16x8, branches 8/4"""
    return ArchitectureConfig(hidden_size=4, joint_sizes=(8, 16, 8), branch_sizes=(8, 4))


@pytest.fixture
def small_grid():
    """3 heights x 3 pitches x 3 rolls minus the nominal pose = 26 poses"""
    return PoseGridSpec(
        nominal_height_m=5.0,
        nominal_angles=EulerAngles.from_degrees(0.0, -30.0, 0.0),
        height_span=0.4,
        height_step=0.4,
        angle_span=math.radians(2.0),
        angle_step=math.radians(2.0),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def config_data():
    """Run config small enough for command-line tests"""
    return {
        "intrinsics": {"fx": 1000.0, "fy": 1000.0, "cx": 960.0, "cy": 540.0, "width": 1920, "height": 1080},
        "nominal": {"height_m": 5.0, "yaw_deg": 0.0, "pitch_deg": -30.0, "roll_deg": 0.0},
        "grid": {"height_span_m": 0.4, "height_step_m": 0.4, "angle_span_deg": 2.0, "angle_step_deg": 2.0},
        "speed": {"mean_mps": 1.4, "std_mps": 0.1, "samples_per_pose": 2},
        "motion": {"min_len": 5, "max_len": 9},
        "architecture": {"hidden_size": 4, "joint_sizes": [8, 16, 8], "branch_sizes": [8, 4]},
        "training": {"batch_size": 16, "epochs_per_round": 2, "rounds": 1},
        "evaluation": {"test_count": 6},
        "seed": 7,
    }


@pytest.fixture
def write_config(tmp_path):
    def write(data, name="run.yaml"):
        path = tmp_path / name
        path.write_text(yaml.safe_dump(data), encoding="utf-8")
        return path
    return write


@pytest.fixture
def speed_model():
    return SpeedModel(mean=1.4, std=0.1, samples_per_pose=2)
