"""
Desk-scale pose recovery experiments

Each test trains full-size models on a coarse grid and takes minutes to hours; all are marked
slow and deselected by default. Run with ``pytest -m slow``.
"""

import math

import numpy as np
import pytest

from tools.core.geometry import CameraIntrinsics, CameraPose, EulerAngles
from tools.evaluation.evaluation import evaluate, predict_pose, speed_sweep
from tools.learning.regressor import RegressorModel
from tools.learning.training import TrainConfig, train
from tools.simulation.simulator import MotionConfig, PoseGridSpec, SpeedModel, generate_dataset, generate_test_set

pytestmark = pytest.mark.slow

SEED = 0


@pytest.fixture(scope="module")
def coarse_grid():
    """Heights 2..8 m step 1 m, pitch and roll +-15 deg step 5 deg around (5 m, -30 deg)"""
    return PoseGridSpec(
        nominal_height_m=5.0,
        nominal_angles=EulerAngles.from_degrees(0.0, -30.0, 0.0),
        height_span=3.0,
        height_step=1.0,
        angle_span=math.radians(15.0),
        angle_step=math.radians(5.0),
    )


@pytest.fixture(scope="module")
def held_out_pose():
    return CameraPose.from_euler(5.5, EulerAngles.from_degrees(0.0, -32.5, 2.5))


@pytest.fixture(scope="module")
def camera():
    return CameraIntrinsics(fx=1000.0, fy=1000.0, cx=960.0, cy=540.0, width=1920, height=1080)


@pytest.fixture(scope="module")
def held_out_set(camera, held_out_pose):
    return generate_test_set(held_out_pose, SpeedModel(mean=1.4, std=0.1, samples_per_pose=100), camera,
                             MotionConfig(), count=100, seed=SEED)


def _recover(grid, K, test_set, alpha):
    motion = MotionConfig()
    dataset = generate_dataset(grid, SpeedModel(mean=1.4, std=0.1, samples_per_pose=10), K, motion, SEED)
    model = RegressorModel(seed=SEED)
    train(model, dataset, K, TrainConfig(batch_size=1024, epochs_per_round=50, alpha=alpha, seed=SEED))
    truth = test_set[0].pose
    return evaluate(predict_pose(model, [s.trajectory for s in test_set], K, truth.yaw_ref, motion), truth)


@pytest.fixture(scope="module")
def alpha_one_report(coarse_grid, camera, held_out_set):
    return _recover(coarse_grid, camera, held_out_set, alpha=1.0)


def test_pose_recovered_on_held_out_pose(alpha_one_report):
    assert alpha_one_report.t_err_m <= 0.5
    assert alpha_one_report.r_err_deg <= 3.0


def test_alpha_has_little_effect(coarse_grid, camera, held_out_set, alpha_one_report):
    heavy = _recover(coarse_grid, camera, held_out_set, alpha=100.0)
    assert heavy.t_err_m <= 2.0 * max(alpha_one_report.t_err_m, 1e-3)
    assert heavy.r_err_deg <= 2.0 * max(alpha_one_report.r_err_deg, 1e-2)
    assert alpha_one_report.t_err_m <= 2.0 * max(heavy.t_err_m, 1e-3)
    assert alpha_one_report.r_err_deg <= 2.0 * max(heavy.r_err_deg, 1e-2)


def test_speed_sweep_is_bowl_shaped(coarse_grid, camera, held_out_set):
    speeds = [0.6, 1.0, 1.4, 1.8, 2.2, 3.0]
    result = speed_sweep(coarse_grid, held_out_set, speeds, TrainConfig(epochs_per_round=50, seed=SEED), camera,
                         MotionConfig(), samples_per_pose=10, seed=SEED)
    t_err = {p.speed_mps: p.t_err_m for p in result.points}
    r_err = np.array([p.r_err_deg for p in result.points])
    location = np.array(list(t_err.values()))

    assert t_err[1.4] < t_err[0.6]
    assert t_err[1.4] < t_err[3.0]
    assert r_err.max() / r_err.min() < location.max() / location.min()
