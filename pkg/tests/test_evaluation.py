import math

import numpy as np
import pytest

from tools.core.errors import BehindCameraError, ConfigError, GenerationFailureError, HorizonError, NoPredictionError
from tools.core.geometry import CameraPose, EulerAngles, euler_to_quat, orientation_error, quat_to_euler
from tools.evaluation.evaluation import (
    EvaluationReport,
    evaluate,
    pin_yaw,
    predict_pose,
    reproject_polygon,
    speed_sweep,
)
from tools.learning.regressor import RegressorModel
from tools.learning.training import TrainConfig
from tools.simulation.simulator import SpeedModel, Trajectory2D, generate_test_set


def _constant_model(arch, height, quat):
    """Regressor whose outputs ignore the input"""
    model = RegressorModel(arch, seed=0)
    model.store["lb.2.W"][...] = 0.0
    model.store["lb.2.b"][...] = height
    model.store["ob.2.W"][...] = 0.0
    model.store["ob.2.b"][...] = quat
    return model


@pytest.fixture
def test_set(K, nominal_pose, short_motion):
    return generate_test_set(nominal_pose, SpeedModel(mean=1.4, std=0.1, samples_per_pose=1), K, short_motion,
                             count=6, seed=3)


def test_pin_yaw_keeps_pitch_and_roll():
    q = euler_to_quat(EulerAngles.from_degrees(20.0, -30.0, 3.0))
    pinned = pin_yaw(q, 0.0)
    expected = euler_to_quat(EulerAngles.from_degrees(0.0, -30.0, 3.0))
    assert quat_to_euler(pinned).yaw == pytest.approx(0.0, abs=1e-12)
    assert orientation_error(pinned, expected) == pytest.approx(0.0, abs=1e-7)


def test_single_trajectory_aggregate_is_its_prediction(K, tiny_arch, test_set):
    model = RegressorModel(tiny_arch, seed=5)
    report = predict_pose(model, [test_set[0].trajectory], K)
    assert report.count == 1
    assert report.height_m == report.predictions[0].height_m
    assert orientation_error(report.orientation, report.predictions[0].orientation) == pytest.approx(0.0, abs=1e-7)


def test_duplicated_trajectory_matches_single(K, tiny_arch, test_set):
    model = RegressorModel(tiny_arch, seed=5)
    single = predict_pose(model, [test_set[0].trajectory], K)
    repeated = predict_pose(model, [test_set[0].trajectory] * 10, K)
    assert repeated.count == 10
    assert repeated.height_m == pytest.approx(single.height_m, abs=1e-12)
    assert orientation_error(repeated.orientation, single.orientation) == pytest.approx(0.0, abs=1e-7)


def test_aggregate_yaw_is_pinned(K, tiny_arch, test_set):
    report = predict_pose(RegressorModel(tiny_arch, seed=1), [s.trajectory for s in test_set], K,
                          yaw_ref=math.radians(35.0))
    assert math.degrees(report.euler().yaw) == pytest.approx(35.0, abs=1e-6)


def test_evaluate_known_errors(K, tiny_arch, nominal_pose, test_set):
    model = _constant_model(tiny_arch, 5.22, nominal_pose.orientation.as_array())
    report = evaluate(predict_pose(model, [s.trajectory for s in test_set], K), nominal_pose)
    assert report.t_err_m == pytest.approx(0.22, abs=1e-9)
    assert report.r_err_rad == pytest.approx(0.0, abs=1e-6)
    assert report.median_t_err_m == pytest.approx(0.22, abs=1e-9)
    assert all(p.t_err_m == pytest.approx(0.22, abs=1e-9) for p in report.predictions)


def test_evaluate_orientation_error(K, tiny_arch, nominal_pose, test_set):
    tilted = euler_to_quat(EulerAngles.from_degrees(0.0, -33.0, 0.0))
    model = _constant_model(tiny_arch, 5.0, tilted.as_array())
    report = evaluate(predict_pose(model, [s.trajectory for s in test_set], K), nominal_pose)
    assert report.r_err_deg == pytest.approx(3.0, abs=1e-5)
    assert report.median_r_err_deg == pytest.approx(3.0, abs=1e-5)


def test_out_of_image_trajectory_is_skipped(K, tiny_arch, test_set):
    outside = Trajectory2D([[10.0, 10.0], [K.width + 5.0, 10.0], [20.0, 20.0]])
    report = predict_pose(RegressorModel(tiny_arch, seed=0), [outside, test_set[0].trajectory], K)
    assert report.count == 1
    assert [s.index for s in report.skipped] == [0]
    assert report.skipped[0].error.startswith("E_INPUT_DOMAIN")
    assert report.predictions[0].index == 1


def test_length_outside_motion_limits_is_skipped(K, tiny_arch, test_set, short_motion):
    too_long = Trajectory2D(np.column_stack([np.linspace(100, 900, 20), np.full(20, 600.0)]))
    trajectories = [test_set[0].trajectory, too_long]
    report = predict_pose(RegressorModel(tiny_arch, seed=0), trajectories, K, motion=short_motion)
    assert [s.index for s in report.skipped] == [1]


def test_no_prediction(K, tiny_arch):
    outside = Trajectory2D([[-1.0, 10.0], [5.0, 5.0]])
    with pytest.raises(NoPredictionError):
        predict_pose(RegressorModel(tiny_arch, seed=0), [outside, outside], K)


def test_report_dict(K, tiny_arch, nominal_pose, test_set):
    report = evaluate(predict_pose(RegressorModel(tiny_arch, seed=0), [s.trajectory for s in test_set], K),
                      nominal_pose)
    assert isinstance(report, EvaluationReport)
    with_timing = report.to_dict()
    without = report.to_dict(timing=False)
    assert "inference_seconds" in with_timing
    assert "inference_seconds" not in without
    assert without["count"] == 6
    assert set(without["aggregate"]) == {"height_m", "quat", "euler_deg"}
    assert without["t_err_m"] == report.t_err_m


def test_sweep_single_speed(K, small_grid, short_motion, tiny_arch, test_set):
    cfg = TrainConfig(batch_size=16, epochs_per_round=1)
    result = speed_sweep(small_grid, test_set, [1.4], cfg, K, short_motion, arch=tiny_arch, samples_per_pose=2)
    assert len(result.points) == 1
    point = result.points[0]
    assert point.speed_mps == 1.4
    assert np.isfinite(point.t_err_m) and np.isfinite(point.r_err_deg)
    frame = result.to_frame()
    assert list(frame.columns) == ["speed_mps", "t_err_m", "r_err_deg"]
    assert len(result.test_set_id) == 16


def test_sweep_rejects_unordered_speeds(K, small_grid, short_motion, test_set):
    with pytest.raises(ConfigError):
        speed_sweep(small_grid, test_set, [1.0, 1.0], TrainConfig(), K, short_motion)
    with pytest.raises(ConfigError):
        speed_sweep(small_grid, test_set, [], TrainConfig(), K, short_motion)


def test_sweep_failure_names_speed(K, small_grid, short_motion, tiny_arch, test_set):
    cfg = TrainConfig(batch_size=16, epochs_per_round=1)
    with pytest.raises(GenerationFailureError) as info:
        speed_sweep(small_grid, test_set, [500.0], cfg, K, short_motion, arch=tiny_arch, samples_per_pose=1)
    assert "speed 500 m/s" in str(info.value)

    result = speed_sweep(small_grid, test_set, [1.4, 500.0], cfg, K, short_motion, arch=tiny_arch,
                         samples_per_pose=1, continue_on_error=True)
    assert np.isfinite(result.points[0].t_err_m)
    assert math.isnan(result.points[1].t_err_m)
    assert "speed 500 m/s" in result.points[1].error


def test_reproject_with_true_pose_is_identity(K, nominal_pose):
    polygon = np.array([[600.0, 700.0], [1300.0, 700.0], [1400.0, 1000.0], [500.0, 1000.0]])
    np.testing.assert_allclose(reproject_polygon(nominal_pose, nominal_pose, K, polygon), polygon, atol=1e-6)


def test_reproject_top_down_height_scale(K, top_down_pose):
    higher = CameraPose.from_euler(5.4, EulerAngles.from_degrees(0.0, -90.0, 0.0))
    polygon = np.array([[1460.0, 540.0], [960.0, 1040.0], [460.0, 540.0]])
    out = reproject_polygon(top_down_pose, higher, K, polygon)
    expected = np.array([K.cx, K.cy]) + (polygon - np.array([K.cx, K.cy])) * (5.0 / 5.4)
    np.testing.assert_allclose(out, expected, atol=1e-6)


def test_reproject_vertex_above_horizon(K):
    level = CameraPose.from_euler(5.0, EulerAngles(0.0, 0.0, 0.0))
    with pytest.raises(HorizonError):
        reproject_polygon(level, level, K, np.array([[960.0, 100.0], [900.0, 900.0], [1000.0, 900.0]]))


def test_reproject_behind_predicted_camera(K, nominal_pose):
    skyward = CameraPose.from_euler(5.0, EulerAngles.from_degrees(0.0, 80.0, 0.0))
    with pytest.raises(BehindCameraError):
        reproject_polygon(nominal_pose, skyward, K, np.array([[960.0, 540.0], [900.0, 600.0], [1000.0, 600.0]]))
