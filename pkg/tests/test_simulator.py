import math

import numpy as np
import pytest

from tools.core.errors import ConfigError, EmptyGridError, GenerationFailureError, InputDomainError, NoGroundVisibleError
from tools.core.geometry import CameraPose, EulerAngles, backproject_pixels, project_ground_points
from tools.simulation import simulator
from tools.simulation.simulator import (
    GenerationStats,
    MotionConfig,
    PoseGridSpec,
    SpeedModel,
    Trajectory2D,
    default_sweep_speeds,
    generate_dataset,
    generate_test_set,
    generate_trajectory,
    sample_pose_grid,
    sample_speeds,
    trajectory_set_id,
    visible_ground_region,
)


def _grid(height=5.0, pitch_deg=-30.0, **kwargs):
    return PoseGridSpec(nominal_height_m=height, nominal_angles=EulerAngles.from_degrees(0.0, pitch_deg, 0.0),
                        **kwargs)


def test_default_grid_has_4096_poses():
    assert len(sample_pose_grid(_grid())) == 4096


def test_grid_excludes_nominal_pose():
    spec = _grid(height_span=0.4, height_step=0.4, angle_span=math.radians(2.0), angle_step=math.radians(2.0))
    poses = sample_pose_grid(spec)
    assert len(poses) == 26
    nominal = spec.nominal
    for pose in poses:
        same_height = abs(pose.height_m - nominal.height_m) < 1e-9
        same_orientation = abs(abs(pose.orientation.dot(nominal.orientation)) - 1.0) < 1e-12
        assert not (same_height and same_orientation)


def test_grid_heights_stay_positive():
    poses = sample_pose_grid(_grid(height=1.0, height_span=3.0, height_step=0.5))
    assert min(p.height_m for p in poses) > 0.0


def test_grid_keeps_nominal_yaw():
    spec = PoseGridSpec(nominal_height_m=5.0, nominal_angles=EulerAngles.from_degrees(40.0, -30.0, 0.0),
                        height_span=0.4, height_step=0.4, angle_span=math.radians(2.0),
                        angle_step=math.radians(2.0))
    for pose in sample_pose_grid(spec):
        assert math.degrees(pose.euler().yaw) == pytest.approx(40.0, abs=1e-9)


def test_grid_drops_gimbal_pitches():
    poses = sample_pose_grid(_grid(pitch_deg=-80.0, angle_span=math.radians(10.0), angle_step=math.radians(5.0)))
    pitches = {round(math.degrees(p.euler().pitch), 6) for p in poses}
    assert -90.0 not in pitches
    assert -85.0 in pitches


def test_single_point_grid_is_empty():
    with pytest.raises(EmptyGridError):
        sample_pose_grid(_grid(height_span=0.0, angle_span=0.0))


def test_grid_spec_validation():
    with pytest.raises(ConfigError):
        _grid(height_step=0.0)


def test_sample_speeds_positive_and_seeded():
    model = SpeedModel(mean=0.05, std=0.2, samples_per_pose=200)
    a = sample_speeds(model, np.random.default_rng(3))
    b = sample_speeds(model, np.random.default_rng(3))
    assert a == b
    assert len(a) == 200
    assert min(a) > 0.0


def test_default_speed_model_statistics():
    speeds = np.array(sample_speeds(SpeedModel(samples_per_pose=1_000_000), np.random.default_rng(0)))
    assert speeds.mean() == pytest.approx(1.4, abs=1e-3)
    assert speeds.std() == pytest.approx(0.1, abs=1e-3)
    inside = np.mean((speeds >= 1.1) & (speeds <= 1.7))
    assert inside == pytest.approx(0.9974, abs=1e-3)


def test_visible_region_projects_inside_image(K, nominal_pose):
    region = visible_ground_region(nominal_pose, K)
    pixels, depth = project_ground_points(nominal_pose, K, region)
    assert np.all(depth > 0)
    assert np.all(pixels[:, 0] > -1e-6) and np.all(pixels[:, 0] < K.width + 1e-6)
    assert np.all(pixels[:, 1] > -1e-6) and np.all(pixels[:, 1] < K.height + 1e-6)


def test_top_down_region_is_image_footprint(K, top_down_pose):
    region = visible_ground_region(top_down_pose, K)
    assert region[:, 0].min() == pytest.approx(-960.0 * 5.0 / 1000.0, abs=1e-9)
    assert region[:, 0].max() == pytest.approx(960.0 * 5.0 / 1000.0, abs=1e-9)
    assert region[:, 1].max() - region[:, 1].min() == pytest.approx(1080.0 * 5.0 / 1000.0, abs=1e-9)


def test_camera_facing_sky_sees_no_ground(K):
    skyward = CameraPose.from_euler(5.0, EulerAngles.from_degrees(0.0, 60.0, 0.0))
    with pytest.raises(NoGroundVisibleError):
        visible_ground_region(skyward, K)


def test_trajectory_spacing_matches_speed(K, nominal_pose, motion):
    rng = np.random.default_rng(11)
    for speed in (0.8, 1.4, 2.5):
        for _ in range(20):
            trajectory = generate_trajectory(nominal_pose, speed, K, motion, rng)
            ground = backproject_pixels(nominal_pose, K, trajectory.points)
            spacing = np.linalg.norm(np.diff(ground, axis=0), axis=1)
            np.testing.assert_allclose(spacing, speed * motion.dt, atol=1e-6)


def test_top_down_pixel_spacing(K, top_down_pose):
    cfg = MotionConfig(min_len=3, max_len=5)
    rng = np.random.default_rng(2)
    for _ in range(10):
        trajectory = generate_trajectory(top_down_pose, 1.4, K, cfg, rng)
        spacing = np.linalg.norm(np.diff(trajectory.points, axis=0), axis=1)
        np.testing.assert_allclose(spacing, 140.0, atol=1e-6)


def test_walk_begins_at_start_point():
    start = np.array([3.0, -2.0])
    ground = simulator._walk(start, math.pi / 2, 0.7, 6, 0.0, np.random.default_rng(0))
    assert ground.shape == (6, 2)
    np.testing.assert_array_equal(ground[0], start)
    np.testing.assert_allclose(ground[-1], [3.0, 1.5], atol=1e-12)


def test_zero_jitter_walk_is_straight(K, nominal_pose, motion):
    rng = np.random.default_rng(8)
    for _ in range(20):
        trajectory = generate_trajectory(nominal_pose, 1.4, K, motion, rng)
        assert np.all(K.contains(trajectory.points))
        ground = backproject_pixels(nominal_pose, K, trajectory.points)
        steps = np.diff(ground, axis=0)
        np.testing.assert_allclose(steps, np.broadcast_to(steps[0], steps.shape), atol=1e-6)


def test_every_dataset_trajectory_keeps_spacing_under_its_pose(K, small_grid, speed_model, short_motion):
    for sample in generate_dataset(small_grid, speed_model, K, short_motion, seed=12):
        ground = backproject_pixels(sample.pose, K, sample.trajectory.points)
        spacing = np.linalg.norm(np.diff(ground, axis=0), axis=1)
        np.testing.assert_allclose(spacing, sample.speed * short_motion.dt, atol=1e-6)


def test_trajectory_length_and_image_bounds(K, nominal_pose, motion):
    rng = np.random.default_rng(5)
    lengths = set()
    for _ in range(60):
        trajectory = generate_trajectory(nominal_pose, 1.4, K, motion, rng)
        trajectory.validate(K, motion)
        lengths.add(len(trajectory))
    assert min(lengths) >= motion.min_len and max(lengths) <= motion.max_len
    assert len(lengths) > 1


def test_zero_speed_gives_degenerate_trajectory(K, nominal_pose, motion):
    stats = GenerationStats()
    trajectory = generate_trajectory(nominal_pose, 0.0, K, motion, np.random.default_rng(0), stats=stats)
    assert trajectory.is_degenerate
    assert stats.degenerate == 1


def test_impossible_motion_fails(K, nominal_pose):
    cfg = MotionConfig(dt=0.5, min_len=30, max_len=31, max_retries=3)
    with pytest.raises(GenerationFailureError):
        generate_trajectory(nominal_pose, 200.0, K, cfg, np.random.default_rng(0))


def test_validate_rejects_out_of_image(K, motion):
    points = np.column_stack([np.linspace(10, 400, 12), np.full(12, 100.0)])
    points[3] = [-5.0, 100.0]
    with pytest.raises(InputDomainError):
        Trajectory2D(points).validate(K, motion)
    with pytest.raises(InputDomainError):
        Trajectory2D(points[5:9]).validate(K, motion)


def test_trajectory_points_are_read_only():
    trajectory = Trajectory2D([[1.0, 2.0], [3.0, 4.0]])
    with pytest.raises(ValueError):
        trajectory.points[0, 0] = 9.0


def test_dataset_counts_and_order(K, small_grid, speed_model, short_motion):
    samples = generate_dataset(small_grid, speed_model, K, short_motion, seed=1)
    assert len(samples) == 26 * 2
    assert [s.pose_id for s in samples] == [i for i in range(26) for _ in range(2)]


def test_default_dataset_size(K, monkeypatch):
    fixed = Trajectory2D(np.column_stack([np.linspace(100.0, 600.0, 11), np.full(11, 700.0)]))
    monkeypatch.setattr(simulator, "generate_trajectory", lambda *args, **kwargs: fixed)
    samples = generate_dataset(_grid(), SpeedModel(), K, MotionConfig(), seed=0)
    assert len(samples) == 40960
    assert np.all(np.bincount([s.pose_id for s in samples]) == 10)


def test_dataset_independent_of_workers(K, small_grid, speed_model, short_motion):
    a = generate_dataset(small_grid, speed_model, K, short_motion, seed=9, workers=1)
    b = generate_dataset(small_grid, speed_model, K, short_motion, seed=9, workers=4)
    assert len(a) == len(b)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.trajectory.points, y.trajectory.points)
        assert x.speed == y.speed


def test_dataset_depends_on_seed(K, small_grid, speed_model, short_motion):
    a = generate_dataset(small_grid, speed_model, K, short_motion, seed=1)
    b = generate_dataset(small_grid, speed_model, K, short_motion, seed=2)
    assert any(x.speed != y.speed for x, y in zip(a, b))


def test_generation_failure_names_pose(K, speed_model):
    spec = _grid(pitch_deg=-5.0, height_span=0.4, height_step=0.4)
    cfg = MotionConfig(min_len=30, max_len=31, max_retries=2, max_range_m=5.0)
    with pytest.raises(GenerationFailureError) as info:
        generate_dataset(spec, speed_model, K, cfg, seed=0)
    assert info.value.pose_id is not None
    assert f"pose {info.value.pose_id}" in str(info.value)


def test_test_set_is_reproducible(K, nominal_pose, short_motion):
    speeds = SpeedModel(mean=1.4, std=0.1, samples_per_pose=1)
    a = generate_test_set(nominal_pose, speeds, K, short_motion, count=8, seed=4)
    b = generate_test_set(nominal_pose, speeds, K, short_motion, count=8, seed=4)
    assert len(a) == 8
    assert trajectory_set_id([s.trajectory for s in a]) == trajectory_set_id([s.trajectory for s in b])
    assert all(s.pose is nominal_pose for s in a)


def test_default_sweep_speeds():
    speeds = default_sweep_speeds()
    assert len(speeds) == 20
    assert speeds[0] == pytest.approx(0.2)
    assert speeds[-1] == pytest.approx(4.0)
    assert all(b > a for a, b in zip(speeds, speeds[1:]))
