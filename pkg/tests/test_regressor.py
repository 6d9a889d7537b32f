import numpy as np
import pytest

from tools.core.errors import DegenerateQuaternionError, InputDomainError, ShapeMismatchError
from tools.core.geometry import CameraPose, EulerAngles, Quaternion
from tools.core.neuralnet import numerical_gradient, relative_error
from tools.learning.regressor import (
    ArchitectureConfig,
    PosePrediction,
    RegressorModel,
    backward,
    backward_batch,
    batch_loss,
    denormalize_input,
    forward,
    label_arrays,
    loss,
    normalize_input,
    predict_batch,
)
from tools.simulation.simulator import Trajectory2D, generate_dataset


def _random_trajectory(K, rng, n=5):
    return Trajectory2D(np.column_stack([rng.uniform(0, K.width, n), rng.uniform(0, K.height, n)]))


def _random_label(rng):
    angles = EulerAngles(0.0, rng.uniform(-0.9, -0.3), rng.uniform(-0.2, 0.2))
    return CameraPose.from_euler(rng.uniform(3.0, 7.0), angles)


def test_full_size_layer_shapes():
    model = RegressorModel(seed=0)
    shapes = {name: model.store[name].shape for name in model.store.names()}
    assert shapes["fe.fwd.W_ih"] == (256, 2)
    assert shapes["fe.bwd.W_hh"] == (256, 64)
    assert shapes["je.0.W"] == (256, 128)
    assert shapes["je.1.W"] == (1024, 256)
    assert shapes["je.2.W"] == (512, 1024)
    assert shapes["lb.0.W"] == (256, 512)
    assert shapes["lb.1.W"] == (128, 256)
    assert shapes["lb.2.W"] == (1, 128)
    assert shapes["ob.2.W"] == (4, 128)


def test_unidirectional_ablation_shapes():
    arch = ArchitectureConfig(hidden_size=4, joint_sizes=(8, 16, 8), branch_sizes=(8, 4), bidirectional=False)
    model = RegressorModel(arch, seed=0)
    assert model.fe_bwd is None
    assert "fe.bwd.W_ih" not in model.store
    assert model.store["je.0.W"].shape == (8, 4)


def test_normalize_input(K):
    center = normalize_input(Trajectory2D([[K.width / 2, K.height / 2]]), K)
    np.testing.assert_allclose(center, [[0.0, 0.0]], atol=1e-15)
    np.testing.assert_array_equal(normalize_input(Trajectory2D([[0.0, 0.0]]), K), [[-1.0, -1.0]])


def test_normalize_round_trip(K, rng):
    points = np.column_stack([rng.uniform(0, K.width, 50), rng.uniform(0, K.height, 50)])
    back = denormalize_input(normalize_input(Trajectory2D(points), K), K)
    np.testing.assert_allclose(back, points, atol=1e-12)


def test_normalize_rejects_out_of_image(K):
    with pytest.raises(InputDomainError):
        normalize_input(Trajectory2D([[10.0, 10.0], [K.width + 1.0, 10.0]]), K)


def test_forward_shapes_and_determinism(K, rng, tiny_arch):
    model = RegressorModel(tiny_arch, seed=3)
    trajectory = _random_trajectory(K, rng, 11)
    a = forward(model, trajectory, K)
    b = forward(model, trajectory, K)
    assert isinstance(a.height_m, float)
    assert a.quat_raw.shape == (4,)
    assert a.height_m == b.height_m
    np.testing.assert_array_equal(a.quat_raw, b.quat_raw)
    assert np.linalg.norm(a.quat_unit) == pytest.approx(1.0)


def test_batched_prediction_matches_single(K, rng, tiny_arch):
    model = RegressorModel(tiny_arch, seed=3)
    trajectories = [_random_trajectory(K, rng, 9) for _ in range(4)]
    batched = predict_batch(model, trajectories, K)
    for trajectory, prediction in zip(trajectories, batched):
        single = forward(model, trajectory, K)
        assert single.height_m == pytest.approx(prediction.height_m, abs=1e-12)
        np.testing.assert_allclose(single.quat_raw, prediction.quat_raw, atol=1e-12)


def test_untrained_model_is_finite_on_grid_trajectories(K, small_grid, speed_model, short_motion):
    model = RegressorModel(seed=11)
    samples = generate_dataset(small_grid, speed_model, K, short_motion, seed=2)[:100]
    for sample in samples:
        prediction = forward(model, sample.trajectory, K)
        assert np.isfinite(prediction.height_m)
        assert np.all(np.isfinite(prediction.quat_raw))


def test_degenerate_prediction():
    with pytest.raises(DegenerateQuaternionError):
        PosePrediction(height_m=1.0, quat_raw=np.zeros(4))


def test_loss_zero_when_exact(nominal_pose):
    prediction = PosePrediction(height_m=nominal_pose.height_m, quat_raw=nominal_pose.orientation.as_array())
    breakdown = loss(prediction, nominal_pose)
    assert breakdown.total == 0.0
    assert breakdown.alpha == 1.0


def test_loss_terms(nominal_pose):
    q = nominal_pose.orientation.as_array()
    prediction = PosePrediction(height_m=nominal_pose.height_m + 0.3, quat_raw=q)
    breakdown = loss(prediction, nominal_pose, alpha=10.0)
    assert breakdown.location_term == pytest.approx(0.3)
    assert breakdown.orientation_term == pytest.approx(0.0, abs=1e-15)
    assert breakdown.total == pytest.approx(breakdown.location_term + 10.0 * breakdown.orientation_term)


def test_orientation_term_invariant_to_scale_and_sign(nominal_pose, rng):
    raw = nominal_pose.orientation.as_array() + rng.normal(scale=0.1, size=4)
    base = loss(PosePrediction(5.0, raw), nominal_pose).orientation_term
    assert loss(PosePrediction(5.0, 10.0 * raw), nominal_pose).orientation_term == pytest.approx(base, abs=1e-15)
    assert loss(PosePrediction(5.0, -raw), nominal_pose).orientation_term == pytest.approx(base, abs=1e-15)


def test_gradients_match_finite_differences(K, rng, tiny_arch):
    model = RegressorModel(tiny_arch, seed=21)
    batch = [(_random_trajectory(K, rng, 5), _random_label(rng)) for _ in range(2)]
    x = np.stack([normalize_input(trajectory, K) for trajectory, _ in batch])
    t_star, q_star = label_arrays([label for _, label in batch])

    backward(model, batch, K, alpha=1.0)
    numeric = numerical_gradient(model.store, lambda: batch_loss(model, x, t_star, q_star, 1.0).total, eps=1e-5)
    worst = max(relative_error(model.store.grad(name), numeric[name]) for name in model.store.names())
    assert worst < 1e-4


def test_unidirectional_gradients_match_finite_differences(K, rng):
    arch = ArchitectureConfig(hidden_size=4, joint_sizes=(8, 16, 8), branch_sizes=(8, 4), bidirectional=False)
    model = RegressorModel(arch, seed=8)
    batch = [(_random_trajectory(K, rng, 5), _random_label(rng)) for _ in range(2)]
    x = np.stack([normalize_input(trajectory, K) for trajectory, _ in batch])
    t_star, q_star = label_arrays([label for _, label in batch])

    backward(model, batch, K, alpha=3.0)
    numeric = numerical_gradient(model.store, lambda: batch_loss(model, x, t_star, q_star, 3.0).total)
    worst = max(relative_error(model.store.grad(name), numeric[name]) for name in model.store.names())
    assert worst < 1e-4


def test_zero_loss_batch_has_zero_gradients(K, rng, tiny_arch):
    level = CameraPose(height_m=4.0, orientation=Quaternion(1.0, 0.0, 0.0, 0.0))
    model = RegressorModel(tiny_arch, seed=2)
    model.store["lb.2.W"][...] = 0.0
    model.store["lb.2.b"][...] = 4.0
    model.store["ob.2.W"][...] = 0.0
    model.store["ob.2.b"][...] = [1.0, 0.0, 0.0, 0.0]
    batch = [(_random_trajectory(K, rng, 5), level) for _ in range(3)]

    breakdown = backward(model, batch, K)
    assert breakdown.total == 0.0
    for name in model.store.names():
        assert not np.any(model.store.grad(name))


def test_duplicated_sample_gives_same_gradients(K, rng, tiny_arch):
    model = RegressorModel(tiny_arch, seed=4)
    sample = (_random_trajectory(K, rng, 6), _random_label(rng))
    backward(model, [sample], K)
    single = {name: model.store.grad(name).copy() for name in model.store.names()}
    backward(model, [sample, sample], K)
    for name in model.store.names():
        np.testing.assert_allclose(model.store.grad(name), single[name], rtol=1e-10, atol=1e-13)


def test_backward_rejects_mixed_lengths(K, rng, tiny_arch):
    model = RegressorModel(tiny_arch, seed=4)
    batch = [(_random_trajectory(K, rng, 5), _random_label(rng)), (_random_trajectory(K, rng, 6), _random_label(rng))]
    with pytest.raises(ShapeMismatchError):
        backward(model, batch, K)
    with pytest.raises(ShapeMismatchError):
        backward(model, [], K)


def test_backward_batch_clears_previous_gradients(K, rng, tiny_arch):
    model = RegressorModel(tiny_arch, seed=4)
    sample = (_random_trajectory(K, rng, 6), _random_label(rng))
    backward(model, [sample], K)
    first = {name: model.store.grad(name).copy() for name in model.store.names()}
    x = normalize_input(sample[0], K)[None]
    t_star, q_star = label_arrays([sample[1]])
    backward_batch(model, x, t_star, q_star)
    for name in model.store.names():
        np.testing.assert_array_equal(model.store.grad(name), first[name])

