import json

import numpy as np
import pytest

from tools.core.errors import CorruptFileError, VersionMismatchError
from tools.simulation.dataset_store import DatasetHeader, read_dataset, write_dataset
from tools.simulation.simulator import generate_dataset


@pytest.fixture
def dataset(K, small_grid, speed_model, short_motion):
    header = DatasetHeader(intrinsics=K, grid=small_grid, speeds=speed_model, motion=short_motion, seed=3)
    samples = generate_dataset(small_grid, speed_model, K, short_motion, seed=3)
    return header, samples


def test_write_then_read_preserves_samples(tmp_path, dataset):
    header, samples = dataset
    path = write_dataset(tmp_path / "data.jsonl", header, samples)
    loaded_header, loaded = read_dataset(path)

    assert loaded_header == header
    assert len(loaded) == len(samples)
    for a, b in zip(samples, loaded):
        np.testing.assert_array_equal(a.trajectory.points, b.trajectory.points)
        assert a.speed == b.speed
        assert a.pose_id == b.pose_id
        assert a.pose.height_m == b.pose.height_m


def test_same_seed_gives_identical_bytes(tmp_path, dataset, K, small_grid, speed_model, short_motion):
    header, samples = dataset
    again = generate_dataset(small_grid, speed_model, K, short_motion, seed=3, workers=3)
    a = write_dataset(tmp_path / "a.jsonl", header, samples)
    b = write_dataset(tmp_path / "b.jsonl", header, again)
    assert a.read_bytes() == b.read_bytes()


def test_record_layout(tmp_path, dataset):
    header, samples = dataset
    path = write_dataset(tmp_path / "data.jsonl", header, samples[:1])
    lines = path.read_text(encoding="utf-8").splitlines()
    assert json.loads(lines[0])["format"] == "trajpose-dataset"
    record = json.loads(lines[1])
    assert set(record) == {"pose_id", "height_m", "quat", "euler_deg", "speed_mps", "points"}


def test_corrupt_line_is_named(tmp_path, dataset):
    header, samples = dataset
    path = write_dataset(tmp_path / "data.jsonl", header, samples[:5])
    lines = path.read_text(encoding="utf-8").splitlines()
    lines[3] = lines[3][: len(lines[3]) // 2]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    with pytest.raises(CorruptFileError) as info:
        read_dataset(path)
    assert info.value.line == 4
    assert "line 4" in str(info.value)


def test_future_version_is_rejected(tmp_path, dataset):
    header, samples = dataset
    path = write_dataset(tmp_path / "data.jsonl", header, samples[:2])
    lines = path.read_text(encoding="utf-8").splitlines()
    first = json.loads(lines[0])
    first["version"] = 99
    lines[0] = json.dumps(first)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    with pytest.raises(VersionMismatchError):
        read_dataset(path)


def test_missing_file(tmp_path):
    with pytest.raises(CorruptFileError):
        read_dataset(tmp_path / "absent.jsonl")


def test_invalid_utf8_names_line(tmp_path, dataset):
    header, samples = dataset
    path = write_dataset(tmp_path / "data.jsonl", header, samples[:3])
    lines = path.read_bytes().split(b"\n")
    lines[1] = lines[1][:10] + b"\xff" + lines[1][11:]
    path.write_bytes(b"\n".join(lines))
    with pytest.raises(CorruptFileError) as info:
        read_dataset(path)
    assert info.value.line == 2
    assert "UTF-8" in str(info.value)


def test_directory_is_not_a_dataset(tmp_path):
    (tmp_path / "data.jsonl").mkdir()
    with pytest.raises(CorruptFileError):
        read_dataset(tmp_path / "data.jsonl")
