"""Tests for network checkpoints."""

import json

import numpy as np
import pytest

from elephantlab.common.errors import DataFormatError
from elephantlab.nn.activations import ActivationSpec
from elephantlab.nn.checkpoint import load_checkpoint, save_checkpoint
from elephantlab.nn.network import build_mlp, mlp_specs, predict


@pytest.fixture
def network(rng):
    return build_mlp(mlp_specs(3, [6, 4], 2, ActivationSpec("elephant", a=0.3, d=8)), 0.7, rng)


def assert_same_network(a, b):
    assert [s.to_dict() for s in a.layers] == [s.to_dict() for s in b.layers]
    for (name, x), (_, y) in zip(a.named_parameters(), b.named_parameters()):
        np.testing.assert_array_equal(x, y, err_msg=name)
    assert {i: p.d for i, p in a.elephant_params.items()} == {i: p.d for i, p in b.elephant_params.items()}


@pytest.mark.parametrize("suffix", [".npz", ".json"])
def test_round_trip_is_exact(network, suffix, tmp_path, rng):
    network.elephant_params[0].a[...] = rng.uniform(0.1, 1.0, size=6)
    path = save_checkpoint(network, tmp_path / f"net{suffix}")
    loaded = load_checkpoint(path)
    assert_same_network(network, loaded)
    x = rng.normal(size=(5, 3))
    np.testing.assert_array_equal(predict(network, x), predict(loaded, x))


def test_unknown_suffix_becomes_npz(network, tmp_path):
    path = save_checkpoint(network, tmp_path / "net.bin")
    assert path.suffix == ".npz"
    assert path.exists()


def test_missing_file(tmp_path):
    with pytest.raises(DataFormatError):
        load_checkpoint(tmp_path / "absent.npz")


def test_corrupt_json(tmp_path):
    path = tmp_path / "net.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(DataFormatError):
        load_checkpoint(path)


def test_not_an_archive(tmp_path):
    path = tmp_path / "net.npz"
    path.write_bytes(b"garbage")
    with pytest.raises(DataFormatError):
        load_checkpoint(path)


def test_wrong_format_version(network, tmp_path):
    path = save_checkpoint(network, tmp_path / "net.json")
    payload = json.loads(path.read_text(encoding="utf-8"))
    payload["format_version"] = 99
    path.write_text(json.dumps(payload), encoding="utf-8")
    with pytest.raises(DataFormatError):
        load_checkpoint(path)


def test_missing_parameter(network, tmp_path):
    path = save_checkpoint(network, tmp_path / "net.json")
    payload = json.loads(path.read_text(encoding="utf-8"))
    del payload["parameters"]["layers.1.weight"]
    path.write_text(json.dumps(payload), encoding="utf-8")
    with pytest.raises(DataFormatError):
        load_checkpoint(path)


def test_shape_mismatch(network, tmp_path):
    path = save_checkpoint(network, tmp_path / "net.json")
    payload = json.loads(path.read_text(encoding="utf-8"))
    payload["parameters"]["layers.0.weight"] = [[0.0]]
    path.write_text(json.dumps(payload), encoding="utf-8")
    with pytest.raises(DataFormatError):
        load_checkpoint(path)


@pytest.mark.parametrize("name, value", [
    ("layers.0.a", [-1.0, 0.3, 0.3, 0.3, 0.3, 0.3]),
    ("layers.1.h", [1.0, "tall", 1.0, 1.0]),
    ("layers.0.h", [[1.0]]),
])
def test_invalid_elephant_parameters(network, tmp_path, name, value):
    path = save_checkpoint(network, tmp_path / "net.json")
    payload = json.loads(path.read_text(encoding="utf-8"))
    payload["parameters"][name] = value
    path.write_text(json.dumps(payload), encoding="utf-8")
    with pytest.raises(DataFormatError, match="invalid checkpoint parameters"):
        load_checkpoint(path)


def test_nan_elephant_width(network, tmp_path):
    path = save_checkpoint(network, tmp_path / "net.npz")
    with np.load(path) as archive:
        arrays = dict(archive)
    arrays["layers.0.a"][2] = np.nan
    np.savez(path, **arrays)
    with pytest.raises(DataFormatError):
        load_checkpoint(path)
