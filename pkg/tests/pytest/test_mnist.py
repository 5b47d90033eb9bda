"""Tests for IDX reading and MNIST fetching, on small synthetic files."""

import gzip
import struct

import numpy as np
import pytest

from elephantlab.common.errors import DataFetchError, DataFormatError
from elephantlab.experiments import mnist
from elephantlab.experiments.mnist import (IMAGES_MAGIC, LABELS_MAGIC, LabeledDataset, fetch_mnist, load_idx,
                                           load_mnist, md5sum, read_idx_images, read_idx_labels)


def idx_images(pixels, magic=IMAGES_MAGIC):
    count, rows, cols = pixels.shape
    return struct.pack(">4I", magic, count, rows, cols) + pixels.astype(np.uint8).tobytes()


def idx_labels(labels, magic=LABELS_MAGIC):
    return struct.pack(">2I", magic, len(labels)) + np.asarray(labels, dtype=np.uint8).tobytes()


@pytest.fixture
def pixels():
    return np.arange(3 * 2 * 2, dtype=np.uint8).reshape(3, 2, 2) * 20


def write(path, payload, compress=False):
    path.write_bytes(gzip.compress(payload) if compress else payload)
    return path


class TestIdx:

    @pytest.mark.parametrize("compress", [False, True])
    def test_read_images(self, tmp_path, pixels, compress):
        path = write(tmp_path / "images", idx_images(pixels), compress)
        images = read_idx_images(path)
        assert images.shape == (3, 4)
        np.testing.assert_allclose(images[1], pixels[1].ravel() / 255.0)
        assert images.max() <= 1.0

    def test_read_labels(self, tmp_path):
        path = write(tmp_path / "labels", idx_labels([3, 1, 4]), compress=True)
        np.testing.assert_array_equal(read_idx_labels(path), [3, 1, 4])

    def test_load_idx(self, tmp_path, pixels):
        images = write(tmp_path / "images", idx_images(pixels))
        labels = write(tmp_path / "labels", idx_labels([0, 2, 1]))
        dataset = load_idx(images, labels)
        assert len(dataset) == 3
        assert dataset.dim == 4
        assert dataset.n_classes == 3

    def test_bad_magic(self, tmp_path, pixels):
        path = write(tmp_path / "images", idx_images(pixels, magic=LABELS_MAGIC))
        with pytest.raises(DataFormatError, match="offset 0"):
            read_idx_images(path)

    def test_truncated_pixels(self, tmp_path, pixels):
        path = write(tmp_path / "images", idx_images(pixels)[:-1])
        with pytest.raises(DataFormatError, match="offset 27"):
            read_idx_images(path)

    def test_truncated_header(self, tmp_path):
        path = write(tmp_path / "labels", struct.pack(">I", LABELS_MAGIC))
        with pytest.raises(DataFormatError, match="offset 4"):
            read_idx_labels(path)

    def test_empty_file(self, tmp_path):
        path = write(tmp_path / "images", b"")
        with pytest.raises(DataFormatError):
            read_idx_images(path)

    def test_count_mismatch(self, tmp_path, pixels):
        images = write(tmp_path / "images", idx_images(pixels))
        labels = write(tmp_path / "labels", idx_labels([0, 1]))
        with pytest.raises(DataFormatError, match="Count mismatch"):
            load_idx(images, labels)

    def test_labels_out_of_range(self):
        with pytest.raises(DataFormatError):
            LabeledDataset(np.zeros((2, 3)), np.array([0, 10]), 10)

    def test_take(self):
        dataset = LabeledDataset(np.arange(6.0).reshape(3, 2), np.array([0, 1, 2]), 3)
        subset = dataset.take([2, 0])
        np.testing.assert_array_equal(subset.labels, [2, 0])
        assert subset.n_classes == 3


@pytest.fixture
def mirror(tmp_path, pixels, monkeypatch):
    """A local mirror of tiny gzipped IDX files, registered in place of the real file table."""
    source = tmp_path / "mirror"
    source.mkdir()
    payloads = {
        "train_images": ("train-images-idx3-ubyte.gz", idx_images(pixels)),
        "train_labels": ("train-labels-idx1-ubyte.gz", idx_labels([0, 9, 1])),
        "test_images": ("t10k-images-idx3-ubyte.gz", idx_images(pixels[:2])),
        "test_labels": ("t10k-labels-idx1-ubyte.gz", idx_labels([5, 5])),
    }
    table = {}
    for key, (name, payload) in payloads.items():
        path = write(source / name, payload, compress=True)
        table[key] = (name, md5sum(path))
    monkeypatch.setattr(mnist, "MNIST_FILES", table)
    return source


class TestFetch:

    def test_download_and_load(self, tmp_path, mirror):
        target = tmp_path / "data"
        paths = fetch_mnist(target, mirrors=[mirror.as_uri()], timeout=5)
        assert set(paths) == {"train_images", "train_labels", "test_images", "test_labels"}
        train, test = load_mnist(target)
        assert len(train) == 3 and len(test) == 2
        assert train.n_classes == 10
        assert not list(target.glob("*.part"))

    def test_falls_back_to_next_mirror(self, tmp_path, mirror):
        target = tmp_path / "data"
        missing = (tmp_path / "nowhere").as_uri()
        paths = fetch_mnist(target, mirrors=[missing, mirror.as_uri()], timeout=5)
        assert all(p.exists() for p in paths.values())

    def test_verify_only_missing(self, tmp_path, mirror):
        with pytest.raises(DataFetchError, match="missing"):
            fetch_mnist(tmp_path / "empty", mirrors=[mirror.as_uri()], verify_only=True)

    def test_verify_only_corrupt(self, tmp_path, mirror):
        target = tmp_path / "data"
        fetch_mnist(target, mirrors=[mirror.as_uri()], timeout=5)
        (target / "train-labels-idx1-ubyte.gz").write_bytes(b"corrupt")
        with pytest.raises(DataFetchError, match="corrupt"):
            fetch_mnist(target, verify_only=True)

    def test_no_mirror_has_it(self, tmp_path, mirror):
        with pytest.raises(DataFetchError):
            fetch_mnist(tmp_path / "data", mirrors=[(tmp_path / "nowhere").as_uri()], timeout=5)

    def test_load_without_files(self, tmp_path):
        with pytest.raises(DataFetchError, match="fetch-mnist"):
            load_mnist(tmp_path)
