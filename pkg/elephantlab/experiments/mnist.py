"""MNIST in IDX format: reading, downloading and checksum verification.

IDX files are big-endian. Image files start with the magic number
``0x00000803`` followed by count, rows and columns; label files start with
``0x00000801`` followed by the count. Either may be gzip-compressed.
"""

import gzip
import hashlib
import shutil
import struct
import urllib.error
import urllib.request
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from ..common.config import config
from ..common.errors import DataFetchError, DataFormatError
from ..common.logging import logger

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

MNIST_FILES: Dict[str, Tuple[str, str]] = {
    "train_images": ("train-images-idx3-ubyte.gz", "f68b3c2dcbeaaa9fbdd348bbdeb94873"),
    "train_labels": ("train-labels-idx1-ubyte.gz", "d53e105ee54ea40749a09fcbcd1e9432"),
    "test_images": ("t10k-images-idx3-ubyte.gz", "9fb629c4189551a2d022fa330f9573f3"),
    "test_labels": ("t10k-labels-idx1-ubyte.gz", "ec29112dd5afa0611ce80d1b7f02629c"),
}

PathLike = Union[str, Path]


@dataclass
class LabeledDataset:
    inputs: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        if self.inputs.ndim != 2 or len(self.inputs) != len(self.labels):
            raise DataFormatError(
                f"Inputs {self.inputs.shape} and labels {self.labels.shape} do not describe the same samples")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise DataFormatError(f"Labels fall outside [0, {self.n_classes})")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def take(self, indices) -> "LabeledDataset":
        return LabeledDataset(self.inputs[indices], self.labels[indices], self.n_classes)


def _read_bytes(path: Path) -> bytes:
    with open(path, "rb") as f:
        head = f.read(2)
    opener = gzip.open if head == b"\x1f\x8b" else open
    try:
        with opener(path, "rb") as f:
            return f.read()
    except (OSError, EOFError) as e:
        raise DataFormatError(f"{path}: cannot decompress ({e})")


def _header(data: bytes, path: Path, fields: int, magic: int) -> Tuple[int, ...]:
    size = 4 * fields
    if len(data) < size:
        raise DataFormatError(f"{path}: truncated header, file ends at offset {len(data)} before offset {size}")
    values = struct.unpack(f">{fields}I", data[:size])
    if values[0] != magic:
        raise DataFormatError(f"{path}: bad magic number 0x{values[0]:08x} at offset 0, expected 0x{magic:08x}")
    return values


def read_idx_images(path: PathLike) -> np.ndarray:
    """Images as a ``(count, rows * cols)`` float64 array scaled to [0, 1]."""
    path = Path(path)
    data = _read_bytes(path)
    _, count, rows, cols = _header(data, path, 4, IMAGES_MAGIC)
    expected = 16 + count * rows * cols
    if len(data) < expected:
        raise DataFormatError(f"{path}: truncated pixel data, file ends at offset {len(data)}, expected {expected}")
    pixels = np.frombuffer(data, dtype=np.uint8, count=count * rows * cols, offset=16)
    return pixels.reshape(count, rows * cols).astype(np.float64) / 255.0


def read_idx_labels(path: PathLike) -> np.ndarray:
    path = Path(path)
    data = _read_bytes(path)
    _, count = _header(data, path, 2, LABELS_MAGIC)
    if len(data) < 8 + count:
        raise DataFormatError(f"{path}: truncated labels, file ends at offset {len(data)}, expected {8 + count}")
    return np.frombuffer(data, dtype=np.uint8, count=count, offset=8).astype(np.int64)


def load_idx(images_path: PathLike, labels_path: PathLike, n_classes: Optional[int] = None) -> LabeledDataset:
    """Read an image file and its label file into a :class:`LabeledDataset`.

    Raises:
        DataFormatError: On a bad magic number, truncation or a count mismatch;
            the message names the byte offset
    """
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if len(images) != len(labels):
        raise DataFormatError(
            f"Count mismatch at offset 4: {images_path} holds {len(images)} images, "
            f"{labels_path} holds {len(labels)} labels")
    if n_classes is None:
        n_classes = int(labels.max()) + 1 if len(labels) else 0
    return LabeledDataset(images, labels, n_classes)


def md5sum(path: Path) -> str:
    digest = hashlib.md5()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _download(url: str, target: Path, timeout: float) -> None:
    partial = target.with_name(target.name + ".part")
    try:
        with urllib.request.urlopen(url, timeout=timeout) as response, open(partial, "wb") as out:
            shutil.copyfileobj(response, out)
        partial.replace(target)
    finally:
        if partial.exists():
            partial.unlink()


def fetch_mnist(directory: Optional[PathLike] = None, mirrors: Optional[List[str]] = None,
                verify_only: bool = False, timeout: Optional[float] = None) -> Dict[str, Path]:
    """Make sure the four MNIST files exist in ``directory`` with the expected MD5 sums.

    Missing or corrupt files are downloaded from each mirror in turn.

    Raises:
        DataFetchError: If a file cannot be obtained, or is missing or corrupt
            when ``verify_only`` is set
    """
    directory = Path(directory or config.get("data.mnist_dir", "data/mnist"))
    mirrors = mirrors or config.get("data.mnist_mirrors", [])
    timeout = float(timeout or config.get("data.download_timeout", 30))
    directory.mkdir(parents=True, exist_ok=True)

    paths = {}
    for key, (name, checksum) in MNIST_FILES.items():
        target = directory / name
        if target.exists() and md5sum(target) == checksum:
            logger.debug(f"{target} verified")
            paths[key] = target
            continue
        if verify_only:
            state = "corrupt" if target.exists() else "missing"
            raise DataFetchError(f"{target} is {state}")

        for base in mirrors:
            url = base.rstrip("/") + "/" + name
            logger.info(f"Downloading {url}")
            try:
                _download(url, target, timeout)
            except (urllib.error.URLError, OSError) as e:
                logger.warning(f"Download from {url} failed: {e}")
                continue
            if md5sum(target) == checksum:
                break
            logger.warning(f"Checksum mismatch for {url}")
            target.unlink()
        else:
            raise DataFetchError(f"Could not fetch {name} from any mirror")
        paths[key] = target
    return paths


def _locate(directory: Path, name: str) -> Path:
    for candidate in (directory / name, directory / name[:-3]):
        if candidate.exists():
            return candidate
    raise DataFetchError(f"{name} not found in {directory}; run 'elephantlab data fetch-mnist {directory}'")


def load_mnist(directory: Optional[PathLike] = None) -> Tuple[LabeledDataset, LabeledDataset]:
    """Load the train and test splits from ``directory`` (gzipped or raw files)."""
    directory = Path(directory or config.get("data.mnist_dir", "data/mnist"))
    files = {key: _locate(directory, name) for key, (name, _) in MNIST_FILES.items()}
    train = load_idx(files["train_images"], files["train_labels"], n_classes=10)
    test = load_idx(files["test_images"], files["test_labels"], n_classes=10)
    return train, test
