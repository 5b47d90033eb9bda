"""CSV emission for curves, kernel matrices and metric tables.

Files are UTF-8 with a header row. Floats use 17 significant digits so the
values read back to the identical doubles.
"""

from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np
import pandas as pd

from .kernels import KernelMatrix, NtkCurve

FLOAT_FORMAT = "%.17g"

PathLike = Union[str, Path]


def artifact_name(prefix: str, config_hash: str, step: Optional[int] = None) -> str:
    """File name for a diagnostics artifact, e.g. ``ntk-3fa2c1d09b7e-step50.csv``."""
    if step is None:
        return f"{prefix}-{config_hash}.csv"
    return f"{prefix}-{config_hash}-step{step}.csv"


def write_table(path: PathLike, frame: pd.DataFrame) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, encoding="utf-8")
    return path


def write_curve(path: PathLike, xs: Iterable, values: Iterable) -> Path:
    """Write an ``(x, value)`` curve."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim > 1:
        xs = xs[:, 0]
    return write_table(path, pd.DataFrame({"x": xs, "value": np.asarray(values, dtype=np.float64)}))


def write_ntk_curve(path: PathLike, curve: NtkCurve) -> Path:
    """Write an NTK curve with its raw and both normalized columns."""
    frame = pd.DataFrame({
        "x": curve.xs[:, 0],
        "value": curve.normalized,
        "self_normalized": curve.self_normalized,
        "raw": curve.raw,
    })
    return write_table(path, frame)


def write_matrix(path: PathLike, matrix: KernelMatrix) -> Path:
    """Write a kernel matrix in long ``(i, j, value)`` form."""
    k = matrix.k
    i, j = np.meshgrid(np.arange(k), np.arange(k), indexing="ij")
    frame = pd.DataFrame({"i": i.ravel(), "j": j.ravel(), "value": matrix.entries.ravel()})
    return write_table(path, frame)


def read_matrix(path: PathLike) -> np.ndarray:
    frame = pd.read_csv(path, float_precision="round_trip")
    k = int(frame["i"].max()) + 1
    entries = np.zeros((k, k))
    entries[frame["i"].to_numpy(), frame["j"].to_numpy()] = frame["value"].to_numpy()
    return entries
