"""Network checkpoints.

Two formats share one layout, selected by file suffix:

- ``.npz``: numpy archive holding every parameter array under its name plus a
  ``__meta__`` entry with the JSON architecture. Round trips are bit-exact.
- ``.json``: the same metadata with parameters as nested lists. Python writes
  floats with ``repr``, which reads back to the identical double.
"""

import json
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np

from ..common.errors import DataFormatError, ElephantLabError
from ..common.logging import logger
from .activations import ElephantParams
from .network import LayerSpec, Network

FORMAT_VERSION = 1
META_KEY = "__meta__"


def _metadata(net: Network) -> Dict[str, Any]:
    return {
        "format_version": FORMAT_VERSION,
        "layers": [spec.to_dict() for spec in net.layers],
        "layer_norm_eps": net.layer_norm_eps,
        "elephant": {str(i): {"d": p.d, "trainable": p.trainable}
                     for i, p in net.elephant_params.items()},
    }


def _arrays(net: Network) -> Dict[str, np.ndarray]:
    arrays = {}
    for i in range(len(net.layers)):
        arrays[f"layers.{i}.weight"] = net.weights[i]
        arrays[f"layers.{i}.bias"] = net.biases[i]
    for i, params in net.elephant_params.items():
        arrays[f"layers.{i}.a"] = params.a
        arrays[f"layers.{i}.h"] = params.h
    return arrays


def _assemble(meta: Dict[str, Any], arrays: Dict[str, np.ndarray], source: Path) -> Network:
    version = meta.get("format_version")
    if version != FORMAT_VERSION:
        raise DataFormatError(f"{source}: unsupported checkpoint format_version {version}")
    try:
        layers = [LayerSpec.from_dict(d) for d in meta["layers"]]
        weights = [np.asarray(arrays[f"layers.{i}.weight"], dtype=np.float64) for i in range(len(layers))]
        biases = [np.asarray(arrays[f"layers.{i}.bias"], dtype=np.float64) for i in range(len(layers))]
        elephant = {
            int(i): ElephantParams(a=np.array(arrays[f"layers.{i}.a"], dtype=np.float64),
                                   h=np.array(arrays[f"layers.{i}.h"], dtype=np.float64),
                                   d=int(p["d"]), trainable=bool(p["trainable"]))
            for i, p in meta.get("elephant", {}).items()
        }
    except KeyError as e:
        raise DataFormatError(f"{source}: checkpoint is missing {e}")
    except (ElephantLabError, ValueError, TypeError) as e:
        raise DataFormatError(f"{source}: invalid checkpoint parameters: {e}")
    for i, (spec, w, b) in enumerate(zip(layers, weights, biases)):
        if w.shape != (spec.out_features, spec.in_features) or b.shape != (spec.out_features,):
            raise DataFormatError(f"{source}: layer {i} arrays do not match the architecture")
    return Network(layers=layers, weights=[w.copy() for w in weights], biases=[b.copy() for b in biases],
                   elephant_params=elephant, layer_norm_eps=float(meta["layer_norm_eps"]))


def save_checkpoint(net: Network, path: Union[str, Path]) -> Path:
    """Write ``net`` to ``path`` (``.npz`` or ``.json``)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = _metadata(net)
    if path.suffix == ".json":
        payload = dict(meta)
        payload["parameters"] = {name: array.tolist() for name, array in _arrays(net).items()}
        path.write_text(json.dumps(payload), encoding="utf-8")
    else:
        if path.suffix != ".npz":
            path = path.with_suffix(".npz")
        np.savez(path, **{META_KEY: np.array(json.dumps(meta))}, **_arrays(net))
    logger.debug(f"Saved checkpoint to {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> Network:
    """Read a network written by :func:`save_checkpoint`.

    Raises:
        DataFormatError: If the file is not a readable checkpoint
    """
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"Checkpoint not found: {path}")
    if path.suffix == ".json":
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise DataFormatError(f"{path}: invalid JSON at offset {e.pos}")
        try:
            arrays = {k: np.asarray(v, dtype=np.float64) for k, v in payload.get("parameters", {}).items()}
        except (ValueError, TypeError) as e:
            raise DataFormatError(f"{path}: invalid checkpoint parameters: {e}")
        return _assemble(payload, arrays, path)

    try:
        with np.load(path, allow_pickle=False) as archive:
            arrays = {name: archive[name] for name in archive.files}
    except (OSError, ValueError) as e:
        raise DataFormatError(f"{path}: not a checkpoint archive ({e})")
    if META_KEY not in arrays:
        raise DataFormatError(f"{path}: checkpoint has no metadata")
    meta = json.loads(str(arrays.pop(META_KEY)))
    return _assemble(meta, arrays, path)
