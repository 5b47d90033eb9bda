"""Experiment configuration files.

An experiment file is YAML (or JSON when the name ends in ``.json``) with a
``harness`` key, optional ``seeds`` and ``output_dir``, and nested sections
that override :data:`DEFAULT_SECTIONS`. Every key must exist in the defaults;
anything else is rejected with the dotted key in the message.
"""

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import yaml

from ..common.config import config as app_config
from ..common.errors import ElephantLabError, ValidationError
from ..core.rng import RngState
from ..nn.activations import ActivationSpec
from ..nn.network import Network, build_mlp, matched_width, mlp_specs

HARNESSES = ("regression", "edit", "classify", "dqn", "diagnostics")
TOP_LEVEL_KEYS = {"harness", "seeds", "output_dir"}

DEFAULT_SECTIONS: Dict[str, Dict[str, Any]] = {
    "network": {
        "hidden": [1000],
        "sigma_bias": 0.0,
        "pre_layer_norm": None,
        "learnable_elephant": None,
        "match_width_to": None,
        "layer_norm_eps": 1e-5,
        "output_bias": True,
    },
    "activation": {
        "kind": "relu", "a": 0.2, "h": 1.0, "d": 4, "k": 5, "l": -20.0, "u": 20.0, "eta": None,
    },
    "optimizer": {
        "kind": "adam",
        "learning_rate": 1e-3,
        "rmsprop_decay": 0.999,
        "adam_beta1": 0.9,
        "adam_beta2": 0.999,
        "eps": 1e-8,
    },
    "regression": {
        "n_samples": 200,
        "updates_per_sample": 10,
        "n_test": 1000,
        "x_low": 0.0,
        "x_high": 2.0,
        "ntk_snapshot_steps": [50, 150],
        "divergence_mse": 1e6,
    },
    "edit": {
        "x": 1.5,
        "y": -1.5,
        "tolerance": 0.05,
        "max_updates": 1000,
        "spill_window": 0.25,
        "pretrain_epochs": 200,
        "pretrain_threshold": 0.05,
    },
    "classify": {
        "data_dir": None,
        "classes_per_task": 2,
        "batch_size": 125,
        "steps_per_batch": 1,
        "trajectory_every": 50,
        "trajectory_samples": 1000,
        "max_train_samples": None,
        "max_test_samples": None,
        "divergence_loss": 1e6,
    },
    "dqn": {
        "env": "mountain_car",
        "total_steps": None,
        "buffer_size": 10000,
        "batch_size": 32,
        "gamma": 0.99,
        "target_sync": 200,
        "epsilon_start": 1.0,
        "epsilon_end": 0.01,
        "epsilon_fraction": 0.1,
        "warmup": 1000,
        "updates_per_step": 1,
        "eval_episodes": 10,
        "final_fraction": 0.1,
        "divergence_q": 1e6,
        "covariance_steps": None,
        "covariance_samples": 32,
    },
    "diagnostics": {
        "checkpoint": None,
        "n_inputs": 1,
        "n_outputs": 1,
        "input_low": 0.0,
        "input_high": 2.0,
        "ntk_anchors": [0.5, 1.0, 1.5],
        "ntk_points": 1000,
        "include_elephant_params": False,
        "matrix_samples": 32,
        "sparsity_eps": 0.01,
        "sparsity_samples": 1000,
        "loss_kind": "squared_error",
        "covariance_samples": 32,
        "covariance_env": "mountain_car",
        "gamma": 0.99,
    },
}

# Sections each harness reads; only these take part in the config hash.
HARNESS_SECTIONS: Dict[str, tuple] = {
    "regression": ("network", "activation", "optimizer", "regression"),
    "edit": ("network", "activation", "optimizer", "edit", "regression"),
    "classify": ("network", "activation", "optimizer", "classify"),
    "dqn": ("network", "activation", "optimizer", "dqn"),
    "diagnostics": ("network", "activation", "diagnostics"),
}

_NUMBER = (int, float)


def _check_type(key: str, default: Any, value: Any) -> None:
    if default is None or value is None:
        return
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, _NUMBER):
        ok = isinstance(value, _NUMBER) and not isinstance(value, bool)
    elif isinstance(default, list):
        ok = isinstance(value, list)
    else:
        ok = isinstance(value, type(default))
    if not ok:
        raise ValidationError(f"'{key}' expects {type(default).__name__}, got {value!r}")


def _normalize(key: str, default: Any, value: Any) -> Any:
    """Cast a checked value to the type of its default.

    Integral floats become ints where the default is an int (or unset), and
    ints become floats where the default is a float, so ``4`` and ``4.0``
    describe the same experiment.
    """
    if value is None or isinstance(value, bool):
        return value
    if isinstance(value, list):
        element = default[0] if isinstance(default, list) and default else None
        return [_normalize(key, element, v) for v in value]
    if not isinstance(value, _NUMBER):
        return value
    if isinstance(default, float):
        return float(value)
    if isinstance(value, float) and (default is None or isinstance(default, int)):
        if value.is_integer():
            return int(value)
        if default is not None:
            raise ValidationError(f"'{key}' expects an integer, got {value!r}")
    return value


@dataclass
class ExperimentConfig:
    harness: str
    sections: Dict[str, Dict[str, Any]]
    seeds: List[int]
    output_dir: str = "runs"
    source: Optional[Path] = field(default=None, compare=False)

    def __getattr__(self, name: str) -> Dict[str, Any]:
        sections = self.__dict__.get("sections", {})
        if name in sections:
            return sections[name]
        raise AttributeError(name)

    @property
    def config_hash(self) -> str:
        """First 12 hex digits of SHA-256 over the canonical JSON of the sections the harness reads."""
        payload = {"harness": self.harness}
        payload.update((name, self.sections[name]) for name in HARNESS_SECTIONS[self.harness])
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]

    def activation_spec(self) -> ActivationSpec:
        return ActivationSpec(**self.sections["activation"])

    def get(self, dotted: str) -> Any:
        section, _, key = dotted.partition(".")
        if section in TOP_LEVEL_KEYS and not key:
            return getattr(self, section)
        try:
            return self.sections[section][key]
        except KeyError:
            raise ValidationError(f"Unknown config key '{dotted}'")

    def with_overrides(self, overrides: Dict[str, Any]) -> "ExperimentConfig":
        """Return a validated copy with dotted keys replaced."""
        data = self.to_dict()
        for dotted, value in overrides.items():
            section, _, key = dotted.partition(".")
            if not key:
                data[section] = value
            else:
                data.setdefault(section, {})[key] = value
        return parse_experiment_config(data, self.source)

    def to_dict(self) -> Dict[str, Any]:
        return {"harness": self.harness, "seeds": list(self.seeds), "output_dir": self.output_dir,
                **copy.deepcopy(self.sections)}

    def run_dir(self, seed: int) -> Path:
        return Path(self.output_dir) / self.config_hash / str(seed)


def default_seeds(harness: str) -> List[int]:
    return list(range(10)) if harness == "dqn" else list(range(5))


def parse_experiment_config(data: Dict[str, Any], source: Optional[Path] = None) -> ExperimentConfig:
    """Merge ``data`` over the defaults and validate it.

    Raises:
        ValidationError: On unknown keys, wrong value types, duplicate seeds
            or invalid activation parameters
    """
    if not isinstance(data, dict):
        raise ValidationError("Experiment config must be a mapping")
    harness = data.get("harness")
    if harness not in HARNESSES:
        raise ValidationError(f"'harness' must be one of {', '.join(HARNESSES)}, got {harness!r}")

    sections = copy.deepcopy(DEFAULT_SECTIONS)
    for key, value in data.items():
        if key in TOP_LEVEL_KEYS:
            continue
        if key not in sections:
            raise ValidationError(f"Unknown config key '{key}'")
        if not isinstance(value, dict):
            raise ValidationError(f"'{key}' must be a section of key/value pairs")
        for sub_key, sub_value in value.items():
            dotted = f"{key}.{sub_key}"
            if sub_key not in sections[key]:
                raise ValidationError(f"Unknown config key '{dotted}'")
            default = DEFAULT_SECTIONS[key][sub_key]
            _check_type(dotted, default, sub_value)
            sections[key][sub_key] = _normalize(dotted, default, sub_value)

    seeds = data.get("seeds")
    if seeds is None:
        seeds = default_seeds(harness)
    if not isinstance(seeds, list) or not seeds:
        raise ValidationError("'seeds' must be a non-empty list of integers")
    if any(not isinstance(s, int) or isinstance(s, bool) or s < 0 for s in seeds):
        raise ValidationError(f"'seeds' must hold non-negative integers, got {seeds}")
    if len(set(seeds)) != len(seeds):
        raise ValidationError(f"'seeds' must be distinct, got {seeds}")

    hidden = sections["network"]["hidden"]
    if not hidden or any(not isinstance(w, int) or w < 1 for w in hidden):
        raise ValidationError(f"'network.hidden' must be a non-empty list of positive widths, got {hidden}")
    try:
        ActivationSpec(**sections["activation"])
    except (ElephantLabError, ValueError) as e:
        raise ValidationError(f"'activation': {e}")

    return ExperimentConfig(harness=harness, sections=sections, seeds=list(seeds),
                            output_dir=str(data.get("output_dir") or app_config.get("runner.output_dir", "runs")),
                            source=source)


def load_experiment_config(path: Union[str, Path]) -> ExperimentConfig:
    """Read and validate an experiment file."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"Experiment config not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise ValidationError(f"Could not parse {path}: {e}")
    return parse_experiment_config(data or {}, path)


def network_from_config(config: ExperimentConfig, n_inputs: int, n_outputs: int, rng: RngState,
                        pre_layer_norm_default: Optional[bool] = None,
                        learnable_default: bool = True) -> Network:
    """Build the network described by the ``network`` and ``activation`` sections.

    ``null`` values for ``pre_layer_norm`` and ``learnable_elephant`` fall back
    to the harness defaults passed here.
    """
    section = config.network
    activation = config.activation_spec()
    hidden = list(section["hidden"])
    learnable = section["learnable_elephant"]
    if learnable is None:
        learnable = learnable_default
    if section["match_width_to"]:
        hidden = [matched_width(n_inputs, n_outputs, activation, int(section["match_width_to"]), learnable)]
    pre_layer_norm = section["pre_layer_norm"]
    if pre_layer_norm is None:
        pre_layer_norm = pre_layer_norm_default
    specs = mlp_specs(n_inputs, hidden, n_outputs, activation, pre_layer_norm, section["output_bias"])
    return build_mlp(specs, float(section["sigma_bias"]), rng, learnable, float(section["layer_norm_eps"]))
