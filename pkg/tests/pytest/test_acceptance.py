"""Experiment-scale checks. Deselected by default; run with ``pytest -m slow``."""

from pathlib import Path

import numpy as np
import pytest

from elephantlab.common.config import config
from elephantlab.common.errors import DataFetchError
from elephantlab.experiments.classification import run_class_incremental
from elephantlab.experiments.mnist import load_mnist
from elephantlab.experiments.regression import run_streaming_regression
from elephantlab.rl.dqn import dqn_train
from elephantlab.runner.experiment_config import load_experiment_config

CONFIG_DIR = Path(__file__).resolve().parents[2] / "configs"

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def mnist():
    try:
        return load_mnist(config.get("data.mnist_dir", "data/mnist"))
    except DataFetchError:
        pytest.skip("MNIST not available; run 'elephantlab data fetch-mnist'")


def test_trained_elephant_kernel_is_local():
    report = run_streaming_regression(load_experiment_config(CONFIG_DIR / "regression_elephant.yaml"), seed=0)
    assert [s.step for s in report.ntk_snapshots] == [50, 150]
    for snapshot in report.ntk_snapshots:
        curve = snapshot.curve
        far = np.abs(curve.xs[:, 0] - curve.x_t[0]) > 0.5
        assert np.max(np.abs(curve.normalized[far])) < 0.1


def test_relu_streaming_regression_is_worse():
    elephant = run_streaming_regression(load_experiment_config(CONFIG_DIR / "regression_elephant.yaml"), seed=0)
    relu = run_streaming_regression(load_experiment_config(CONFIG_DIR / "regression_relu.yaml"), seed=0)
    assert elephant.test_mse < relu.test_mse


@pytest.mark.parametrize("name, learning_rate", [("classify_elephant", 1e-3), ("classify_relu", 1e-4)])
def test_iid_split_mnist_sanity(mnist, name, learning_rate):
    experiment = load_experiment_config(CONFIG_DIR / f"{name}.yaml").with_overrides(
        {"classify.classes_per_task": 10, "optimizer.learning_rate": learning_rate})
    train, test = mnist
    report = run_class_incremental(experiment, seed=0, train=train, test=test)
    assert report.test_accuracy > 0.9


CLASSIFY_BUDGET = {"classify.max_train_samples": 20000, "classify.max_test_samples": 5000}
CLASSIFY_SEEDS = [0, 1]


def class_incremental_accuracy(mnist, name, **overrides):
    experiment = load_experiment_config(CONFIG_DIR / f"{name}.yaml").with_overrides({**CLASSIFY_BUDGET, **overrides})
    train, test = mnist
    reports = [run_class_incremental(experiment, seed=seed, train=train, test=test) for seed in CLASSIFY_SEEDS]
    assert not any(r.aborted for r in reports)
    return float(np.mean([r.test_accuracy for r in reports]))


def test_class_incremental_elephant_beats_relu(mnist):
    elephant = class_incremental_accuracy(mnist, "classify_elephant")
    relu = class_incremental_accuracy(mnist, "classify_relu")
    assert elephant > relu


def test_class_incremental_wider_elephant_is_no_worse(mnist):
    narrow = class_incremental_accuracy(mnist, "classify_elephant")
    wide = class_incremental_accuracy(mnist, "classify_elephant", **{"network.hidden": [10000]})
    assert wide >= narrow


ACROBOT_STEPS = 25000
ACROBOT_SEEDS = [0, 1, 2]
ACROBOT_FLOOR = -500.0  # every step of a capped episode costs -1


@pytest.fixture(scope="module")
def acrobot_runs():
    """Final DQN reports on Acrobot per (activation, buffer size), at a reduced step budget."""
    runs = {}
    for name in ("elephant", "relu"):
        base = load_experiment_config(CONFIG_DIR / f"dqn_acrobot_{name}.yaml")
        for buffer_size in (32, 10000):
            experiment = base.with_overrides({"dqn.total_steps": ACROBOT_STEPS, "dqn.buffer_size": buffer_size})
            runs[name, buffer_size] = [dqn_train(experiment, seed) for seed in ACROBOT_SEEDS]
    return runs


def mean_final_return(reports):
    assert not any(r.aborted for r in reports)
    return float(np.mean([r.final_return for r in reports]))


def small_buffer_ratio(runs, name):
    """Return above the episode-cap floor with 32 transitions, relative to a 1e4 buffer."""
    small = mean_final_return(runs[name, 32]) - ACROBOT_FLOOR
    large = mean_final_return(runs[name, 10000]) - ACROBOT_FLOOR
    return small / large


def test_relu_dqn_solves_acrobot_with_large_buffer(acrobot_runs):
    assert mean_final_return(acrobot_runs["relu", 10000]) > -120


def test_elephant_dqn_is_robust_to_small_buffer(acrobot_runs):
    elephant = small_buffer_ratio(acrobot_runs, "elephant")
    assert elephant >= 0.8
    assert small_buffer_ratio(acrobot_runs, "relu") < elephant


def test_elephant_td_gradients_are_less_correlated(acrobot_runs):
    means = {}
    for name in ("elephant", "relu"):
        matrices = [r.covariance[-1].matrix for r in acrobot_runs[name, 10000]]
        for matrix in matrices:
            entries = matrix.entries
            np.testing.assert_allclose(entries, entries.T, atol=1e-9)
            np.testing.assert_allclose(np.diag(entries), 1.0, atol=1e-9)
        assert all(r.covariance[-1].step == ACROBOT_STEPS for r in acrobot_runs[name, 10000])
        means[name] = np.mean([m.mean_abs_offdiag() for m in matrices])
    assert means["elephant"] < means["relu"]
