"""Tests for the split stream and the class-incremental harness."""

from pathlib import Path

import numpy as np
import pytest
from scipy.special import log_softmax

from elephantlab.common.errors import SpecError
from elephantlab.core.rng import RngState
from elephantlab.experiments.classification import (accuracy_by_task, cross_entropy_gradient, make_split_stream,
                                                    run_class_incremental, task_classes)
from elephantlab.experiments.mnist import LabeledDataset
from elephantlab.nn.activations import ActivationSpec
from elephantlab.nn.network import build_mlp, flatten_gradients, mlp_specs
from elephantlab.runner.experiment_config import parse_experiment_config


def blobs(n, rng, n_classes=4, dim=8, noise=0.3):
    labels = np.repeat(np.arange(n_classes), n // n_classes)
    centers = 3.0 * np.eye(n_classes, dim)
    inputs = centers[labels] + noise * rng.normal(size=(len(labels), dim))
    return LabeledDataset(inputs, labels, n_classes)


def classify_config(**classify):
    section = {"classes_per_task": 2, "batch_size": 5, "steps_per_batch": 2, "trajectory_every": 4,
               "trajectory_samples": 20}
    section.update(classify)
    return parse_experiment_config({
        "harness": "classify",
        "seeds": [0],
        "network": {"hidden": [16]},
        "activation": {"kind": "relu"},
        "optimizer": {"kind": "adam", "learning_rate": 3e-2},
        "classify": section,
    })


class TestSplitStream:

    def test_task_classes(self):
        assert task_classes(10, 2) == [[0, 1], [2, 3], [4, 5], [6, 7], [8, 9]]
        assert task_classes(10, 10) == [list(range(10))]

    def test_indivisible(self):
        with pytest.raises(SpecError):
            task_classes(10, 3)

    def test_order_and_completeness(self, rng):
        ds = blobs(40, rng)
        stream = make_split_stream(ds, 2, 6, rng)
        assert stream.n_tasks == 2
        assert stream.n_samples == 40
        seen = np.concatenate([y for _, y in stream.batches])
        assert sorted(seen.tolist()) == sorted(ds.labels.tolist())
        # every task-0 sample arrives before any task-1 sample
        assert np.all(seen[:20] < 2) and np.all(seen[20:] >= 2)
        assert stream.task_of_batch == sorted(stream.task_of_batch)

    def test_batches_never_mix_tasks(self, rng):
        stream = make_split_stream(blobs(40, rng), 2, 7, rng)
        for (_, y), task in zip(stream.batches, stream.task_of_batch):
            assert set(y.tolist()) <= set(stream.task_classes[task])
            assert len(y) <= 7

    def test_single_task(self, rng):
        stream = make_split_stream(blobs(40, rng), 4, 10, rng)
        assert stream.n_tasks == 1
        assert len(stream) == 4

    def test_shuffled_within_task(self):
        ds = blobs(400, RngState(0))
        a = make_split_stream(ds, 2, 400, RngState(1))
        b = make_split_stream(ds, 2, 400, RngState(2))
        assert not np.array_equal(a.batches[0][0], b.batches[0][0])

    def test_bad_batch(self, rng):
        with pytest.raises(SpecError):
            make_split_stream(blobs(8, rng), 2, 0, rng)


class TestLoss:

    def test_gradient_matches_finite_differences(self, rng):
        net = build_mlp(mlp_specs(3, [5], 4, ActivationSpec("tanh")), 0.0, rng)
        x = rng.normal(size=(6, 3))
        y = rng.integers(0, 4, size=6)

        def loss_at():
            logits = net.weights[1] @ np.tanh(net.weights[0] @ x.T + net.biases[0][:, None]) \
                + net.biases[1][:, None]
            return -np.mean(log_softmax(logits.T, axis=1)[np.arange(6), y])

        loss, grad = cross_entropy_gradient(net, x, y)
        assert loss == pytest.approx(loss_at(), rel=1e-12)
        numeric = []
        for _, param in net.named_parameters():
            flat = param.reshape(-1)
            for j in range(flat.size):
                original = flat[j]
                flat[j] = original + 1e-6
                plus = loss_at()
                flat[j] = original - 1e-6
                minus = loss_at()
                flat[j] = original
                numeric.append((plus - minus) / 2e-6)
        np.testing.assert_allclose(flatten_gradients(grad), numeric, rtol=1e-5, atol=1e-8)

    def test_accuracy_by_task(self, rng):
        ds = blobs(40, rng)
        net = build_mlp(mlp_specs(8, [4], 4, ActivationSpec("relu")), 0.0, rng)
        net.weights[1][...] = 0.0
        net.biases[1][...] = [0.0, 0.0, 0.0, 1.0]
        overall, per_task = accuracy_by_task(net, ds, [[0, 1], [2, 3]])
        assert overall == pytest.approx(0.25)
        assert per_task == [0.0, 0.5]


class TestClassIncremental:

    def test_single_pass_report(self, rng):
        train, test = blobs(80, rng), blobs(40, rng)
        report = run_class_incremental(classify_config(), seed=0, train=train, test=test)
        assert not report.aborted
        assert report.samples_seen == 80
        assert report.batches == 16
        assert len(report.trajectory) == 4
        assert set(report.trajectory[0]) == {"batch", "samples_seen", "accuracy", "task0", "task1"}
        assert len(report.task_accuracy) == 2
        assert 0.0 <= report.test_accuracy <= 1.0

    def test_iid_stream_learns(self, rng):
        train, test = blobs(200, rng), blobs(100, rng)
        report = run_class_incremental(classify_config(classes_per_task=4), seed=0, train=train, test=test)
        assert report.test_accuracy > 0.9

    def test_sample_limits(self, rng):
        train, test = blobs(80, rng), blobs(40, rng)
        config = classify_config(max_train_samples=20, max_test_samples=10)
        report = run_class_incremental(config, seed=0, train=train, test=test)
        assert report.samples_seen == 20

    def test_deterministic(self, rng):
        train, test = blobs(80, rng), blobs(40, rng)
        a = run_class_incremental(classify_config(), seed=3, train=train, test=test)
        b = run_class_incremental(classify_config(), seed=3, train=train, test=test)
        assert a.trajectory == b.trajectory
        assert a.final_loss == b.final_loss

    def test_divergence_aborts(self, rng):
        train, test = blobs(80, rng), blobs(40, rng)
        report = run_class_incremental(classify_config(divergence_loss=1e-9), seed=0, train=train, test=test)
        assert report.aborted
        assert report.batches == 1

    def test_trajectory_artifact(self, rng, tmp_path):
        train, test = blobs(80, rng), blobs(40, rng)
        report = run_class_incremental(classify_config(), seed=0, train=train, test=test)
        files = report.write_artifacts(tmp_path)
        assert Path(files["trajectory"]).exists()
