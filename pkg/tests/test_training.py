import math

import numpy as np
import pytest

from advrep import (
    DannConfig,
    OptimizerState,
    TrainConfig,
    dann_batch_loss,
    forward_full,
    init_params,
    run_cv,
    run_training_with_snapshots,
    stratified_kfold,
    train_epoch,
)
from advrep import autodiff as ad
from advrep.errors import ContractError, StratificationError
from advrep.training import cv_mean_std, read_metrics_csv, write_metrics_csv

from conftest import rel_err


class TestStratifiedKfold:
    def test_70_30_split_proportions(self):
        labels = np.array([0] * 70 + [1] * 30)
        folds = stratified_kfold(labels, 5, seed=0)
        for _, val in folds:
            assert np.sum(labels[val] == 0) == 14
            assert np.sum(labels[val] == 1) == 6

    def test_partition_property(self):
        rng = np.random.default_rng(1)
        labels = rng.integers(0, 3, 57)
        folds = stratified_kfold(labels, 4, seed=3)
        all_val = np.concatenate([val for _, val in folds])
        assert sorted(all_val.tolist()) == list(range(57))
        for i, (_, val_i) in enumerate(folds):
            for j, (_, val_j) in enumerate(folds):
                if i < j:
                    assert not set(val_i) & set(val_j)

    def test_proportions_within_one_sample(self):
        rng = np.random.default_rng(2)
        labels = rng.integers(0, 2, 103)
        k = 5
        folds = stratified_kfold(labels, k, seed=7)
        for cls in (0, 1):
            total = np.sum(labels == cls)
            for _, val in folds:
                share = np.sum(labels[val] == cls)
                assert math.floor(total / k) <= share <= math.ceil(total / k)

    def test_deterministic(self):
        labels = np.random.default_rng(3).integers(0, 2, 40)
        a = stratified_kfold(labels, 4, seed=9)
        b = stratified_kfold(labels, 4, seed=9)
        for (ta, va), (tb, vb) in zip(a, b):
            assert np.array_equal(ta, tb) and np.array_equal(va, vb)

    def test_small_class_rejected(self):
        with pytest.raises(StratificationError):
            stratified_kfold(np.array([0, 0, 0, 1]), 3, seed=0)

    def test_k1_rejected(self):
        with pytest.raises(ContractError):
            stratified_kfold(np.array([0, 1, 0, 1]), 1, seed=0)


class TestBatchLoss:
    def test_uniform_domain_prob_gives_log_k(self):
        k = 5
        label_prob = ad.Tensor(np.full((8, 1), 0.5))
        domain_prob = ad.Tensor(np.full((8, k), 1.0 / k))
        y = np.random.default_rng(0).integers(0, 2, 8)
        d = np.random.default_rng(1).integers(0, k, 8)
        _, loss_d = dann_batch_loss(label_prob, domain_prob, y, d)
        assert loss_d.item() == pytest.approx(math.log(k), rel=1e-12)

    def test_perfect_labels_at_clamp_floor(self):
        y = np.array([1, 0, 1, 0])
        label_prob = ad.Tensor(np.array([[1.0], [0.0], [1.0], [0.0]]))
        domain_prob = ad.Tensor(np.full((4, 2), 0.5))
        loss_y, _ = dann_batch_loss(label_prob, domain_prob, y, np.zeros(4, dtype=int))
        assert loss_y.item() <= -math.log(1 - 1e-7) + 1e-15

    def test_domain_gradient_into_extractor_scales_with_lambda(self, tiny_dataset):
        cfg = DannConfig(input_dim=tiny_dataset.n_features, n_domains=3, hidden_dim=8)
        params = init_params(cfg, np.random.default_rng(4))
        x = tiny_dataset.X[:20]
        d = tiny_dataset.domain[:20]

        def grads_theta_f(lam):
            fw = forward_full(params, x, mode="eval", grl_lambda=lam)
            loss = ad.ce_loss(fw.domain_prob, d)
            graph = ad.ComputeGraph.trace(loss)
            ad.backward(graph, loss)
            return {
                k: fw.param_tensors[k].grad
                for k in params.parameter_keys()
                if k.startswith("feature_extractor") and fw.param_tensors[k].grad is not None
            }

        lam = 0.01
        with_grl = grads_theta_f(lam)
        without = grads_theta_f(-1.0)  # backward factor -(-1) = +1: plain pass-through
        for key, grad in with_grl.items():
            assert rel_err(grad, -lam * without[key], floor=1e-12) < 1e-9


class TestTrainEpoch:
    def _setup(self, dataset, seed=0, **overrides):
        cfg = TrainConfig(epochs=1, batch_size=16, seed=seed, **overrides)
        dann_cfg = DannConfig(
            input_dim=dataset.n_features, n_domains=dataset.n_domains, hidden_dim=8
        )
        params = init_params(dann_cfg, np.random.default_rng(seed))
        return cfg, params, OptimizerState.create(params)

    def test_loss_decreases_on_separable_toy(self):
        rng = np.random.default_rng(5)
        from advrep import Dataset

        n = 80
        y = np.repeat([0, 1], n // 2)
        X = rng.normal(size=(n, 6))
        X[:, 0] += 4.0 * y  # cleanly separable direction
        d = np.tile([0, 1], n // 2)
        ds = Dataset(X, d, y, [f"g{i}" for i in range(6)], [f"s{i}" for i in range(n)])
        cfg, params, state = self._setup(ds, seed=1, lr=0.01)
        first = None
        rng_epochs = np.random.default_rng(2)
        for _ in range(50):
            params, state, metrics = train_epoch(
                params, state, ds, np.arange(n), cfg, rng_epochs
            )
            first = metrics["label_loss"] if first is None else first
        assert metrics["label_loss"] < first

    def test_accuracy_matches_brute_count(self, tiny_dataset):
        cfg, params, state = self._setup(tiny_dataset, seed=3)
        idx = np.arange(tiny_dataset.n_samples)
        _, _, metrics = train_epoch(
            params, state, tiny_dataset, idx, cfg, np.random.default_rng(0)
        )
        assert 0.0 <= metrics["label_acc"] <= 1.0
        assert 0.0 <= metrics["domain_acc"] <= 1.0

    def test_lr_zero_keeps_params(self, tiny_dataset):
        cfg, params, state = self._setup(tiny_dataset, seed=4, lr=0.0, weight_decay=0.0)
        before = {k: v.copy() for k, v in params.weights.items()}
        updated, _, _ = train_epoch(
            params, state, tiny_dataset, np.arange(tiny_dataset.n_samples), cfg,
            np.random.default_rng(0),
        )
        for key in params.parameter_keys():
            assert np.array_equal(updated.weights[key], before[key]), key

    def test_single_sample_remainder_dropped(self, tiny_dataset):
        cfg, params, state = self._setup(tiny_dataset, seed=5)
        # 17 = 16 + 1: the final remainder batch of 1 must be skipped
        _, _, metrics = train_epoch(
            params, state, tiny_dataset, np.arange(17), cfg, np.random.default_rng(0)
        )
        assert metrics["label_loss"] >= 0.0

    def test_empty_indices_rejected(self, tiny_dataset):
        cfg, params, state = self._setup(tiny_dataset)
        with pytest.raises(ContractError):
            train_epoch(params, state, tiny_dataset, np.array([], dtype=int), cfg,
                        np.random.default_rng(0))


class TestRuns:
    def test_run_cv_shapes_and_aggregate(self, tiny_dataset):
        cfg = TrainConfig(epochs=3, batch_size=32, folds=3, seed=6)
        folds = run_cv(tiny_dataset, cfg)
        assert len(folds) == 3
        assert all(len(records) == 3 for records in folds)
        for records in folds:
            assert [r.epoch for r in records] == [1, 2, 3]
        agg = cv_mean_std(folds)
        assert agg["label_acc_val_mean"].shape == (3,)
        assert np.all(agg["label_acc_val_std"] >= 0)

    def test_run_cv_k1_rejected(self, tiny_dataset):
        with pytest.raises(ContractError):
            run_cv(tiny_dataset, TrainConfig(epochs=1, folds=1, seed=0))

    def test_training_reproducible_bit_identical(self, tiny_dataset):
        cfg = TrainConfig(epochs=4, batch_size=32, seed=8)
        a = run_training_with_snapshots(tiny_dataset, cfg, [2, 4])
        b = run_training_with_snapshots(tiny_dataset, cfg, [2, 4])
        for ra, rb in zip(a.records, b.records):
            assert ra == rb
        for key in a.params.parameter_keys():
            assert np.array_equal(a.params.weights[key], b.params.weights[key])
        for epoch in (2, 4):
            for layer in a.snapshots[epoch]:
                assert np.array_equal(
                    a.snapshots[epoch][layer].values, b.snapshots[epoch][layer].values
                )

    def test_snapshot_contract(self, tiny_dataset):
        cfg = TrainConfig(epochs=3, batch_size=32, seed=9)
        with pytest.raises(ContractError):
            run_training_with_snapshots(tiny_dataset, cfg, [0, 2])
        record = run_training_with_snapshots(tiny_dataset, cfg, [1, 3])
        assert set(record.snapshots) == {1, 3}
        for epoch in (1, 3):
            assert len(record.snapshots[epoch]) == 3
            for mat in record.snapshots[epoch].values():
                assert mat.values.shape[0] == tiny_dataset.n_samples
                assert mat.epoch == epoch

    def test_metrics_csv_roundtrip(self, tiny_dataset, tmp_path):
        cfg = TrainConfig(epochs=2, batch_size=32, seed=10)
        record = run_training_with_snapshots(tiny_dataset, cfg, [])
        path = tmp_path / "metrics.csv"
        write_metrics_csv(path, [record.records])
        rows = read_metrics_csv(path)
        assert len(rows) == 2 * 2  # epochs x splits
        assert rows[0]["split"] == "train" and rows[1]["split"] == "val"
        assert float(rows[1]["label_acc"]) == record.records[0].label_acc_val
