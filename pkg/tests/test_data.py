"""Synthetic data, Dirichlet partitioning, batching, and CSV ingestion."""

from __future__ import annotations

import numpy as np
import pytest

from fedsparse.data import (LabeledDataset, batch_indices, lda_partition,
                            load_csv, make_synthetic, split_dataset)
from fedsparse.errors import ConfigError
from fedsparse.federation import FedConfig, run_federation
from fedsparse.nn import mlp
from fedsparse.seeding import rng_for


class TestMakeSynthetic:
    def test_split_arithmetic(self):
        train, test = make_synthetic(4, 8, 10, 3.0, seed=0)
        assert len(train) == 32 and len(test) == 8
        assert train.split == "train" and test.split == "test"

    def test_determinism(self):
        a = make_synthetic(3, 5, 20, 2.0, seed=7)
        b = make_synthetic(3, 5, 20, 2.0, seed=7)
        assert np.array_equal(a[0].inputs, b[0].inputs)
        assert np.array_equal(a[1].labels, b[1].labels)

    def test_different_seeds_differ(self):
        a, _ = make_synthetic(3, 5, 20, 2.0, seed=7)
        b, _ = make_synthetic(3, 5, 20, 2.0, seed=8)
        assert not np.array_equal(a.inputs, b.inputs)

    def test_margin_must_be_positive(self):
        with pytest.raises(ConfigError):
            make_synthetic(3, 5, 10, 0.0, seed=0)

    def test_label_range(self):
        train, test = make_synthetic(5, 4, 12, 2.0, seed=1)
        for ds in (train, test):
            assert ds.labels.min() >= 0 and ds.labels.max() == 4

    def test_large_margin_is_linearly_learnable(self):
        """Oracle: a dense reference model trained centrally must reach 99%."""
        train, test = make_synthetic(2, 8, 200, 6.0, seed=3)
        part = lda_partition(train.labels, 1, 1000.0, seed=3)
        cfg = FedConfig(rounds=15, clients_total=1, clients_per_round=1,
                        algorithm="dense", local_epochs=2,
                        lr_start=0.3, lr_end=0.05, global_seed=3)
        model = mlp(8, [16], 2, seed=3)
        result = run_federation(cfg, model, train, test, part)
        assert result.final_accuracy >= 0.99


class TestLdaPartition:
    def test_single_client_holds_everything(self):
        labels = np.repeat(np.arange(4), 25)
        part = lda_partition(labels, 1, 0.5, seed=0)
        assert len(part) == 1
        assert np.array_equal(np.sort(part[0]), np.arange(100))

    def test_disjoint_cover(self):
        labels = np.repeat(np.arange(5), 40)
        part = lda_partition(labels, 8, 0.5, seed=1)
        merged = np.concatenate(part)
        assert merged.size == labels.size
        assert np.array_equal(np.sort(merged), np.arange(labels.size))

    def test_sample_count_conservation(self):
        labels = np.repeat(np.arange(3), 30)
        part = lda_partition(labels, 5, 10.0, seed=2)
        assert sum(p.size for p in part) == labels.size

    def test_no_empty_clients(self):
        labels = np.repeat(np.arange(10), 50)
        for seed in range(5):
            part = lda_partition(labels, 25, 0.1, seed=seed)
            assert all(p.size > 0 for p in part)

    def test_determinism(self):
        labels = np.repeat(np.arange(4), 50)
        a = lda_partition(labels, 10, 0.5, seed=11)
        b = lda_partition(labels, 10, 0.5, seed=11)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    def test_invalid_alpha(self):
        with pytest.raises(ConfigError):
            lda_partition(np.zeros(10, dtype=int), 2, 0.0, seed=0)

    def test_iid_alpha_matches_global_histogram(self):
        """alpha = 1e3 is IID: >=95% of 100 clients within TV 0.2 of global."""
        labels = np.repeat(np.arange(10), 2000)
        global_hist = np.full(10, 0.1)
        ok = total = 0
        for seed in range(3):
            part = lda_partition(labels, 100, 1000.0, seed=seed)
            for idx in part:
                h = np.bincount(labels[idx], minlength=10).astype(float)
                h /= h.sum()
                ok += 0.5 * np.abs(h - global_hist).sum() <= 0.2
                total += 1
        assert ok / total >= 0.95

    def test_heterogeneity_monotone_in_alpha(self):
        labels = np.repeat(np.arange(5), 80)

        def mean_tv(alpha):
            vals = []
            for seed in range(10):
                part = lda_partition(labels, 10, alpha, seed=seed)
                hists = []
                for idx in part:
                    h = np.bincount(labels[idx], minlength=5).astype(float)
                    hists.append(h / h.sum())
                vals.extend(0.5 * np.abs(hists[i] - hists[j]).sum()
                            for i in range(10) for j in range(i + 1, 10))
            return float(np.mean(vals))

        assert mean_tv(0.1) > mean_tv(1.0) > mean_tv(1000.0)


class TestBatches:
    def test_single_partial_batch(self):
        batches = batch_indices(10, 16, rng_for(0, "b"))
        assert len(batches) == 1 and batches[0].size == 10

    def test_two_full_batches(self):
        batches = batch_indices(32, 16, rng_for(0, "b"))
        assert [b.size for b in batches] == [16, 16]

    def test_final_partial_included(self):
        batches = batch_indices(20, 16, rng_for(0, "b"))
        assert [b.size for b in batches] == [16, 4]

    def test_same_seed_same_sequence(self):
        a = batch_indices(40, 8, rng_for(3, "b"))
        b = batch_indices(40, 8, rng_for(3, "b"))
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    def test_each_sample_once(self):
        batches = batch_indices(23, 5, rng_for(1, "b"))
        merged = np.sort(np.concatenate(batches))
        assert np.array_equal(merged, np.arange(23))


class TestCsv:
    def test_roundtrip(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("f0,f1,label\n0.5,-1.25,0\n2.0,3.5,1\n1.0,0.0,1\n-1.0,2.0,0\n")
        inputs, labels = load_csv(str(path))
        assert inputs.shape == (4, 2)
        assert inputs[1, 1] == 3.5
        assert labels.tolist() == [0, 1, 1, 0]

    def test_split_is_stratified(self, tmp_path):
        rows = ["f0,label"] + [f"{i}.0,{i % 2}" for i in range(20)]
        path = tmp_path / "d.csv"
        path.write_text("\n".join(rows) + "\n")
        inputs, labels = load_csv(str(path))
        train, test = split_dataset(inputs, labels, seed=5)
        assert len(train) == 16 and len(test) == 4
        assert np.bincount(test.labels).tolist() == [2, 2]

    def test_bad_row_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("f0,label\n1.0,0\nnope,1\n")
        with pytest.raises(ConfigError, match="3"):
            load_csv(str(path))

    def test_ragged_row_rejected(self, tmp_path):
        path = tmp_path / "ragged.csv"
        path.write_text("f0,f1,label\n1.0,2.0,0\n1.0,1\n")
        with pytest.raises(ConfigError):
            load_csv(str(path))


class TestLabeledDataset:
    def test_mismatched_sizes_rejected(self):
        with pytest.raises(ConfigError):
            LabeledDataset(np.zeros((3, 2)), np.zeros(2, dtype=int))

    def test_subset(self):
        ds = LabeledDataset(np.arange(12.0).reshape(6, 2),
                            np.array([0, 1, 0, 1, 0, 1]))
        sub = ds.subset(np.array([1, 3]))
        assert np.array_equal(sub.labels, [1, 1])
