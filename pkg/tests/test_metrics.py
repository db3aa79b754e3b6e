"""Round measurement: communication, IoU matrix, movement stats, evaluation."""

from __future__ import annotations

import numpy as np
import pytest

from fedsparse.metrics import (comm_cost, cosine, evaluate, iou_matrix,
                               weight_movement, write_rounds_csv, CSV_COLUMNS)
from fedsparse.nn import mlp
from fedsparse.reparam import Powerprop
from fedsparse.sparsity import SparseMask, keep_count


class TestCommCost:
    def test_nnz_arithmetic(self):
        downlink, uplink = comm_cost(1000, [50, 50, 50])
        assert downlink == 1000 and uplink == 50.0

    def test_sparse_steady_state(self):
        k = keep_count(1000, 0.95)
        downlink, uplink = comm_cost(k, [k, k])
        assert downlink + uplink == 2 * k

    def test_zero_update(self):
        assert comm_cost(10, [0])[1] == 0.0

    def test_no_updates(self):
        assert comm_cost(10, [])[1] == 0.0


def bits(*values):
    arr = np.array(values, dtype=bool)
    return SparseMask(arr, [(0, arr.size)])


class TestIouMatrix:
    def test_constant_mask_all_ones(self):
        masks = [bits(1, 0, 1)] * 4
        assert np.array_equal(iou_matrix(masks), np.ones((4, 4)))

    def test_symmetric_unit_diagonal(self):
        masks = [bits(1, 1, 0, 0), bits(1, 0, 1, 0), bits(0, 0, 1, 1)]
        m = iou_matrix(masks)
        assert np.array_equal(m, m.T)
        assert np.array_equal(np.diag(m), np.ones(3))
        assert m[0, 1] == pytest.approx(1.0 / 3.0)


class TestWeightMovement:
    def test_stationary_round(self):
        w = np.array([1.0, -2.0, 3.0])
        g_l2, r_l2, r_cos, c_cos = weight_movement(np.zeros(3), w, w, [])
        assert r_l2 == 0.0
        assert r_cos == pytest.approx(1.0)
        assert g_l2 == pytest.approx(float(np.linalg.norm(w)))
        assert c_cos == 0.0

    def test_orthogonal_client_updates(self):
        w = np.ones(2)
        deltas = [np.array([1.0, 0.0]), np.array([0.0, 1.0])]
        *_, c_cos = weight_movement(w, w, w, deltas)
        assert c_cos == pytest.approx(0.0)

    def test_identical_client_updates(self):
        w = np.ones(3)
        d = np.array([0.5, -0.5, 1.0])
        *_, c_cos = weight_movement(w, w, w, [d, d.copy()])
        assert c_cos == pytest.approx(1.0)

    def test_zero_vector_cosine_defined_zero(self):
        assert cosine(np.zeros(3), np.ones(3)) == 0.0

    def test_cosines_bounded(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            a, b = rng.normal(size=8), rng.normal(size=8)
            assert -1.0 - 1e-12 <= cosine(a, b) <= 1.0 + 1e-12


class TestEvaluate:
    def test_random_model_near_chance(self):
        """Binomial oracle: accuracy within 3 sigma of 1/C on a balanced set."""
        classes, per_class = 4, 120
        model = mlp(6, [8], classes, seed=99)
        rng = np.random.default_rng(1)
        inputs = rng.normal(size=(classes * per_class, 6))
        labels = np.repeat(np.arange(classes), per_class)
        acc = evaluate(model, inputs, labels)
        p = 1.0 / classes
        sigma = np.sqrt(p * (1 - p) / labels.size)
        assert abs(acc - p) <= 3 * sigma

    def test_perfect_separator(self):
        model = mlp(3, [4], 3, seed=0)
        model.weights[0][...] = 0.0
        model.weights[1][...] = 0.0
        # wire input feature i directly to logit i through the hidden layer
        model.weights[0][:3, :3] = 50.0 * np.eye(3)
        model.weights[1][:3, :3] = 50.0 * np.eye(3)
        model.bump_version()
        inputs = np.eye(3)[np.array([0, 1, 2, 1, 0])]
        labels = np.array([0, 1, 2, 1, 0])
        assert evaluate(model, inputs, labels) == 1.0

    def test_zero_model_ties_break_to_class_zero(self):
        model = mlp(4, [5], 3, seed=0)
        for l in range(model.num_layers):
            model.weights[l][...] = 0.0
        model.bump_version()
        inputs = np.random.default_rng(2).normal(size=(10, 4))
        assert evaluate(model, inputs, np.full(10, 2)) == 0.0
        assert evaluate(model, inputs, np.zeros(10, dtype=int)) == 1.0

    def test_reparam_is_part_of_forward_semantics(self):
        model = mlp(4, [5], 3, seed=1)
        rng = np.random.default_rng(3)
        inputs = rng.normal(size=(20, 4))
        labels = rng.integers(0, 3, size=20)
        a = evaluate(model, inputs, labels, Powerprop(2.0))
        b = evaluate(model, inputs, labels)
        # different effective networks may disagree; both must be valid rates
        assert 0.0 <= a <= 1.0 and 0.0 <= b <= 1.0


class TestCsvWriters:
    def test_rounds_csv_schema_and_determinism(self, tmp_path):
        from fedsparse.metrics import RoundReport
        rep = RoundReport(round=0, test_accuracy=0.5, global_sparsity=0.25,
                          per_layer_sparsity=[0.25], downlink_nnz=10,
                          uplink_nnz_mean=5.0, cumulative_comm_nnz=15.0,
                          mean_client_regrowth=1.5, global_l2_from_init=0.1,
                          round_l2=0.1, round_cosine=0.9, client_cosine_mean=0.8)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_rounds_csv([rep], p1)
        write_rounds_csv([rep], p2)
        assert p1.read_bytes() == p2.read_bytes()
        header = p1.read_text().splitlines()[0]
        assert header == ",".join(CSV_COLUMNS)
