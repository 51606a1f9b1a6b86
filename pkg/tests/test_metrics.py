import math

import numpy as np
import pytest

from adcsd.errors import ConfigError, DegenerateInputError, ShapeError
from adcsd.metrics import MetricAccumulator, compute_metrics

from conftest import tensor


def brute_force(truths, preds, policy):
    """Independent single-pass recomputation over every cell."""
    abs_sum = sq_sum = ape_sum = 0.0
    n = n_mape = 0
    for truth, pred in zip(truths, preds):
        for node in range(truth.n_nodes):
            for step in range(truth.n_steps):
                for ch in range(truth.n_channels):
                    if not (truth.mask[node, step, ch] and pred.mask[node, step, ch]):
                        continue
                    y = truth.values[node, step, ch]
                    if policy == "grid" and y < 10.0:
                        continue
                    err = abs(pred.values[node, step, ch] - y)
                    abs_sum += err
                    sq_sum += err * err
                    n += 1
                    if y != 0.0:
                        ape_sum += err / abs(y)
                        n_mape += 1
    return abs_sum / n, 100.0 * ape_sum / n_mape, math.sqrt(sq_sum / n)


def test_identity_is_zero(rng):
    y = [tensor(rng.uniform(1, 50, size=(3, 4, 1))) for _ in range(3)]
    m = compute_metrics(y, y)
    assert m.mae == m.mape_pct == m.rmse == 0.0


def test_hand_oracle():
    m = compute_metrics([tensor([10.0, 20.0])], [tensor([9.0, 22.0])])
    assert m.mae == pytest.approx(1.5)
    assert m.mape_pct == pytest.approx(10.0)
    assert m.rmse == pytest.approx(math.sqrt(2.5))


def test_grid_policy_drops_low_flow():
    m = compute_metrics([tensor([5.0, 20.0])], [tensor([0.0, 22.0])], policy="grid")
    assert m.mae == pytest.approx(2.0)
    assert int(m.count_by_horizon.sum()) == 1


def test_graph_policy_excludes_zero_truth_from_mape_only():
    m = compute_metrics([tensor([0.0, 10.0])], [tensor([1.0, 11.0])], policy="graph")
    assert m.mae == pytest.approx(1.0)  # both cells counted
    assert m.mape_pct == pytest.approx(10.0)  # only the nonzero-truth cell
    assert int(m.count_mape_by_horizon.sum()) == 1


def test_missing_values_excluded(rng):
    truth = tensor([np.nan, 10.0, 20.0])
    pred = tensor([99.0, 12.0, np.nan])
    m = compute_metrics([truth], [pred])
    assert m.mae == pytest.approx(2.0)
    assert int(m.count_by_horizon.sum()) == 1


def test_zero_counted_cells_raises():
    with pytest.raises(DegenerateInputError):
        compute_metrics([tensor([5.0])], [tensor([5.0])], policy="grid")


def test_unknown_policy_rejected():
    with pytest.raises(ConfigError):
        MetricAccumulator(3, policy="banana")


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        compute_metrics([tensor([1.0, 2.0])], [tensor([1.0])])


def test_per_horizon_count_weighted_average_is_aggregate(rng):
    truths, preds = [], []
    for _ in range(5):
        vals = rng.uniform(0, 50, size=(4, 6, 2))
        vals[rng.random(vals.shape) < 0.2] = np.nan
        truths.append(tensor(vals))
        preds.append(tensor(rng.uniform(0, 50, size=(4, 6, 2))))
    for policy in ("graph", "grid"):
        m = compute_metrics(truths, preds, policy)
        counts = m.count_by_horizon
        weighted = float(np.sum(m.mae_by_horizon * counts) / counts.sum())
        assert weighted == pytest.approx(m.mae, rel=1e-12)
        mape_counts = m.count_mape_by_horizon
        weighted_mape = float(np.sum(m.mape_pct_by_horizon * mape_counts) / mape_counts.sum())
        assert weighted_mape == pytest.approx(m.mape_pct, rel=1e-12)


def test_matches_brute_force_oracle(rng):
    truths, preds = [], []
    for _ in range(4):
        vals = rng.uniform(0, 30, size=(3, 5, 2))
        vals[rng.random(vals.shape) < 0.15] = np.nan
        truths.append(tensor(vals))
        preds.append(tensor(rng.uniform(0, 30, size=(3, 5, 2))))
    for policy in ("graph", "grid"):
        m = compute_metrics(truths, preds, policy)
        mae, mape, rmse = brute_force(truths, preds, policy)
        assert m.mae == pytest.approx(mae, rel=1e-9)
        assert m.mape_pct == pytest.approx(mape, rel=1e-9)
        assert m.rmse == pytest.approx(rmse, rel=1e-9)


def test_merge_equals_single_pass(rng):
    truths = [tensor(rng.uniform(1, 40, size=(2, 3, 1))) for _ in range(6)]
    preds = [tensor(rng.uniform(1, 40, size=(2, 3, 1))) for _ in range(6)]
    whole = MetricAccumulator(3)
    for t, p in zip(truths, preds):
        whole.update(t, p)
    left = MetricAccumulator(3)
    right = MetricAccumulator(3)
    for t, p in zip(truths[:2], preds[:2]):
        left.update(t, p)
    for t, p in zip(truths[2:], preds[2:]):
        right.update(t, p)
    merged = left.merge(right).report()
    single = whole.report()
    assert merged.mae == pytest.approx(single.mae, rel=1e-12)
    assert merged.rmse == pytest.approx(single.rmse, rel=1e-12)
    assert merged.mape_pct == pytest.approx(single.mape_pct, rel=1e-12)
