"""MAE / MAPE / RMSE over prediction streams, with per-horizon breakdown.

Missing cells are excluded everywhere.  Two filter policies:

  graph: additionally exclude truth == 0 cells from MAPE only (its denominator);
  grid:  additionally exclude truth < 10 cells from all three metrics.

Accumulation is mergeable so shards computed independently combine by
addition; the aggregate of each metric is the count-weighted combination of
its per-horizon pieces by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DegenerateInputError, ShapeError
from .series import SeriesTensor

POLICIES = ("graph", "grid")
GRID_FLOW_FLOOR = 10.0


@dataclass
class MetricAccumulator:
    """Additive per-horizon sums; merge shards with `merge`."""

    n_horizons: int
    policy: str = "graph"
    abs_sum: np.ndarray = field(init=False)
    sq_sum: np.ndarray = field(init=False)
    ape_sum: np.ndarray = field(init=False)
    count: np.ndarray = field(init=False)
    count_mape: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ConfigError(f"unknown policy {self.policy!r}, expected one of {POLICIES}")
        self.abs_sum = np.zeros(self.n_horizons)
        self.sq_sum = np.zeros(self.n_horizons)
        self.ape_sum = np.zeros(self.n_horizons)
        self.count = np.zeros(self.n_horizons, dtype=np.int64)
        self.count_mape = np.zeros(self.n_horizons, dtype=np.int64)

    def update(self, truth: SeriesTensor, pred: SeriesTensor) -> None:
        if truth.shape != pred.shape:
            raise ShapeError(f"shape mismatch {truth.shape} vs {pred.shape}")
        if truth.n_steps != self.n_horizons:
            raise ShapeError(f"expected {self.n_horizons} horizons, got {truth.n_steps}")
        joint = truth.mask & pred.mask
        y = truth.values
        if self.policy == "grid":
            counted = joint & (y >= GRID_FLOW_FLOOR)
            counted_mape = counted
        else:
            counted = joint
            counted_mape = joint & (y != 0.0)
        err = np.where(counted, pred.values - y, 0.0)
        self.abs_sum += np.abs(err).sum(axis=(0, 2))
        self.sq_sum += (err * err).sum(axis=(0, 2))
        denom = np.where(counted_mape, y, 1.0)
        ape = np.where(counted_mape, np.abs(pred.values - y) / np.abs(denom), 0.0)
        self.ape_sum += ape.sum(axis=(0, 2))
        self.count += counted.sum(axis=(0, 2))
        self.count_mape += counted_mape.sum(axis=(0, 2))

    def merge(self, other: "MetricAccumulator") -> "MetricAccumulator":
        if other.n_horizons != self.n_horizons or other.policy != self.policy:
            raise ShapeError("cannot merge accumulators with different horizons or policy")
        out = MetricAccumulator(self.n_horizons, self.policy)
        for name in ("abs_sum", "sq_sum", "ape_sum", "count", "count_mape"):
            setattr(out, name, getattr(self, name) + getattr(other, name))
        return out

    def report(self) -> "MetricReport":
        total = int(self.count.sum())
        if total == 0:
            raise DegenerateInputError("no cells pass the mask and filter policy")
        total_mape = int(self.count_mape.sum())
        with np.errstate(invalid="ignore", divide="ignore"):
            mae_h = np.where(self.count > 0, self.abs_sum / np.maximum(self.count, 1), np.nan)
            rmse_h = np.where(
                self.count > 0, np.sqrt(self.sq_sum / np.maximum(self.count, 1)), np.nan
            )
            mape_h = np.where(
                self.count_mape > 0,
                100.0 * self.ape_sum / np.maximum(self.count_mape, 1),
                np.nan,
            )
        return MetricReport(
            policy=self.policy,
            mae=float(self.abs_sum.sum() / total),
            rmse=float(np.sqrt(self.sq_sum.sum() / total)),
            mape_pct=float(100.0 * self.ape_sum.sum() / total_mape) if total_mape else float("nan"),
            mae_by_horizon=mae_h,
            rmse_by_horizon=rmse_h,
            mape_pct_by_horizon=mape_h,
            count_by_horizon=self.count.copy(),
            count_mape_by_horizon=self.count_mape.copy(),
        )


@dataclass(frozen=True)
class MetricReport:
    """Aggregates plus per-horizon arrays and the counts that produced them."""

    policy: str
    mae: float
    mape_pct: float
    rmse: float
    mae_by_horizon: np.ndarray
    mape_pct_by_horizon: np.ndarray
    rmse_by_horizon: np.ndarray
    count_by_horizon: np.ndarray
    count_mape_by_horizon: np.ndarray

    @property
    def n_horizons(self) -> int:
        return len(self.mae_by_horizon)


def compute_metrics(
    truths: Iterable[SeriesTensor] | Sequence[SeriesTensor],
    preds: Iterable[SeriesTensor] | Sequence[SeriesTensor],
    policy: str = "graph",
) -> MetricReport:
    """Metrics over aligned truth/prediction streams."""
    acc: MetricAccumulator | None = None
    n = 0
    for truth, pred in zip(truths, preds, strict=True):
        if acc is None:
            acc = MetricAccumulator(truth.n_steps, policy)
        acc.update(truth, pred)
        n += 1
    if acc is None:
        raise DegenerateInputError("empty prediction stream")
    return acc.report()
