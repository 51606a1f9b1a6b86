"""Dense multivariate series tensors with missing-value masks.

A SeriesTensor holds an (n_nodes, n_steps, n_channels) value grid in C order
(node-major, then time, then channel) alongside a boolean mask where True
marks an observed cell.  Masked-out cells always hold 0.0 internally so that
elementwise arithmetic never propagates garbage; every reduction consults the
mask instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, ShapeError

FLOAT_DTYPES = (np.float32, np.float64)


def _canonical(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    # Zero fill at masked cells; keeps downstream arithmetic NaN-free.
    out = np.where(mask, values, values.dtype.type(0.0))
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class SeriesTensor:
    """Immutable (n_nodes, n_steps, n_channels) grid plus observation mask."""

    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        v = self.values
        m = self.mask
        if v.ndim != 3:
            raise ShapeError(f"values must be 3-d (nodes, steps, channels), got ndim={v.ndim}")
        if v.shape != m.shape:
            raise ShapeError(f"mask shape {m.shape} != values shape {v.shape}")
        if min(v.shape) < 1:
            raise ShapeError(f"all dimensions must be positive, got {v.shape}")
        if v.dtype.type not in FLOAT_DTYPES:
            raise ShapeError(f"values must be float32 or float64, got {v.dtype}")
        if not np.all(np.isfinite(v[m])):
            raise ShapeError("observed values must be finite")

    @classmethod
    def of(cls, values, mask=None, dtype=np.float64) -> "SeriesTensor":
        """Build from an array-like.

        Without an explicit mask, non-finite cells become missing.  An explicit
        mask must only mark finite cells as observed.
        """
        v = np.ascontiguousarray(values, dtype=dtype)
        if mask is None:
            m = np.isfinite(v)
        else:
            m = np.ascontiguousarray(mask, dtype=bool).copy()
        m.setflags(write=False)
        return cls(values=_canonical(v, m), mask=m)

    @property
    def n_nodes(self) -> int:
        return self.values.shape[0]

    @property
    def n_steps(self) -> int:
        return self.values.shape[1]

    @property
    def n_channels(self) -> int:
        return self.values.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    @property
    def dtype(self):
        return self.values.dtype

    def all_observed(self) -> bool:
        return bool(self.mask.all())

    def with_values(self, values: np.ndarray) -> "SeriesTensor":
        """Same mask, new values (masked cells re-zeroed)."""
        v = np.ascontiguousarray(values, dtype=self.dtype)
        if v.shape != self.shape:
            raise ShapeError(f"replacement values shape {v.shape} != {self.shape}")
        return SeriesTensor(values=_canonical(v, self.mask), mask=self.mask)

    def steps(self, start: int, stop: int) -> "SeriesTensor":
        """Contiguous copy of time steps [start, stop)."""
        if not (0 <= start < stop <= self.n_steps):
            raise ShapeError(f"step range [{start}, {stop}) outside 0..{self.n_steps}")
        v = np.ascontiguousarray(self.values[:, start:stop])
        m = np.ascontiguousarray(self.mask[:, start:stop])
        v.setflags(write=False)
        m.setflags(write=False)
        return SeriesTensor(values=v, mask=m)


@dataclass(frozen=True)
class NodeVector:
    """One scalar per node, e.g. the per-node adaptive correction scale."""

    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 1:
            raise ShapeError(f"node vector must be 1-d, got ndim={self.values.ndim}")
        if not np.all(np.isfinite(self.values)):
            raise ShapeError("node vector values must be finite")

    @classmethod
    def of(cls, values, dtype=np.float64) -> "NodeVector":
        v = np.ascontiguousarray(values, dtype=dtype)
        v.setflags(write=False)
        return cls(values=v)

    @classmethod
    def zeros(cls, n_nodes: int, dtype=np.float64) -> "NodeVector":
        return cls.of(np.zeros(n_nodes, dtype=dtype), dtype=dtype)

    @classmethod
    def ones(cls, n_nodes: int, dtype=np.float64) -> "NodeVector":
        return cls.of(np.ones(n_nodes, dtype=dtype), dtype=dtype)

    @property
    def n_nodes(self) -> int:
        return self.values.shape[0]


def broadcast_scale(t: SeriesTensor, v: NodeVector) -> SeriesTensor:
    """Scale every (time, channel) cell of node n by v[n]; mask is unchanged."""
    if v.n_nodes != t.n_nodes:
        raise ShapeError(f"node vector length {v.n_nodes} != n_nodes {t.n_nodes}")
    scaled = t.values * v.values.astype(t.dtype)[:, None, None]
    return SeriesTensor(values=_canonical(scaled, t.mask), mask=t.mask)


def add(a: SeriesTensor, b: SeriesTensor) -> SeriesTensor:
    """Elementwise sum; a cell missing in either input is missing in the output."""
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    mask = a.mask & b.mask
    mask.setflags(write=False)
    return SeriesTensor(values=_canonical(a.values + b.values, mask), mask=mask)


def masked_mse(y: SeriesTensor, yhat: SeriesTensor) -> float:
    """Mean squared difference over cells observed in both tensors.

    The divisor is the joint observed count, which equals n_nodes * n_steps *
    n_channels when nothing is missing.
    """
    if y.shape != yhat.shape:
        raise ShapeError(f"shape mismatch {y.shape} vs {yhat.shape}")
    joint = y.mask & yhat.mask
    count = int(joint.sum())
    if count == 0:
        raise DegenerateInputError("masked_mse needs at least one jointly observed cell")
    diff = np.where(joint, y.values - yhat.values, 0.0)
    return float(np.sum(diff * diff) / count)
