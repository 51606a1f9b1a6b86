"""Seasonal / trend-cyclical split of a forecast tensor along its time axis.

The trend part is a centered moving average over a replicate-padded time
series (so the length never changes); the seasonal part is the residual.
Their sum reconstructs the input exactly up to float rounding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigError
from .series import SeriesTensor, _canonical

DEFAULT_KERNEL = 3


@dataclass(frozen=True)
class DecompConfig:
    """Moving-average window length, in time steps.  Must be odd."""

    kernel: int = DEFAULT_KERNEL

    def __post_init__(self):
        if self.kernel < 1:
            raise ConfigError(f"kernel must be positive, got {self.kernel}")
        if self.kernel % 2 == 0:
            raise ConfigError(f"kernel must be odd, got {self.kernel}")


@dataclass(frozen=True)
class Decomposition:
    """Seasonal and trend-cyclical parts; seasonal + trend == input."""

    seasonal: SeriesTensor
    trend: SeriesTensor


def decompose(o: SeriesTensor, cfg: DecompConfig = DecompConfig()) -> Decomposition:
    """Split o into (seasonal, trend) of the same shape.

    trend[n, t, c] is the mean of the kernel-length window centered at t on the
    replicate-padded series of node n / channel c, taken over observed entries
    only.  Masked input cells stay masked in both parts.
    """
    if cfg.kernel > 2 * o.n_steps - 1:
        raise ConfigError(
            f"kernel {cfg.kernel} exceeds padded length for {o.n_steps} time steps"
        )
    trend_vals = _kernels.moving_average(o.values, o.mask, cfg.kernel)
    trend = SeriesTensor(values=_canonical(trend_vals, o.mask), mask=o.mask)
    seasonal_vals = np.asarray(o.values) - trend_vals
    seasonal = SeriesTensor(values=_canonical(seasonal_vals, o.mask), mask=o.mask)
    return Decomposition(seasonal=seasonal, trend=trend)
