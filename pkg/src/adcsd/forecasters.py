"""Frozen base forecasters and the external-predictions adapter.

All variants share a small streaming protocol driven by the harness:

    observe(steps)   feed newly revealed raw time steps (buffer/clock only,
                     never parameters -- the forecaster stays frozen);
    forecast(x)      pure: same inputs and buffer state give the same output;
    advance()        mark an entry boundary (only the external adapter cares).

`stream_forecasts` runs that protocol over a window sequence.
"""

from __future__ import annotations

import numpy as np

from .dataio import load_checkpoint, load_predictions, save_checkpoint
from .errors import ConfigError, ContractError, DataFormatError, ShapeError
from .series import SeriesTensor


class BaseForecaster:
    kind = "base"

    def forecast(self, x: SeriesTensor) -> SeriesTensor:
        raise NotImplementedError

    def observe(self, steps: SeriesTensor) -> None:
        pass

    def advance(self) -> None:
        pass

    def save(self, path) -> None:
        raise NotImplementedError


class SeasonalNaive(BaseForecaster):
    """Repeats the value from one period earlier.

    When the period exceeds the input window, forecasts come from a rolling
    buffer of the last `period` observed steps which the harness keeps fed;
    there are no trainable parameters either way.
    """

    kind = "seasonal-naive"

    def __init__(self, period: int, horizon: int, buffer: SeriesTensor):
        if buffer.n_steps != period:
            raise ShapeError(f"buffer holds {buffer.n_steps} steps, period is {period}")
        self.period = period
        self.horizon = horizon
        self.buffer = buffer

    def observe(self, steps: SeriesTensor) -> None:
        values = np.concatenate([self.buffer.values, steps.values], axis=1)
        mask = np.concatenate([self.buffer.mask, steps.mask], axis=1)
        start = values.shape[1] - self.period
        self.buffer = SeriesTensor.of(
            np.where(mask, values, np.nan)[:, start:], dtype=values.dtype
        )

    def forecast(self, x: SeriesTensor) -> SeriesTensor:
        source = x if self.period <= x.n_steps else self.buffer
        length = source.n_steps
        idx = [length - self.period + (h % self.period) for h in range(self.horizon)]
        vals = source.values[:, idx, :]
        mask = source.mask[:, idx, :]
        return SeriesTensor.of(np.where(mask, vals, np.nan))

    def save(self, path) -> None:
        meta = {"period": str(self.period), "horizon": str(self.horizon)}
        save_checkpoint(
            path,
            self.kind,
            meta,
            {
                "buffer": self.buffer.values,
                "buffer_mask": self.buffer.mask.astype(np.float64),
            },
        )


class HistoricalAverage(BaseForecaster):
    """Per-node, per-channel mean for each time-of-day slot."""

    kind = "hist-avg"

    def __init__(self, slots: int, horizon: int, means: np.ndarray, frontier: int):
        if means.ndim != 3 or means.shape[1] != slots:
            raise ShapeError(f"means must be (nodes, {slots}, channels), got {means.shape}")
        self.slots = slots
        self.horizon = horizon
        self.means = means
        self.frontier = frontier  # absolute index of the next unseen step

    def observe(self, steps: SeriesTensor) -> None:
        self.frontier += steps.n_steps

    def forecast(self, x: SeriesTensor) -> SeriesTensor:
        idx = [(self.frontier + h) % self.slots for h in range(self.horizon)]
        return SeriesTensor.of(self.means[:, idx, :])

    def save(self, path) -> None:
        meta = {
            "slots": str(self.slots),
            "horizon": str(self.horizon),
            "frontier": str(self.frontier),
        }
        save_checkpoint(path, self.kind, meta, {"means": self.means})


class AutoRegressive(BaseForecaster):
    """Per-node ridge AR over the input window, applied recursively.

    coeffs[n, c, j] multiplies the value j+1 steps back.  Missing input cells
    enter as 0 (their canonical fill).
    """

    kind = "ar"

    def __init__(self, window: int, horizon: int, coeffs: np.ndarray, ridge: float):
        if coeffs.ndim != 3 or coeffs.shape[2] != window:
            raise ShapeError(f"coeffs must be (nodes, channels, {window}), got {coeffs.shape}")
        self.window = window
        self.horizon = horizon
        self.coeffs = coeffs
        self.ridge = ridge

    def forecast(self, x: SeriesTensor) -> SeriesTensor:
        if x.n_steps < self.window:
            raise ShapeError(f"input window {x.n_steps} shorter than AR window {self.window}")
        # buf[..., j] holds the value j+1 steps back from the step being predicted
        buf = x.values[:, x.n_steps - self.window :, :][:, ::-1, :].transpose(0, 2, 1).copy()
        out = np.empty((x.n_nodes, self.horizon, x.n_channels))
        for h in range(self.horizon):
            pred = np.einsum("ncj,ncj->nc", self.coeffs, buf)
            out[:, h, :] = pred
            buf[:, :, 1:] = buf[:, :, :-1]
            buf[:, :, 0] = pred
        return SeriesTensor.of(out)

    def save(self, path) -> None:
        meta = {
            "window": str(self.window),
            "horizon": str(self.horizon),
            "ridge": format(self.ridge, ".17g"),
        }
        save_checkpoint(path, self.kind, meta, {"coeffs": self.coeffs})


class ExternalPredictions(BaseForecaster):
    """Pass-through for forecasts exported by some other model."""

    kind = "external"

    def __init__(self, predictions: list[SeriesTensor]):
        if not predictions:
            raise ConfigError("external predictions list is empty")
        self.predictions = predictions
        self.horizon = predictions[0].n_steps
        self.cursor = 0

    @classmethod
    def from_file(cls, path) -> "ExternalPredictions":
        return cls(load_predictions(path))

    def forecast(self, x: SeriesTensor) -> SeriesTensor:
        if self.cursor >= len(self.predictions):
            raise ConfigError(
                f"external predictions exhausted after {len(self.predictions)} entries"
            )
        return self.predictions[self.cursor]

    def advance(self) -> None:
        self.cursor += 1


def fit_seasonal_naive(history: SeriesTensor, horizon: int, period: int) -> SeasonalNaive:
    if period < 1:
        raise ConfigError(f"period must be positive, got {period}")
    if history.n_steps < period:
        raise ConfigError(f"need at least {period} history steps, got {history.n_steps}")
    return SeasonalNaive(period, horizon, history.steps(history.n_steps - period, history.n_steps))


def fit_historical_average(history: SeriesTensor, horizon: int, slots: int) -> HistoricalAverage:
    if slots < 1:
        raise ConfigError(f"slots-per-day must be positive, got {slots}")
    if history.n_steps < slots:
        raise ConfigError(f"need at least one day ({slots} steps), got {history.n_steps}")
    n, t, c = history.shape
    sums = np.zeros((n, slots, c))
    counts = np.zeros((n, slots, c))
    for s in range(slots):
        sel = np.arange(s, t, slots)
        sums[:, s, :] = (history.values[:, sel, :] * history.mask[:, sel, :]).sum(axis=1)
        counts[:, s, :] = history.mask[:, sel, :].sum(axis=1)
    if (counts == 0).any():
        raise ConfigError("some time-of-day slot has no observation for some node")
    return HistoricalAverage(slots, horizon, sums / counts, frontier=t)


def fit_autoregressive(
    history: SeriesTensor, horizon: int, window: int, ridge: float = 1e-3
) -> AutoRegressive:
    if window < 1:
        raise ConfigError(f"AR window must be positive, got {window}")
    if ridge < 0:
        raise ConfigError(f"ridge penalty must be nonnegative, got {ridge}")
    n, t, c = history.shape
    if t < window + horizon:
        raise ConfigError(f"need at least {window + horizon} history steps, got {t}")
    coeffs = np.empty((n, c, window))
    eye = np.eye(window)
    for node in range(n):
        for ch in range(c):
            v = history.values[node, :, ch]
            m = history.mask[node, :, ch]
            rows = []
            targets = []
            for step in range(window, t):
                if m[step] and m[step - window : step].all():
                    rows.append(v[step - window : step][::-1])
                    targets.append(v[step])
            if len(rows) < window:
                raise ConfigError(
                    f"node {node} channel {ch}: only {len(rows)} usable windows, need {window}"
                )
            design = np.array(rows)
            target = np.array(targets)
            gram = design.T @ design + ridge * eye
            try:
                coeffs[node, ch] = np.linalg.solve(gram, design.T @ target)
            except np.linalg.LinAlgError:
                raise ContractError(
                    f"node {node} channel {ch}: singular normal matrix; set ridge > 0"
                ) from None
    return AutoRegressive(window, horizon, coeffs, ridge)


FIT_KINDS = ("seasonal-naive", "hist-avg", "ar")


def fit_base(
    kind: str,
    history: SeriesTensor,
    horizon: int,
    period: int = 288,
    window: int = 12,
    ridge: float = 1e-3,
) -> BaseForecaster:
    """Dispatcher used by the CLI; `period` doubles as slots-per-day for hist-avg."""
    if kind == "seasonal-naive":
        return fit_seasonal_naive(history, horizon, period)
    if kind == "hist-avg":
        return fit_historical_average(history, horizon, period)
    if kind == "ar":
        return fit_autoregressive(history, horizon, window, ridge)
    raise ConfigError(f"unknown base model {kind!r}; expected one of {FIT_KINDS}")


def load_forecaster(path) -> BaseForecaster:
    kind, meta, sections = load_checkpoint(path)
    try:
        if kind == "seasonal-naive":
            mask = sections["buffer_mask"] > 0.5
            buf = SeriesTensor.of(np.where(mask, sections["buffer"], np.nan))
            return SeasonalNaive(int(meta["period"]), int(meta["horizon"]), buf)
        if kind == "hist-avg":
            return HistoricalAverage(
                int(meta["slots"]), int(meta["horizon"]), sections["means"], int(meta["frontier"])
            )
        if kind == "ar":
            return AutoRegressive(
                int(meta["window"]), int(meta["horizon"]), sections["coeffs"], float(meta["ridge"])
            )
    except KeyError as exc:
        raise DataFormatError(f"forecaster checkpoint missing field {exc}") from None
    raise DataFormatError(f"unknown forecaster kind {kind!r}")


def stream_forecasts(f: BaseForecaster, xs: list[SeriesTensor]) -> list[SeriesTensor]:
    """Run the observe/forecast/advance protocol over consecutive stride-1 windows."""
    out = []
    for k, x in enumerate(xs):
        f.observe(x if k == 0 else x.steps(x.n_steps - 1, x.n_steps))
        out.append(f.forecast(x))
        f.advance()
    return out
